#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "formnet/types.hpp"

namespace formnet {

/// Per-link health bits for one epoch, in graph edge order.
struct LinkTokenVector {
    std::vector<bool> tokens;
    long epoch = 0;
};

/// Edges that delivered their packet this epoch (indices into graph edges).
struct HealthySubgraph {
    std::vector<int> retained;
    int healthy_count = 0;
};

struct SpanningTree {
    std::vector<int> edges;  // n-1 edge indices, ascending
    double total_weight = 0.0;
};

/// Raised when the healthy subgraph does not span all agents; carries the
/// vertex partition so callers can report which groups are cut off.
class DisconnectedError : public std::runtime_error {
public:
    explicit DisconnectedError(std::vector<std::vector<int>> parts)
        : std::runtime_error(describe(parts)), components_(std::move(parts)) {}

    const std::vector<std::vector<int>>& components() const { return components_; }

private:
    static std::string describe(const std::vector<std::vector<int>>& parts) {
        std::ostringstream os;
        os << "healthy links do not span the formation: " << parts.size() << " components";
        return os.str();
    }
    std::vector<std::vector<int>> components_;
};

/// Union-find with path compression and union by size.
class UnionFind {
public:
    explicit UnionFind(int n) : parent_(n), size_(n, 1) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }

    int find(int x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (size_[a] < size_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
        return true;
    }

private:
    std::vector<int> parent_;
    std::vector<int> size_;
};

inline HealthySubgraph prune_unhealthy(const FormationGraph& g, const LinkTokenVector& t) {
    if (static_cast<int>(t.tokens.size()) != g.edge_count())
        throw std::invalid_argument("token vector length does not match edge count");
    HealthySubgraph q;
    for (int k = 0; k < g.edge_count(); ++k)
        if (t.tokens[k]) q.retained.push_back(k);
    q.healthy_count = static_cast<int>(q.retained.size());
    return q;
}

inline std::vector<std::vector<int>> component_partition(const FormationGraph& g, UnionFind& uf) {
    std::vector<std::vector<int>> groups;
    std::vector<int> root_slot(g.agent_count, -1);
    for (int v = 0; v < g.agent_count; ++v) {
        int r = uf.find(v);
        if (root_slot[r] < 0) {
            root_slot[r] = static_cast<int>(groups.size());
            groups.emplace_back();
        }
        groups[root_slot[r]].push_back(v);
    }
    return groups;
}

/// Kruskal over the retained edges with explicit per-edge weights.
/// Ties break on (weight, edge index), so identical inputs always produce
/// the same tree.
inline SpanningTree build_mst(const FormationGraph& g, const HealthySubgraph& healthy,
                              std::span<const double> weights) {
    if (static_cast<int>(weights.size()) != g.edge_count())
        throw std::invalid_argument("weight vector length does not match edge count");
    std::vector<int> order = healthy.retained;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (weights[a] != weights[b]) return weights[a] < weights[b];
        return a < b;
    });
    UnionFind uf(g.agent_count);
    SpanningTree tree;
    for (int k : order) {
        if (uf.unite(g.edges[k].tail, g.edges[k].head)) {
            tree.edges.push_back(k);
            tree.total_weight += weights[k];
        }
    }
    if (static_cast<int>(tree.edges.size()) != g.agent_count - 1)
        throw DisconnectedError(component_partition(g, uf));
    std::sort(tree.edges.begin(), tree.edges.end());
    return tree;
}

/// MST using the weights stored on the graph; every edge must carry one.
inline SpanningTree build_mst(const FormationGraph& g, const HealthySubgraph& healthy) {
    std::vector<double> w(g.edge_count());
    for (int k = 0; k < g.edge_count(); ++k) {
        if (!g.edges[k].weight)
            throw std::invalid_argument("edge " + std::to_string(k) + " has no static weight");
        w[k] = *g.edges[k].weight;
    }
    return build_mst(g, healthy, w);
}

}  // namespace formnet
