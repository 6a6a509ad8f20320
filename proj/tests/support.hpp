#pragma once

#include <formnet/formnet.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace support {

/// Random connected graph: a random attachment tree plus extra edges, with
/// random edge orientations so sign conventions get exercised.
inline formnet::FormationGraph random_connected_graph(std::mt19937_64& rng, int min_n, int max_n,
                                                      int dimension = 2, double extra_prob = 0.4) {
    std::uniform_int_distribution<int> pick_n(min_n, max_n);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    formnet::FormationGraph g;
    g.agent_count = pick_n(rng);
    g.dimension = dimension;
    auto add_edge = [&](int a, int b) {
        formnet::Edge e;
        if (unit(rng) < 0.5) std::swap(a, b);
        e.tail = a;
        e.head = b;
        g.edges.push_back(e);
    };
    for (int v = 1; v < g.agent_count; ++v) {
        std::uniform_int_distribution<int> parent(0, v - 1);
        add_edge(parent(rng), v);
    }
    for (int a = 0; a < g.agent_count; ++a)
        for (int b = a + 1; b < g.agent_count; ++b) {
            bool present = false;
            for (const auto& e : g.edges)
                present |= (e.tail == a && e.head == b) || (e.tail == b && e.head == a);
            if (!present && unit(rng) < extra_prob) add_edge(a, b);
        }
    std::uniform_int_distribution<int> pick_leader(0, g.agent_count - 1);
    g.leader = pick_leader(rng);
    return g;
}

inline Eigen::MatrixXd random_positions(std::mt19937_64& rng, int n, int d, double span = 5.0) {
    std::uniform_real_distribution<double> coord(-span, span);
    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) m(i, c) = coord(rng);
    return m;
}

/// Dyadic rational weights (k/8 style) so spanning-tree weight sums are
/// exact in double arithmetic and oracle comparisons can use ==.
inline std::vector<double> random_dyadic_weights(std::mt19937_64& rng, std::size_t count) {
    std::uniform_int_distribution<int> numerator(1, 32);
    const std::array<double, 4> denominators{1.0, 2.0, 4.0, 8.0};
    std::uniform_int_distribution<std::size_t> pick_den(0, denominators.size() - 1);
    std::vector<double> w(count);
    for (auto& v : w) v = numerator(rng) / denominators[pick_den(rng)];
    return w;
}

/// Exhaustive minimum spanning weight: tries every (n-1)-subset of the
/// retained edges and keeps the lightest one that spans.
inline std::optional<double> exhaustive_min_spanning_weight(const formnet::FormationGraph& g,
                                                            const std::vector<int>& retained,
                                                            const std::vector<double>& weights) {
    const int need = g.agent_count - 1;
    if (static_cast<int>(retained.size()) < need) return std::nullopt;
    std::vector<int> choose(need);
    std::iota(choose.begin(), choose.end(), 0);
    std::optional<double> best;
    while (true) {
        formnet::UnionFind uf(g.agent_count);
        int merged = 0;
        double total = 0.0;
        for (int slot : choose) {
            const int e = retained[slot];
            if (uf.unite(g.edges[e].tail, g.edges[e].head)) ++merged;
            total += weights[e];
        }
        if (merged == need && (!best || total < *best)) best = total;
        // next combination
        int i = need - 1;
        while (i >= 0 && choose[i] == static_cast<int>(retained.size()) - need + i) --i;
        if (i < 0) break;
        ++choose[i];
        for (int j = i + 1; j < need; ++j) choose[j] = choose[j - 1] + 1;
    }
    return best;
}

/// Anchored weighted least squares through explicit matrix inverses; shares
/// no solver path with the library implementation.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> dense_anchored_oracle(
    const Eigen::MatrixXd& h, int reference, const Eigen::VectorXd& reference_position,
    const formnet::MeasurementSet& z) {
    const Eigen::Index d = z.dim();
    Eigen::MatrixXd hb(h.rows(), h.cols() - 1);
    Eigen::VectorXd hr = h.col(reference);
    for (Eigen::Index j = 0, slot = 0; j < h.cols(); ++j) {
        if (j == reference) continue;
        hb.col(slot++) = h.col(j);
    }
    Eigen::MatrixXd hb_l = formnet::kron_identity(hb, d);
    Eigen::MatrixXd hr_l = formnet::kron_identity(hr, d);
    Eigen::MatrixXd p_inv = Eigen::FullPivLU<Eigen::MatrixXd>(z.covariance).inverse();
    Eigen::MatrixXd normal = hb_l.transpose() * p_inv * hb_l;
    Eigen::MatrixXd sigma = Eigen::FullPivLU<Eigen::MatrixXd>(normal).inverse();
    Eigen::VectorXd shifted = formnet::stack_rows(z.values) - hr_l * reference_position;
    Eigen::VectorXd xb = sigma * (hb_l.transpose() * (p_inv * shifted));
    return {xb, sigma};
}

struct CommandResult {
    int exit_code = -1;
    std::string output;
};

/// Runs a shell command, merging stderr into the captured output.
inline CommandResult run_command(const std::string& command) {
    CommandResult result;
    FILE* pipe = popen((command + " 2>&1").c_str(), "r");
    if (!pipe) return result;
    char buf[4096];
    std::size_t got;
    while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0) result.output.append(buf, got);
    const int status = pclose(pipe);
    if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    return result;
}

inline std::string make_temp_dir() {
    char tmpl[] = "/tmp/formnet-test-XXXXXX";
    if (!mkdtemp(tmpl)) throw std::runtime_error("mkdtemp failed");
    return tmpl;
}

/// Five-agent ring-plus-chords formation used across the simulation tests:
/// minimally rigid in the plane (7 edges = 2n - 3).
inline formnet::Scenario pentagon_scenario() {
    formnet::Scenario s;
    s.graph.agent_count = 5;
    s.graph.dimension = 2;
    s.graph.leader = 0;
    const int pairs[7][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}, {0, 2}, {0, 3}};
    for (auto& p : pairs) {
        formnet::Edge e;
        e.tail = p[0];
        e.head = p[1];
        s.graph.edges.push_back(e);
    }
    s.offsets.resize(5, 2);
    const double pi = 3.14159265358979323846;
    for (int i = 0; i < 5; ++i) {
        const double angle = pi / 2.0 + 2.0 * pi * i / 5.0;
        s.offsets(i, 0) = 2.0 * std::cos(angle);
        s.offsets(i, 1) = 2.0 * std::sin(angle);
    }
    for (formnet::Edge& e : s.graph.edges) e.separation = formnet::target_separation(s.offsets, e);
    s.initial_positions.resize(5, 2);
    s.initial_positions << 0.5, 2.5, -2.3, 0.2, -0.8, -2.1, 1.6, -1.2, 2.4, 1.1;
    s.sigma = 0.01;
    s.step = 0.05;
    s.epochs = 50;
    s.seed = 42;
    return s;
}

}  // namespace support
