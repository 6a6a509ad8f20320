#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"

using namespace formnet;
using Catch::Matchers::ContainsSubstring;
using formnet::io::ordered_json;

namespace {

const std::string kCli = FORMNET_CLI_PATH;
const std::string kScenarioDir = FORMNET_SCENARIO_DIR;

std::string scenario(const char* name) { return kScenarioDir + "/" + name + ".json"; }

ordered_json base_triangle_json() {
    ordered_json j;
    j["agents"] = {{"count", 3}, {"dimension", 2}};
    j["edges"] = ordered_json::array({ordered_json::array({1, 2}), ordered_json::array({2, 3}),
                                      ordered_json::array({1, 3})});
    j["leader"] = 1;
    j["desired_offsets"] = ordered_json::array({ordered_json::array({0.0, 0.0}),
                                                ordered_json::array({1.0, 0.0}),
                                                ordered_json::array({0.5, 0.9})});
    j["initial_positions"] = ordered_json::array({ordered_json::array({0.1, 0.0}),
                                                  ordered_json::array({1.2, 0.1}),
                                                  ordered_json::array({0.4, 1.1})});
    j["epochs"] = 10;
    j["seed"] = 3;
    return j;
}

std::string write_scenario(const std::string& dir, const ordered_json& j) {
    const std::string path = dir + "/scenario.json";
    io::write_file(path, j.dump(2) + "\n");
    return path;
}

}  // namespace

TEST_CASE("rigidity subcommand reports the verdict through the exit code") {
    auto rigid = support::run_command(kCli + " rigidity --scenario " +
                                      scenario("pentagon-persistent-loss"));
    REQUIRE(rigid.exit_code == 0);
    REQUIRE_THAT(rigid.output, ContainsSubstring("-> RIGID"));

    const std::string dir = support::make_temp_dir();
    ordered_json square = base_triangle_json();
    square["agents"]["count"] = 4;
    square["edges"] = ordered_json::array(
        {ordered_json::array({1, 2}), ordered_json::array({2, 3}), ordered_json::array({3, 4}),
         ordered_json::array({4, 1})});
    square["desired_offsets"] = ordered_json::array(
        {ordered_json::array({0.0, 0.0}), ordered_json::array({1.1, 0.1}),
         ordered_json::array({0.9, 1.2}), ordered_json::array({-0.1, 0.95})});
    square["initial_positions"] = square["desired_offsets"];
    auto flexible = support::run_command(kCli + " rigidity --scenario " + write_scenario(dir, square));
    REQUIRE(flexible.exit_code == 2);
    REQUIRE_THAT(flexible.output, ContainsSubstring("rank 4 / required 5") &&
                                      ContainsSubstring("NOT RIGID"));
}

TEST_CASE("simulate writes a bundle the validator accepts") {
    const std::string dir = support::make_temp_dir();
    auto run = support::run_command(kCli + " simulate --scenario " +
                                    scenario("pentagon-persistent-loss") + " --out " + dir + "/a");
    REQUIRE(run.exit_code == 0);
    REQUIRE_THAT(run.output, ContainsSubstring("final formation error"));

    auto check = support::run_command(kCli + " validate --out " + dir + "/a");
    REQUIRE(check.exit_code == 0);
    REQUIRE_THAT(check.output, ContainsSubstring("VALIDATED") && ContainsSubstring("50 epochs"));

    SECTION("reruns are byte-identical") {
        auto rerun = support::run_command(kCli + " simulate --scenario " +
                                          scenario("pentagon-persistent-loss") + " --out " + dir + "/b");
        REQUIRE(rerun.exit_code == 0);
        REQUIRE(io::read_file(dir + "/a/timeseries.csv") == io::read_file(dir + "/b/timeseries.csv"));
        REQUIRE(io::read_file(dir + "/a/summary.json") == io::read_file(dir + "/b/summary.json"));
    }
    SECTION("tampered aggregates are caught") {
        ordered_json doc = ordered_json::parse(io::read_file(dir + "/a/summary.json"));
        doc["aggregates"]["mean_cov_trace"] = doc["aggregates"]["mean_cov_trace"].get<double>() * 1.0000001;
        io::write_file(dir + "/a/summary.json", doc.dump(2) + "\n");
        auto bad = support::run_command(kCli + " validate --out " + dir + "/a");
        REQUIRE(bad.exit_code == 2);
        REQUIRE_THAT(bad.output, ContainsSubstring("INVALID") &&
                                     ContainsSubstring("mean_cov_trace"));
    }
    SECTION("missing bundle is an error, not a verdict") {
        auto missing = support::run_command(kCli + " validate --out " + dir + "/nowhere");
        REQUIRE(missing.exit_code == 1);
    }
}

TEST_CASE("seed precedence is flag, then environment, then file") {
    const std::string dir = support::make_temp_dir();
    auto seed_of = [&](const std::string& bundle) {
        ordered_json doc = ordered_json::parse(io::read_file(bundle + "/summary.json"));
        return std::pair<std::uint64_t, std::string>(doc["run"]["seed"].get<std::uint64_t>(),
                                                     doc["run"]["seed_source"].get<std::string>());
    };
    const std::string base = kCli + " simulate --scenario " + scenario("bernoulli-sweep");

    auto file_run = support::run_command(base + " --out " + dir + "/file");
    REQUIRE(file_run.exit_code == 0);
    REQUIRE(seed_of(dir + "/file") == std::pair<std::uint64_t, std::string>(7, "scenario"));

    auto env_run = support::run_command("FORMNET_SEED=777 " + base + " --out " + dir + "/env");
    REQUIRE(env_run.exit_code == 0);
    REQUIRE(seed_of(dir + "/env") == std::pair<std::uint64_t, std::string>(777, "env"));

    auto flag_run = support::run_command("FORMNET_SEED=777 " + base + " --seed 123 --out " + dir + "/flag");
    REQUIRE(flag_run.exit_code == 0);
    REQUIRE(seed_of(dir + "/flag") == std::pair<std::uint64_t, std::string>(123, "flag"));

    auto bad_env = support::run_command("FORMNET_SEED=abc " + base + " --out " + dir + "/badenv");
    REQUIRE(bad_env.exit_code == 1);
    REQUIRE_THAT(bad_env.output, ContainsSubstring("FORMNET_SEED"));
}

TEST_CASE("json format adds a second time series file") {
    const std::string dir = support::make_temp_dir();
    ordered_json j = base_triangle_json();
    auto run = support::run_command(kCli + " simulate --scenario " + write_scenario(dir, j) +
                                    " --format json --out " + dir + "/out");
    REQUIRE(run.exit_code == 0);
    REQUIRE_NOTHROW(io::read_file(dir + "/out/timeseries.csv"));
    ordered_json ts = ordered_json::parse(io::read_file(dir + "/out/timeseries.json"));
    REQUIRE(ts.is_array());
    REQUIRE(ts.size() == 10);
    REQUIRE(ts[0]["epoch"] == 0);
}

TEST_CASE("compare ranks strategies under one shared seed") {
    const std::string dir = support::make_temp_dir();
    auto run = support::run_command(kCli + " compare --scenario " + scenario("strategy-compare") +
                                    " --out " + dir);
    REQUIRE(run.exit_code == 0);
    REQUIRE_THAT(run.output, ContainsSubstring("token streams identical: yes"));

    ordered_json doc = ordered_json::parse(io::read_file(dir + "/comparison.json"));
    REQUIRE(doc["token_streams_identical"] == true);
    REQUIRE(doc["combination_improves"] == true);
    REQUIRE(doc["tie"] == false);
    REQUIRE(doc["ranking"][0] == "combination:0.5");
    REQUIRE(doc["strategies"].size() == 3);
    for (const auto& row : doc["strategies"]) {
        const std::string bundle = dir + "/" + row["bundle_dir"].get<std::string>();
        auto check = support::run_command(kCli + " validate --out " + bundle);
        REQUIRE(check.exit_code == 0);
    }
}

TEST_CASE("compare reports an exact tie when loss never hits") {
    const std::string dir = support::make_temp_dir();
    ordered_json j = base_triangle_json();
    j["epochs"] = 30;
    auto run = support::run_command(kCli + " compare --scenario " + write_scenario(dir, j) +
                                    " --out " + dir + "/out");
    REQUIRE(run.exit_code == 0);
    REQUIRE_THAT(run.output, ContainsSubstring("all strategies tie exactly"));
    ordered_json doc = ordered_json::parse(io::read_file(dir + "/out/comparison.json"));
    REQUIRE(doc["tie"] == true);
}

TEST_CASE("compare rejects bad strategy lists") {
    const std::string dir = support::make_temp_dir();
    auto bad_gamma = support::run_command(kCli + " compare --scenario " +
                                          scenario("strategy-compare") + " --out " + dir +
                                          " --strategies combination:1.5");
    REQUIRE(bad_gamma.exit_code == 1);
    REQUIRE_THAT(bad_gamma.output, ContainsSubstring("gamma out of range"));

    auto duplicate = support::run_command(kCli + " compare --scenario " +
                                          scenario("strategy-compare") + " --out " + dir +
                                          " zero zero");
    REQUIRE(duplicate.exit_code == 1);
    REQUIRE_THAT(duplicate.output, ContainsSubstring("duplicate strategy"));
}

TEST_CASE("mst subcommand prints the tree or the partition") {
    const std::string dir = support::make_temp_dir();
    ordered_json j = base_triangle_json();
    j["edges"] = ordered_json::array({ordered_json::array({1, 2, 1.0}),
                                      ordered_json::array({2, 3, 2.0}),
                                      ordered_json::array({1, 3, 3.0})});
    const std::string path = write_scenario(dir, j);

    auto healthy = support::run_command(kCli + " mst --scenario " + path);
    REQUIRE(healthy.exit_code == 0);
    REQUIRE_THAT(healthy.output, ContainsSubstring("tree edges: (1,2) (2,3)") &&
                                     ContainsSubstring("total weight: 3"));

    auto cut = support::run_command(kCli + " mst --scenario " + path + " --failed 1-2,1-3");
    REQUIRE(cut.exit_code == 2);
    REQUIRE_THAT(cut.output, ContainsSubstring("DISCONNECTED: {1} | {2,3}"));

    auto tokens = support::run_command(kCli + " mst --scenario " + path + " --tokens 011");
    REQUIRE(tokens.exit_code == 0);
    REQUIRE_THAT(tokens.output, ContainsSubstring("tree edges: (2,3) (1,3)"));

    auto short_tokens = support::run_command(kCli + " mst --scenario " + path + " --tokens 01");
    REQUIRE(short_tokens.exit_code == 1);
    REQUIRE_THAT(short_tokens.output, ContainsSubstring("bitstring length mismatch"));

    auto both = support::run_command(kCli + " mst --scenario " + path + " --tokens 011 --failed 1-2");
    REQUIRE(both.exit_code == 1);

    auto not_edge = support::run_command(kCli + " mst --scenario " + path + " --failed 9-9");
    REQUIRE(not_edge.exit_code == 1);
}

TEST_CASE("simulate surfaces scenario and runtime failures") {
    const std::string dir = support::make_temp_dir();
    SECTION("unknown key is named") {
        ordered_json j = base_triangle_json();
        j["thrust"] = 1;
        auto run = support::run_command(kCli + " simulate --scenario " + write_scenario(dir, j) +
                                        " --out " + dir + "/out");
        REQUIRE(run.exit_code == 1);
        REQUIRE_THAT(run.output, ContainsSubstring("unknown key 'thrust'"));
    }
    SECTION("halting run exits with the negative-verdict code") {
        auto run = support::run_command(kCli + " simulate --scenario " + scenario("disconnect-demo") +
                                        " --out " + dir + "/halt");
        REQUIRE(run.exit_code == 2);
        REQUIRE_THAT(run.output, ContainsSubstring("halted") && ContainsSubstring("epoch 10"));
        ordered_json doc = ordered_json::parse(io::read_file(dir + "/halt/summary.json"));
        REQUIRE(doc["run"]["halted"] == true);
        REQUIRE(doc["run"]["halted_epoch"] == 10);
    }
    SECTION("missing subcommand or file is a usage error") {
        auto none = support::run_command(kCli);
        REQUIRE(none.exit_code == 1);
        auto missing = support::run_command(kCli + " simulate --scenario " + dir + "/none.json");
        REQUIRE(missing.exit_code == 1);
    }
}
