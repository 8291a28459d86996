// Tests for the command-line layer: scenario-document parsing (schema and
// rejection messages), the subcommand/exit-code contract, deterministic
// output bytes, and golden-scenario behavior, exercised through the real
// binary where the contract is about processes.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "hkdelay/scenario_json.hpp"

using namespace hkdelay;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string scenario_text(const std::string& name) {
    return read_file(fs::path(HKDELAY_SCENARIO_DIR) / name);
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() /
                         ("hkdelay_cli_" + std::to_string(::getpid()) + "_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct CliResult {
    int exit_code = -1;
    std::string log;
};

// Runs the built binary through the shell, capturing exit code and output.
// `prefix` may set environment variables for the child.
CliResult run_cli(const std::string& args, const fs::path& workdir,
                  const std::string& prefix = "") {
    const fs::path logfile = workdir / "cli_log.txt";
    std::string cmd = prefix + std::string(HKDELAY_CLI_PATH) + " " + args + " >" +
                      logfile.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    result.log = read_file(logfile);
    return result;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("golden scenario documents parse into validated scenarios", "[cli]") {
    SECTION("undelayed pair") {
        const auto sc = cli::parse_scenario(scenario_text("two_agent_undelayed.json"));
        CHECK(sc.agent_count == 2);
        CHECK(sc.dimension == 1);
        CHECK(sc.horizon == 3.0);
        CHECK(sc.delay.kind == model::DelayKind::Pointwise);
        CHECK(sc.delay.tau_bar == 1.0);
        CHECK(sc.influence.K == 1.0);
        CHECK(sc.solver.step == 0.001);
        CHECK(model::eval_delay(sc.delay, 1.7) == 0.0);
        CHECK(model::eval_history(sc.history, 0, -0.5) == std::vector<double>{1.0});
    }
    SECTION("distributed window") {
        const auto sc = cli::parse_scenario(scenario_text("distributed_minimal.json"));
        CHECK(sc.delay.kind == model::DelayKind::Distributed);
        const auto [a, b] = model::eval_delay_bounds(sc.delay, 0.3);
        CHECK(a == 0.0);
        CHECK(b == 1.0);
        CHECK(sc.solver.quadrature_points_per_step == 4);
    }
    SECTION("sweep and ladder blocks") {
        const auto doc =
            cli::parse_scenario_document(scenario_text("sweep_base.json"));
        REQUIRE(doc.sweep.has_value());
        CHECK(doc.sweep->parameter == "tau_bar");
        CHECK(doc.sweep->values == std::vector<double>{0.25, 0.5, 1.0});

        const auto mf =
            cli::parse_scenario_document(scenario_text("meanfield_reference.json"));
        REQUIRE(mf.meanfield.has_value());
        CHECK(mf.meanfield->ladder == std::vector<std::size_t>{8, 32, 128});
        CHECK(mf.meanfield->tau_star == 0.25);
    }
    SECTION("every golden file in the repository parses") {
        for (const auto& entry : fs::directory_iterator(HKDELAY_SCENARIO_DIR)) {
            if (entry.path().extension() != ".json") continue;
            INFO("file: " << entry.path().filename().string());
            CHECK_NOTHROW(cli::parse_scenario_document(read_file(entry.path())));
        }
    }
}

TEST_CASE("documents with violations are rejected with named causes", "[cli]") {
    auto patched = [&](const std::string& file, const std::string& needle,
                       const std::string& replacement) {
        std::string text = scenario_text(file);
        const auto pos = text.find(needle);
        REQUIRE(pos != std::string::npos);
        return text.replace(pos, needle.size(), replacement);
    };

    SECTION("unknown keys") {
        std::string text = scenario_text("two_agent_undelayed.json");
        text.insert(text.find("\"agents\""), "\"bogus_knob\": 1,\n  ");
        CHECK_THROWS_WITH(cli::parse_scenario(text),
                          Catch::Matchers::ContainsSubstring("bogus_knob"));
    }
    SECTION("missing required field") {
        const std::string text = R"({"agents": 2, "dimension": 1, "horizon": 1.0})";
        CHECK_THROWS_WITH(cli::parse_scenario(text),
                          Catch::Matchers::ContainsSubstring("delay"));
    }
    SECTION("zero delay bound names tau_bar") {
        const auto text =
            patched("two_agent_undelayed.json", "\"tau_bar\": 1.0", "\"tau_bar\": 0.0");
        CHECK_THROWS_WITH(cli::parse_scenario(text),
                          Catch::Matchers::ContainsSubstring("tau_bar"));
    }
    SECTION("degenerate lag window names the strict ordering") {
        const auto text = patched("distributed_minimal.json",
                                  "\"tau2\": {\"kind\": \"constant\", \"value\": 1.0}",
                                  "\"tau2\": {\"kind\": \"constant\", \"value\": 0.0}");
        CHECK_THROWS_WITH(cli::parse_scenario(text),
                          Catch::Matchers::ContainsSubstring("tau1"));
    }
    SECTION("malformed JSON reports a parse error") {
        CHECK_THROWS(cli::parse_scenario("{\"agents\": "));
    }
}

TEST_CASE("certify on the undelayed golden passes with the expected report", "[cli]") {
    const auto dir = fresh_dir("certify_pass");
    const auto res = run_cli("certify --scenario " +
                                 (fs::path(HKDELAY_SCENARIO_DIR) /
                                  "two_agent_undelayed.json").string() +
                                 " --out " + dir.string(),
                             dir);
    CHECK(res.exit_code == 0);
    CHECK(res.log.find("result: PASS") != std::string::npos);

    const auto cert = nlohmann::json::parse(read_file(dir / "certificate.json"));
    CHECK(cert.at("K").get<double>() == 1.0);
    CHECK(cert.at("psi0").get<double>() == 1.0);
    CHECK(cert.at("D0").get<double>() == 1.0);
    CHECK_THAT(cert.at("gamma").get<double>(),
               Catch::Matchers::WithinAbs(0.017023060314233864, 1e-12));
    REQUIRE(cert.at("checks").is_array());
    bool rate_seen = false;
    for (const auto& check : cert.at("checks")) {
        CHECK(check.at("pass").get<bool>());
        if (check.at("name") == "empirical_rate_dominance") {
            rate_seen = true;
            // Empirical rate is about 2, far above gamma.
            CHECK(check.at("worst_margin").get<double>() > 1.5);
        }
    }
    CHECK(rate_seen);

    const auto metrics = split_lines(read_file(dir / "metrics.csv"));
    REQUIRE_FALSE(metrics.empty());
    CHECK(metrics.front() == "t,d_t,bound_t");
    CHECK(metrics.size() == 3002);  // header + one row per grid node
}

TEST_CASE("certify exits 1 when a check fails", "[cli]") {
    const auto dir = fresh_dir("certify_fail");
    const auto res = run_cli("certify --scenario " +
                                 (fs::path(HKDELAY_SCENARIO_DIR) /
                                  "overstated_psi0.json").string() +
                                 " --out " + dir.string(),
                             dir);
    CHECK(res.exit_code == 1);
    CHECK(res.log.find("result: FAIL") != std::string::npos);
    CHECK(res.log.find("FAIL") != std::string::npos);
    // Artifacts are still flushed for post-mortems.
    CHECK(fs::exists(dir / "certificate.json"));
    CHECK(fs::exists(dir / "metrics.csv"));
}

TEST_CASE("configuration problems exit 2", "[cli]") {
    const auto dir = fresh_dir("config_error");
    SECTION("missing scenario file") {
        const auto res =
            run_cli("certify --scenario /nonexistent/nope.json --out " + dir.string(), dir);
        CHECK(res.exit_code == 2);
    }
    SECTION("step override violating the cap") {
        const auto res = run_cli("certify --scenario " +
                                     (fs::path(HKDELAY_SCENARIO_DIR) /
                                      "two_agent_undelayed.json").string() +
                                     " --step 0.5 --out " + dir.string(),
                                 dir);
        CHECK(res.exit_code == 2);
        CHECK(res.log.find("tau_bar / 4") != std::string::npos);
    }
    SECTION("unknown subcommand is a usage error") {
        const auto res = run_cli("frobnicate --scenario x.json", dir);
        CHECK(res.exit_code == 2);
    }
}

TEST_CASE("repeated runs emit byte-identical artifacts", "[cli]") {
    const auto dir_a = fresh_dir("det_a");
    const auto dir_b = fresh_dir("det_b");
    const std::string scenario =
        (fs::path(HKDELAY_SCENARIO_DIR) / "two_agent_constant_delay.json").string();
    REQUIRE(run_cli("certify --scenario " + scenario + " --out " + dir_a.string(), dir_a)
                .exit_code == 0);
    REQUIRE(run_cli("certify --scenario " + scenario + " --out " + dir_b.string(), dir_b)
                .exit_code == 0);
    CHECK(read_file(dir_a / "certificate.json") == read_file(dir_b / "certificate.json"));
    CHECK(read_file(dir_a / "metrics.csv") == read_file(dir_b / "metrics.csv"));
}

TEST_CASE("simulate on consensus data writes constant columns", "[cli]") {
    const auto dir = fresh_dir("simulate");
    const fs::path scenario = dir / "consensus.json";
    {
        std::ofstream out(scenario);
        out << R"({
  "agents": 2,
  "dimension": 1,
  "horizon": 1.0,
  "delay": {"kind": "pointwise", "tau_bar": 1.0,
            "tau": {"kind": "constant", "value": 0.5}},
  "influence": {"form": "difference", "K": 1.0,
                "psi": {"kind": "constant", "value": 1.0}},
  "history": {"agents": [{"kind": "constant", "value": [0.5]},
                          {"kind": "constant", "value": [0.5]}]},
  "solver": {"step": 0.25}
})";
    }
    const auto res =
        run_cli("simulate --scenario " + scenario.string() + " --out " + dir.string(), dir);
    CHECK(res.exit_code == 0);

    const auto lines = split_lines(read_file(dir / "trajectory.csv"));
    REQUIRE(lines.size() == 1 + 5 * 2);  // header + 5 nodes x 2 agents
    CHECK(lines.front() == "t,agent,x0");
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto last_comma = lines[k].rfind(',');
        CHECK(lines[k].substr(last_comma + 1) == "0.5");
    }
}

TEST_CASE("the seed directory environment variable resolves bare names", "[cli]") {
    const auto dir = fresh_dir("seed_dir");
    const auto res = run_cli(
        "certify --scenario two_agent_undelayed.json --out " + dir.string(), dir,
        "HKDELAY_SEED_DIR=" + std::string(HKDELAY_SCENARIO_DIR) + " ");
    CHECK(res.exit_code == 0);
    CHECK(fs::exists(dir / "certificate.json"));
}

TEST_CASE("sweep reports strictly decreasing rates in the delay bound", "[cli]") {
    const auto dir = fresh_dir("sweep");
    const auto res = run_cli("sweep --scenario " +
                                 (fs::path(HKDELAY_SCENARIO_DIR) / "sweep_base.json").string() +
                                 " --out " + dir.string(),
                             dir);
    CHECK(res.exit_code == 0);

    const auto lines = split_lines(read_file(dir / "sweep.csv"));
    REQUIRE(lines.size() == 4);  // header + three tau_bar values
    CHECK(lines.front() == "parameter,value,K,M0,psi0,D0,C,C_tilde,gamma,pass");
    std::vector<double> gammas;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto cols = [&] {
            std::vector<std::string> out;
            std::istringstream in(lines[k]);
            std::string field;
            while (std::getline(in, field, ',')) out.push_back(field);
            return out;
        }();
        REQUIRE(cols.size() == 10);
        CHECK(cols[0] == "tau_bar");
        CHECK(cols[9] == "true");
        gammas.push_back(std::stod(cols[8]));
    }
    CHECK(gammas[0] > gammas[1]);
    CHECK(gammas[1] > gammas[2]);
    CHECK_THAT(gammas[0], Catch::Matchers::WithinAbs(0.2520912183519248, 1e-12));
    CHECK_THAT(gammas[2], Catch::Matchers::WithinAbs(0.017023060314233864, 1e-12));
}

TEST_CASE("meanfield subcommand reports identical constants", "[cli]") {
    const auto dir = fresh_dir("meanfield");
    const auto res = run_cli("meanfield --scenario " +
                                 (fs::path(HKDELAY_SCENARIO_DIR) /
                                  "meanfield_reference.json").string() +
                                 " --out " + dir.string(),
                             dir);
    CHECK(res.exit_code == 0);
    CHECK(res.log.find("constants_identical: true") != std::string::npos);

    const auto lines = split_lines(read_file(dir / "meanfield.csv"));
    REQUIRE(lines.size() > 1);
    CHECK(lines.front() == "N,t,dX,bound,margin");
}

TEST_CASE("certify emits a decay plot when asked", "[cli]") {
    const auto dir = fresh_dir("plots");
    const auto res = run_cli("certify --scenario " +
                                 (fs::path(HKDELAY_SCENARIO_DIR) /
                                  "two_agent_undelayed.json").string() +
                                 " --out " + dir.string() + " --plots",
                             dir);
    CHECK(res.exit_code == 0);
    REQUIRE(fs::exists(dir / "decay.svg"));
    const auto svg = read_file(dir / "decay.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}
