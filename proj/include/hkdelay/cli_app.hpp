#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hkdelay/analysis.hpp"
#include "hkdelay/io.hpp"
#include "hkdelay/meanfield.hpp"
#include "hkdelay/model.hpp"
#include "hkdelay/scenario_json.hpp"
#include "hkdelay/solver.hpp"

namespace hkdelay::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitPass = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;

struct RunConfig {
    std::string scenario_path;
    std::string out_dir = ".";
    std::optional<double> step_override;
    std::optional<double> horizon_override;
    int jobs = 0;  // 0 = one worker per hardware thread
    bool emit_plots = false;
};

// Relative scenario paths fall back to the directory named by the
// HKDELAY_SEED_DIR environment variable (used by tests and CI wrappers).
inline std::filesystem::path resolve_scenario_path(const std::string& given) {
    const std::filesystem::path direct(given);
    if (std::filesystem::exists(direct)) return direct;
    if (const char* seed = std::getenv("HKDELAY_SEED_DIR")) {
        const std::filesystem::path alt = std::filesystem::path(seed) / direct;
        if (std::filesystem::exists(alt)) return alt;
    }
    return direct;
}

inline ScenarioDocument load_document(const RunConfig& cfg) {
    const auto path = resolve_scenario_path(cfg.scenario_path);
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read scenario file: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    ScenarioDocument doc = parse_scenario_document(buffer.str());
    if (cfg.step_override) doc.scenario.solver.step = *cfg.step_override;
    if (cfg.horizon_override) doc.scenario.horizon = *cfg.horizon_override;
    if (cfg.step_override || cfg.horizon_override) doc.scenario.validate();
    return doc;
}

namespace detail {

inline std::filesystem::path prepare_out_dir(const RunConfig& cfg) {
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void log_warnings(const solver::Trajectory& traj, std::ostream& log) {
    for (const auto& w : traj.warnings) log << "warning: " << w << "\n";
}

inline void log_certificate(const analysis::ConsensusCertificate& cert, std::ostream& log) {
    log << "constants: K=" << io::format_shortest(cert.K)
        << " M0=" << io::format_shortest(cert.M0) << " psi0=" << io::format_shortest(cert.psi0)
        << " D0=" << io::format_shortest(cert.D0) << " C=" << io::format_shortest(cert.C)
        << " C_tilde=" << io::format_shortest(cert.C_tilde)
        << " gamma=" << io::format_shortest(cert.gamma) << "\n";
    for (const auto& c : cert.checks) {
        log << "check " << c.name << ": " << (c.pass ? "PASS" : "FAIL")
            << " worst_margin=" << io::format_shortest(c.worst_margin);
        if (!c.note.empty()) log << " (" << c.note << ")";
        log << "\n";
    }
}

// Runs fn(i) for i in [0, count) on up to `jobs` workers; exceptions are
// re-thrown in index order so failures are deterministic.
template <class Fn>
void parallel_indexed(std::size_t count, int jobs, Fn fn) {
    if (count == 0) return;
    std::size_t workers = jobs > 0 ? static_cast<std::size_t>(jobs)
                                   : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, count);
    std::vector<std::exception_ptr> errors(count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= count) return;
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

}  // namespace detail

inline int run_simulate(const RunConfig& cfg, std::ostream& log) {
    const ScenarioDocument doc = load_document(cfg);
    const auto dir = detail::prepare_out_dir(cfg);
    const solver::Trajectory traj = solver::integrate(doc.scenario);
    detail::log_warnings(traj, log);
    io::write_trajectory_csv(traj, (dir / "trajectory.csv").string());
    log << "wrote " << (dir / "trajectory.csv").string() << "\n";
    return kExitPass;
}

inline int run_certify(const RunConfig& cfg, std::ostream& log) {
    const ScenarioDocument doc = load_document(cfg);
    const auto dir = detail::prepare_out_dir(cfg);
    const solver::Trajectory traj = solver::integrate(doc.scenario);
    detail::log_warnings(traj, log);
    const analysis::ConsensusCertificate cert =
        analysis::build_certificate(traj, doc.scenario);
    io::write_certificate_json(cert, (dir / "certificate.json").string());
    io::write_metrics_csv(traj, cert, (dir / "metrics.csv").string());
    if (cfg.emit_plots) io::write_decay_svg(traj, cert, (dir / "decay.svg").string());
    detail::log_certificate(cert, log);
    const bool ok = cert.all_pass();
    log << "result: " << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? kExitPass : kExitCheckFailed;
}

inline int run_sweep(const RunConfig& cfg, std::ostream& log) {
    const ScenarioDocument doc = load_document(cfg);
    if (!doc.sweep)
        throw std::invalid_argument("sweep subcommand needs a \"sweep\" section in the "
                                    "scenario document");
    const auto dir = detail::prepare_out_dir(cfg);
    const auto& sweep = *doc.sweep;
    std::vector<analysis::ConsensusCertificate> certs(sweep.values.size());

    detail::parallel_indexed(sweep.values.size(), cfg.jobs, [&](std::size_t i) {
        model::Scenario sc = doc.scenario;
        const double v = sweep.values[i];
        if (sweep.parameter == "tau_bar") {
            sc.delay.tau_bar = v;
            sc.history.tau_bar = v;
        } else if (sweep.parameter == "K") {
            sc.influence.K = v;
        } else if (sweep.parameter == "step") {
            sc.solver.step = v;
        } else {
            sc.horizon = v;
        }
        sc.validate();
        const solver::Trajectory traj = solver::integrate(sc);
        certs[i] = analysis::build_certificate(traj, sc);
    });

    io::write_sweep_csv(sweep.parameter, sweep.values, certs, (dir / "sweep.csv").string());
    bool all_ok = true;
    for (std::size_t i = 0; i < sweep.values.size(); ++i) {
        const bool ok = certs[i].all_pass();
        all_ok = all_ok && ok;
        log << "sweep " << sweep.parameter << "=" << io::format_shortest(sweep.values[i])
            << ": gamma=" << io::format_shortest(certs[i].gamma) << " "
            << (ok ? "PASS" : "FAIL") << "\n";
    }
    log << "wrote " << (dir / "sweep.csv").string() << "\n";
    return all_ok ? kExitPass : kExitCheckFailed;
}

inline int run_meanfield(const RunConfig& cfg, std::ostream& log) {
    const ScenarioDocument doc = load_document(cfg);
    if (!doc.meanfield)
        throw std::invalid_argument("meanfield subcommand needs a \"meanfield\" section in "
                                    "the scenario document");
    const auto dir = detail::prepare_out_dir(cfg);
    meanfield::MeanFieldConfig config;
    config.N_ladder = doc.meanfield->ladder;
    config.tau_star = doc.meanfield->tau_star;
    config.lipschitz_L = doc.meanfield->lipschitz_L;
    config.samples_per_window = doc.meanfield->samples_per_window;
    config.jobs = cfg.jobs;
    const meanfield::MeanFieldReport report =
        meanfield::n_independence_check(config, doc.scenario);

    io::write_meanfield_csv(report.rows, (dir / "meanfield.csv").string());
    for (const auto& m : report.members) {
        log << "N=" << m.N << ": gamma=" << io::format_shortest(m.certificate.gamma)
            << " decay_margin=" << io::format_shortest(m.worst_margin) << " "
            << (m.decay_pass && m.certificate.all_pass() ? "PASS" : "FAIL") << "\n";
    }
    log << "constants_identical: " << (report.constants_identical ? "true" : "false") << "\n";
    log << "wrote " << (dir / "meanfield.csv").string() << "\n";
    return report.pass() ? kExitPass : kExitCheckFailed;
}

// Dispatcher with the exit-code contract: 0 all checks pass, 1 any check
// failed, 2 configuration/parse/validation error.
inline int run(const std::string& subcommand, const RunConfig& cfg, std::ostream& log,
               std::ostream& err) {
    try {
        if (subcommand == "simulate") return run_simulate(cfg, log);
        if (subcommand == "certify") return run_certify(cfg, log);
        if (subcommand == "sweep") return run_sweep(cfg, log);
        if (subcommand == "meanfield") return run_meanfield(cfg, log);
        err << "error: unknown subcommand \"" << subcommand << "\"\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfigError;
    }
}

}  // namespace hkdelay::cli
