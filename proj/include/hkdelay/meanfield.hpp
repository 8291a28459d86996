#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <future>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hkdelay/analysis.hpp"
#include "hkdelay/model.hpp"
#include "hkdelay/solver.hpp"
#include "hkdelay/trajectory.hpp"
#include "hkdelay/vec_ops.hpp"

namespace hkdelay::meanfield {

// ---------------------------------------------------------------------------
// Empirical measures: equal-weight point clouds standing in for the continuum
// states of the particle system.
// ---------------------------------------------------------------------------

struct EmpiricalMeasure {
    std::size_t dimension = 0;
    std::vector<double> points;  // flat, point-major

    std::size_t size() const { return dimension == 0 ? 0 : points.size() / dimension; }
    double weight() const { return 1.0 / static_cast<double>(size()); }
};

inline EmpiricalMeasure empirical_at(const solver::Trajectory& traj, double t) {
    EmpiricalMeasure mu;
    mu.dimension = traj.dimension;
    traj.eval_all(t, mu.points);
    return mu;
}

// Diameter of the support: same pairwise-maximum formula as the trajectory
// diameter, so the two agree exactly on empirical_at snapshots.
inline double support_diameter(const EmpiricalMeasure& mu) {
    if (mu.size() == 0) throw std::invalid_argument("support_diameter: empty measure");
    const std::size_t d = mu.dimension;
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < mu.size(); ++i)
        for (std::size_t j = i + 1; j < mu.size(); ++j)
            best = std::max(best, distance(slice(mu.points, i, d), slice(mu.points, j, d)));
    return best;
}

namespace detail {

// Exact minimum-cost perfect assignment on a dense n x n cost matrix
// (Hungarian algorithm with potentials, shortest augmenting paths, O(n^3)).
inline double min_cost_assignment(const std::vector<double>& cost, std::size_t n) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            std::size_t j1 = 0;
            double delta = kInf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    // Accumulate the matched costs in sorted order so the total does not
    // depend on the matching's orientation (keeps the distance symmetric).
    std::vector<double> matched(n);
    for (std::size_t j = 1; j <= n; ++j) matched[j - 1] = cost[(match[j] - 1) * n + (j - 1)];
    std::sort(matched.begin(), matched.end());
    double total = 0.0;
    for (double c : matched) total += c;
    return total;
}

}  // namespace detail

// 1-Wasserstein distance between equal-count, equal-weight point clouds:
// exact sorted matching in one dimension, exact minimum-cost assignment on
// the pairwise-distance matrix otherwise.
inline double wasserstein1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dimension != nu.dimension)
        throw std::invalid_argument("wasserstein1: dimension mismatch");
    const std::size_t n = mu.size();
    if (n != nu.size())
        throw std::invalid_argument(
            "wasserstein1: unequal point counts are unsupported; resample to a common size");
    if (n == 0) throw std::invalid_argument("wasserstein1: empty measures");
    if (n > 256) throw std::invalid_argument("wasserstein1: point count exceeds 256");

    const std::size_t d = mu.dimension;
    if (d == 1) {
        std::vector<double> a = mu.points, b = nu.points;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += std::abs(a[i] - b[i]);
        return total / static_cast<double>(n);
    }
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cost[i * n + j] = distance(slice(mu.points, i, d), slice(nu.points, j, d));
    return detail::min_cost_assignment(cost, n) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// N-independence of the certified decay: the testable content of the
// continuum limit at desk scale.
// ---------------------------------------------------------------------------

struct MeanFieldConfig {
    std::vector<std::size_t> N_ladder{8, 32, 128};
    double tau_star = 0.0;              // required positive lower bound on the sampled lag
    std::optional<double> lipschitz_L;  // documented property of psi; not used computationally
    int samples_per_window = 33;
    int jobs = 0;                       // 0 = integrate ladder members concurrently
    analysis::CertificateOptions certificate;
};

struct MeanFieldRow {
    std::size_t N = 0;
    double t = 0.0;
    double dX = 0.0;     // support diameter of the empirical measure at t
    double bound = 0.0;  // (max_s dX(g_s)) * exp(-gamma (t - 2 tau_bar))
    double margin = 0.0; // bound - dX
};

struct MemberReport {
    std::size_t N = 0;
    analysis::ConsensusCertificate certificate;
    double initial_support_diameter = 0.0;  // max over sampled s in [-tau_bar, 0]
    double worst_margin = std::numeric_limits<double>::infinity();
    bool decay_pass = false;
};

struct MeanFieldReport {
    bool constants_identical = false;
    std::vector<MemberReport> members;
    std::vector<MeanFieldRow> rows;

    bool pass() const {
        if (!constants_identical) return false;
        for (const auto& m : members)
            if (!m.decay_pass || !m.certificate.all_pass()) return false;
        return true;
    }
};

// Builds the N-agent scenario whose initial histories are placed on the
// uniform quantile grid u_i = i/(N-1) of the template profile: agent i blends
// the two bracketing template histories linearly. The endpoints reproduce the
// template's extreme histories exactly, so the sampled history bounds (and
// with them the certificate constants) do not depend on N.
inline model::Scenario stratified_scenario(const model::Scenario& tpl, std::size_t N) {
    if (N < 2) throw std::invalid_argument("stratified_scenario: need N >= 2");
    model::Scenario sc = tpl;
    sc.agent_count = N;
    sc.history.agents.clear();
    sc.history.agents.reserve(N);
    const auto ref = std::make_shared<const model::InitialHistory>(tpl.history);
    const std::size_t refs = ref->agents.size();
    for (std::size_t i = 0; i < N; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(N - 1);
        sc.history.agents.push_back(model::CustomHistory{
            [ref, refs, u](double s, std::span<double> out) {
                const double pos = u * static_cast<double>(refs - 1);
                auto lo = static_cast<std::size_t>(pos);
                if (lo >= refs - 1) lo = refs - 2;
                const double frac = pos - static_cast<double>(lo);
                std::vector<double> a(out.size()), b(out.size());
                model::eval_history(*ref, lo, s, a);
                model::eval_history(*ref, lo + 1, s, b);
                for (std::size_t k = 0; k < out.size(); ++k)
                    out[k] = (1.0 - frac) * a[k] + frac * b[k];
            }});
    }
    return sc;
}

// Integrates the ladder, certifies every member, and checks (i) that the
// certificate constants are the same for every N and (ii) that the support
// diameter obeys the certified decay bound anchored at the initial profile.
inline MeanFieldReport n_independence_check(const MeanFieldConfig& config,
                                            const model::Scenario& tpl) {
    if (config.N_ladder.empty())
        throw std::invalid_argument("n_independence_check: empty N ladder");
    for (std::size_t k = 1; k < config.N_ladder.size(); ++k)
        if (config.N_ladder[k] <= config.N_ladder[k - 1])
            throw std::invalid_argument("n_independence_check: N ladder must be strictly "
                                        "increasing");
    if (!(config.tau_star > 0.0))
        throw std::invalid_argument("n_independence_check: tau_star must be positive (the "
                                    "continuum argument needs a delay bounded away from zero)");
    for (double t : model::detail::linspace(0.0, tpl.horizon, 10000)) {
        const double lag = tpl.delay.kind == model::DelayKind::Pointwise
                               ? model::eval_delay(tpl.delay, t)
                               : model::eval_delay_bounds(tpl.delay, t).first;
        if (lag < config.tau_star - 1e-12 * std::max(1.0, config.tau_star)) {
            std::ostringstream msg;
            msg << "n_independence_check: sampled lag " << lag << " at t=" << t
                << " drops below tau_star=" << config.tau_star;
            throw std::invalid_argument(msg.str());
        }
    }

    auto run_member = [&](std::size_t N) {
        const model::Scenario sc = stratified_scenario(tpl, N);
        const solver::Trajectory traj = solver::integrate(sc);

        MemberReport member;
        member.N = N;
        analysis::CertificateOptions opt = config.certificate;
        opt.samples_per_window = config.samples_per_window;
        member.certificate = analysis::build_certificate(traj, sc, opt);

        const double tb = traj.tau_bar();
        const std::size_t sub = analysis::detail::dyadic_subintervals(config.samples_per_window);
        double g_diam = 0.0;
        for (std::size_t q = 0; q <= sub; ++q)
            g_diam = std::max(g_diam, support_diameter(empirical_at(
                                          traj, analysis::detail::window_time(tb, 0, q, sub))));
        member.initial_support_diameter = g_diam;

        std::vector<MeanFieldRow> rows;
        const long n_max = analysis::detail::complete_windows(traj);
        for (long n = 1; n <= n_max; ++n) {
            for (std::size_t q = (n == 1 ? 0u : 1u); q <= sub; ++q) {
                const double t = analysis::detail::window_time(tb, n, q, sub);
                MeanFieldRow row;
                row.N = N;
                row.t = t;
                row.dX = support_diameter(empirical_at(traj, t));
                row.bound =
                    g_diam * std::exp(-member.certificate.gamma * (t - 2.0 * tb));
                row.margin = row.bound - row.dX;
                member.worst_margin = std::min(member.worst_margin, row.margin);
                rows.push_back(row);
            }
        }
        const double eps = 1e-6 * (1.0 + member.certificate.D0);
        member.decay_pass = member.worst_margin >= -eps;
        return std::pair(member, rows);
    };

    MeanFieldReport report;
    if (config.jobs == 1) {
        for (std::size_t N : config.N_ladder) {
            auto [member, rows] = run_member(N);
            report.members.push_back(std::move(member));
            report.rows.insert(report.rows.end(), rows.begin(), rows.end());
        }
    } else {
        std::vector<std::future<std::pair<MemberReport, std::vector<MeanFieldRow>>>> futures;
        futures.reserve(config.N_ladder.size());
        for (std::size_t N : config.N_ladder)
            futures.push_back(std::async(std::launch::async, run_member, N));
        for (auto& f : futures) {
            auto [member, rows] = f.get();
            report.members.push_back(std::move(member));
            report.rows.insert(report.rows.end(), rows.begin(), rows.end());
        }
    }

    report.constants_identical = true;
    for (std::size_t k = 1; k < report.members.size(); ++k) {
        const auto& a = report.members[0].certificate;
        const auto& b = report.members[k].certificate;
        if (a.C != b.C || a.C_tilde != b.C_tilde || a.gamma != b.gamma)
            report.constants_identical = false;
    }
    return report;
}

}  // namespace hkdelay::meanfield
