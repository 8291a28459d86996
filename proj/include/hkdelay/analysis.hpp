#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <future>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hkdelay/model.hpp"
#include "hkdelay/solver.hpp"
#include "hkdelay/trajectory.hpp"
#include "hkdelay/vec_ops.hpp"

namespace hkdelay::analysis {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

// D_n = max over agent pairs and over sample-time pairs within the window
// [n*tau_bar - tau_bar, n*tau_bar]; D_0 covers the initial history.
struct WindowDiameters {
    double tau_bar = 0.0;
    int samples_per_window = 0;
    std::size_t subintervals = 0;  // dyadic grid: samples land at q * tau_bar / subintervals
    std::vector<double> values;    // D_0, D_1, ..., one per complete window
};

struct CheckRecord {
    std::string name;
    double worst_margin = 0.0;  // min over instances of (rhs - lhs); >= -eps passes
    bool pass = false;
    std::string note;           // non-empty when the check was skipped (and why)
};

struct ConsensusCertificate {
    double K = 0.0;
    double M0 = 0.0;
    double psi0 = 0.0;
    double D0 = 0.0;
    double C = 0.0;
    double C_tilde = 0.0;
    double gamma = 0.0;
    double tau_bar = 0.0;
    std::vector<CheckRecord> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

struct ProofConstants {
    double C = 0.0;
    double C_tilde = 0.0;
    double gamma = 0.0;
};

struct CertificateOptions {
    int samples_per_window = 33;  // window sample count (rounded up to dyadic + 1)
    int hull_directions = 16;     // random unit vectors, on top of the 2d axis ones
    int hull_samples = 257;       // sample count for hull min/max and later times
    int psi0_resolution = 0;      // 0 = dimension-dependent default
    int rate_samples = 129;       // sample count for the empirical-rate fit
    unsigned rng_seed = 20240817; // fixed so reports are reproducible byte-for-byte
    bool parallel_checks = true;
};

// ---------------------------------------------------------------------------
// Decay constants: C from the two-branch contraction bound, the three-window
// factor C_tilde, and the exponential rate gamma. Pure function of
// (K, psi0, tau_bar) — deliberately independent of the number of agents.
// ---------------------------------------------------------------------------

inline ProofConstants proof_constants(double K, double psi0, double tau_bar) {
    if (!(K > 0.0) || !(tau_bar > 0.0))
        throw std::invalid_argument("proof_constants: K and tau_bar must be positive");
    if (!(psi0 > 0.0))
        throw std::domain_error("proof_constants: psi0 must be strictly positive; the decay "
                                "constants degenerate as psi0 -> 0");
    if (K < psi0 * (1.0 - 1e-12))
        throw std::domain_error("proof_constants: psi0 exceeds the declared supremum K; "
                                "inconsistent influence bounds");
    ProofConstants out;
    // C = max{1 - e^{-2K tau}, 1 - (psi0/K)(1 - e^{-K tau})}, computed through
    // the complements 1 - C so the small quantity keeps full relative precision.
    const double one_minus_a = std::exp(-2.0 * K * tau_bar);
    const double one_minus_b = (psi0 / K) * (-std::expm1(-K * tau_bar));
    const double one_minus_C = std::min(one_minus_a, one_minus_b);
    out.C = 1.0 - one_minus_C;
    const double one_minus_Ct = std::exp(-K * tau_bar) * one_minus_C;  // 1 - C_tilde
    out.C_tilde = 1.0 - one_minus_Ct;
    out.gamma = -std::log1p(-one_minus_Ct) / (3.0 * tau_bar);          // ln(1/C_tilde)/(3 tau)
    if (!(out.C > 0.0 && out.C < 1.0) || !(out.C_tilde < 1.0) || !(out.gamma > 0.0))
        throw std::domain_error("proof_constants: computed constants left (0,1); inputs are "
                                "numerically degenerate");
    return out;
}

// ---------------------------------------------------------------------------
// Sampled diagnostics
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t dyadic_subintervals(int samples) {
    if (samples < 8) throw std::invalid_argument("sample count must be >= 8");
    return std::bit_ceil(static_cast<std::size_t>(samples - 1));
}

// q-th node of window n: (n-1)*tau_bar + tau_bar*(q/subintervals). The dyadic
// ratio is exact, so doubling the grid reproduces the coarse nodes bitwise and
// refinement can only enlarge sampled maxima.
inline double window_time(double tau_bar, long n, std::size_t q, std::size_t subintervals) {
    return (static_cast<double>(n) - 1.0) * tau_bar +
           tau_bar * (static_cast<double>(q) / static_cast<double>(subintervals));
}

// All agent states sampled over window n, flat agent-major per node.
inline std::vector<double> window_cloud(const solver::Trajectory& traj, double tau_bar, long n,
                                        std::size_t subintervals) {
    const std::size_t nd = traj.agent_count * traj.dimension;
    std::vector<double> cloud((subintervals + 1) * nd);
    std::vector<double> flat;
    for (std::size_t q = 0; q <= subintervals; ++q) {
        traj.eval_all(window_time(tau_bar, n, q, subintervals), flat);
        std::copy(flat.begin(), flat.end(), cloud.begin() + static_cast<std::ptrdiff_t>(q * nd));
    }
    return cloud;
}

// Largest pairwise distance within one flat point cloud.
inline double cloud_diameter(std::span<const double> cloud, std::size_t dim) {
    const std::size_t n = cloud.size() / dim;
    double best = 0.0;
    for (std::size_t a = 0; a + 1 < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            best = std::max(best, distance(cloud.subspan(a * dim, dim),
                                           cloud.subspan(b * dim, dim)));
    return best;
}

// Largest distance between a point of `added` and a point of `base`.
inline double cross_diameter(std::span<const double> added, std::span<const double> base,
                             std::size_t dim) {
    const std::size_t na = added.size() / dim, nb = base.size() / dim;
    double best = 0.0;
    for (std::size_t a = 0; a < na; ++a)
        for (std::size_t b = 0; b < nb; ++b)
            best = std::max(best, distance(added.subspan(a * dim, dim),
                                           base.subspan(b * dim, dim)));
    return best;
}

inline long complete_windows(const solver::Trajectory& traj) {
    const double T = traj.horizon(), tb = traj.tau_bar();
    return static_cast<long>(std::floor(T / tb + 1e-9));
}

}  // namespace detail

// Instantaneous diameter d(t) = max over agent pairs of |x_i(t) - x_j(t)|.
inline double diameter_at(const solver::Trajectory& traj, double t) {
    std::vector<double> flat;
    traj.eval_all(t, flat);
    const std::size_t d = traj.dimension;
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < traj.agent_count; ++i)
        for (std::size_t j = i + 1; j < traj.agent_count; ++j)
            best = std::max(best, distance(slice(flat, i, d), slice(flat, j, d)));
    return best;
}

// Window diameters D_0 (history), D_1, ... over every complete window the
// trajectory covers, sampled on the nested dyadic grid.
inline WindowDiameters window_diameters(const solver::Trajectory& traj, int samples_per_window) {
    const std::size_t sub = detail::dyadic_subintervals(samples_per_window);
    const double tb = traj.tau_bar();
    WindowDiameters wd;
    wd.tau_bar = tb;
    wd.samples_per_window = samples_per_window;
    wd.subintervals = sub;
    const long n_max = detail::complete_windows(traj);
    wd.values.reserve(static_cast<std::size_t>(n_max) + 1);
    for (long n = 0; n <= n_max; ++n) {
        const auto cloud = detail::window_cloud(traj, tb, n, sub);
        wd.values.push_back(detail::cloud_diameter(cloud, traj.dimension));
    }
    return wd;
}

// M0 = max over agents and sampled s in [-tau_bar, 0] of |x_i(s)|. Uses the
// same dyadic grid as the window diameters so the history samples of the
// uniform-bound check can never exceed it.
inline double compute_M0(const model::InitialHistory& history, int samples) {
    const std::size_t sub = detail::dyadic_subintervals(samples);
    std::vector<double> buf(history.dimension);
    double best = 0.0;
    for (std::size_t i = 0; i < history.agents.size(); ++i) {
        for (std::size_t q = 0; q <= sub; ++q) {
            const double s = detail::window_time(history.tau_bar, 0, q, sub);
            model::eval_history(history, i, s, buf);
            best = std::max(best, norm(buf));
        }
    }
    return best;
}

// Projection-hull confinement: for every direction v, states after T_anchor
// must stay between the min and max of <x_j(s), v> over the anchor window
// [T_anchor - tau_bar, T_anchor]. Returns the worst signed margin
// (min over directions, agents, later times of the distance to the hull
// bounds); negative beyond the tolerance means a violation.
inline double verify_hull_confinement(const solver::Trajectory& traj, double T_anchor,
                                      int directions, int sample_times,
                                      unsigned rng_seed = 20240817) {
    const double T = traj.horizon(), tb = traj.tau_bar();
    if (!(T_anchor >= 0.0 && T_anchor < T))
        throw std::invalid_argument("verify_hull_confinement: T_anchor must lie in [0, T)");
    const std::size_t d = traj.dimension;
    const std::size_t sub = detail::dyadic_subintervals(sample_times);

    std::vector<std::vector<double>> dirs;
    for (std::size_t k = 0; k < d; ++k) {
        std::vector<double> plus(d, 0.0), minus(d, 0.0);
        plus[k] = 1.0;
        minus[k] = -1.0;
        dirs.push_back(plus);
        dirs.push_back(minus);
    }
    std::mt19937 rng(rng_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    while (dirs.size() < 2 * d + static_cast<std::size_t>(directions)) {
        std::vector<double> v(d);
        for (auto& c : v) c = gauss(rng);
        const double len = norm(v);
        if (len < 1e-12) continue;
        for (auto& c : v) c /= len;
        dirs.push_back(std::move(v));
    }

    double worst = std::numeric_limits<double>::infinity();
    std::vector<double> flat;
    for (const auto& v : dirs) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t q = 0; q <= sub; ++q) {
            const double s = T_anchor - tb + tb * (static_cast<double>(q) / sub);
            traj.eval_all(s, flat);
            for (std::size_t i = 0; i < traj.agent_count; ++i) {
                const double p = dot(slice(flat, i, d), v);
                lo = std::min(lo, p);
                hi = std::max(hi, p);
            }
        }
        for (std::size_t q = 0; q <= sub; ++q) {
            const double t = T_anchor + (T - T_anchor) * (static_cast<double>(q) / sub);
            traj.eval_all(t, flat);
            for (std::size_t i = 0; i < traj.agent_count; ++i) {
                const double p = dot(slice(flat, i, d), v);
                worst = std::min(worst, std::min(p - lo, hi - p));
            }
        }
    }
    return worst;
}

// Least-squares slope of ln d(t) on [t_start, t_end], negated: the empirical
// exponential decay rate. Throws when the diameter vanishes in the range
// (consensus is already exact and the rate is undefined).
inline double fit_decay_rate(const solver::Trajectory& traj, double t_start, double t_end,
                             int samples = 129) {
    if (!(t_end > t_start))
        throw std::invalid_argument("fit_decay_rate: need t_end > t_start");
    if (samples < 2) throw std::invalid_argument("fit_decay_rate: need at least 2 samples");
    double mean_t = 0.0, mean_y = 0.0;
    std::vector<double> ts(samples), ys(samples);
    for (int k = 0; k < samples; ++k) {
        const double t = t_start + (t_end - t_start) * k / (samples - 1);
        const double dt = diameter_at(traj, t);
        if (!(dt > 0.0)) {
            std::ostringstream msg;
            msg << "fit_decay_rate: diameter is zero at t=" << t
                << "; consensus is exact and no finite rate exists";
            throw std::domain_error(msg.str());
        }
        ts[k] = t;
        ys[k] = std::log(dt);
        mean_t += t;
        mean_y += ys[k];
    }
    mean_t /= samples;
    mean_y /= samples;
    double num = 0.0, den = 0.0;
    for (int k = 0; k < samples; ++k) {
        num += (ts[k] - mean_t) * (ys[k] - mean_y);
        den += (ts[k] - mean_t) * (ts[k] - mean_t);
    }
    return -num / den;
}

// ---------------------------------------------------------------------------
// The inequality chain along a trajectory. Every check uses the shared slack
// eps = 1e-6 * (1 + D0) to budget integrator plus sampling error.
// ---------------------------------------------------------------------------

inline std::vector<CheckRecord> verify_lemma_chain(const solver::Trajectory& traj,
                                                   const ConsensusCertificate& cert,
                                                   const WindowDiameters& wd) {
    const double tb = traj.tau_bar();
    const std::size_t d = traj.dimension;
    const std::size_t sub = wd.subintervals;
    const double eps = 1e-6 * (1.0 + cert.D0);
    const long n_max = static_cast<long>(wd.values.size()) - 1;
    std::vector<CheckRecord> out;

    auto skipped = [&](const std::string& name) {
        out.push_back({name, 0.0, true,
                       "insufficient horizon: needs more complete windows than the trajectory "
                       "covers"});
    };

    // (a) every sampled pair of states taken at times >= n*tau_bar - tau_bar
    // stays within D_n. Scans windows from the last backwards, keeping the
    // running diameter of the suffix cloud.
    {
        CheckRecord rec{"window_distance_bound", std::numeric_limits<double>::infinity(), false,
                        ""};
        std::vector<double> suffix;  // states sampled at all times >= current window start
        double suffix_diam = 0.0;
        for (long n = n_max; n >= 0; --n) {
            const auto cloud = detail::window_cloud(traj, tb, n, sub);
            suffix_diam = std::max(suffix_diam, detail::cloud_diameter(cloud, d));
            if (!suffix.empty())
                suffix_diam = std::max(suffix_diam, detail::cross_diameter(cloud, suffix, d));
            suffix.insert(suffix.end(), cloud.begin(), cloud.end());
            rec.worst_margin = std::min(rec.worst_margin, wd.values[n] - suffix_diam);
        }
        rec.pass = rec.worst_margin >= -eps;
        out.push_back(std::move(rec));
    }

    // (b) |x_i(t)| <= M0 at every sampled time, history included.
    {
        CheckRecord rec{"uniform_state_bound", std::numeric_limits<double>::infinity(), false,
                        ""};
        std::vector<double> flat;
        for (long n = 0; n <= n_max; ++n) {
            for (std::size_t q = 0; q <= sub; ++q) {
                traj.eval_all(detail::window_time(tb, n, q, sub), flat);
                for (std::size_t i = 0; i < traj.agent_count; ++i)
                    rec.worst_margin =
                        std::min(rec.worst_margin, cert.M0 - norm(slice(flat, i, d)));
            }
        }
        rec.pass = rec.worst_margin >= -eps;
        out.push_back(std::move(rec));
    }

    // (c) one-window contraction: D_{n+1} <= e^{-K tau} d(n tau) + (1 - e^{-K tau}) D_n.
    if (n_max >= 1) {
        CheckRecord rec{"window_contraction", std::numeric_limits<double>::infinity(), false, ""};
        const double decay = std::exp(-cert.K * tb);
        for (long n = 0; n + 1 <= n_max; ++n) {
            const double lhs = wd.values[n + 1];
            const double rhs = decay * diameter_at(traj, static_cast<double>(n) * tb) +
                               (1.0 - decay) * wd.values[n];
            rec.worst_margin = std::min(rec.worst_margin, rhs - lhs);
        }
        rec.pass = rec.worst_margin >= -eps;
        out.push_back(std::move(rec));
    } else {
        skipped("window_contraction");
    }

    // (d) two-window diameter contraction: d(n tau) <= C * D_{n-2} for n >= 2.
    if (n_max >= 2) {
        CheckRecord rec{"two_window_diameter_contraction",
                        std::numeric_limits<double>::infinity(), false, ""};
        for (long n = 2; n <= n_max; ++n) {
            const double lhs = diameter_at(traj, static_cast<double>(n) * tb);
            rec.worst_margin = std::min(rec.worst_margin, cert.C * wd.values[n - 2] - lhs);
        }
        rec.pass = rec.worst_margin >= -eps;
        out.push_back(std::move(rec));
    } else {
        skipped("two_window_diameter_contraction");
    }

    // (e) three-window geometric decay: D_{3n} <= C_tilde^n * D_0.
    if (n_max >= 3) {
        CheckRecord rec{"three_window_geometric_decay",
                        std::numeric_limits<double>::infinity(), false, ""};
        double factor = 1.0;
        for (long n = 1; 3 * n <= n_max; ++n) {
            factor *= cert.C_tilde;
            rec.worst_margin =
                std::min(rec.worst_margin, factor * cert.D0 - wd.values[3 * n]);
        }
        rec.pass = rec.worst_margin >= -eps;
        out.push_back(std::move(rec));
    } else {
        skipped("three_window_geometric_decay");
    }

    // (f) the decay estimate itself: d(t) <= D0 e^{-gamma (t - 2 tau)} at every
    // sampled t >= 0.
    {
        CheckRecord rec{"exponential_decay_estimate", std::numeric_limits<double>::infinity(),
                        false, ""};
        for (long n = 1; n <= std::max<long>(n_max, 1); ++n) {
            for (std::size_t q = 0; q <= sub; ++q) {
                const double t = detail::window_time(tb, n, q, sub);
                if (t < 0.0 || t > traj.horizon() + 1e-9 * std::max(1.0, traj.horizon()))
                    continue;
                const double bound = cert.D0 * std::exp(-cert.gamma * (t - 2.0 * tb));
                rec.worst_margin = std::min(rec.worst_margin, bound - diameter_at(traj, t));
            }
        }
        rec.pass = rec.worst_margin >= -eps;
        out.push_back(std::move(rec));
    }

    return out;
}

// ---------------------------------------------------------------------------
// Full certificate: constants plus every check, merged by worst margin.
// ---------------------------------------------------------------------------

inline ConsensusCertificate build_certificate(const solver::Trajectory& traj,
                                              const model::Scenario& sc,
                                              const CertificateOptions& opt) {
    ConsensusCertificate cert;
    cert.K = sc.influence.K;
    cert.tau_bar = traj.tau_bar();

    auto wd_future = std::async(opt.parallel_checks ? std::launch::async
                                                    : std::launch::deferred,
                                [&] { return window_diameters(traj, opt.samples_per_window); });
    cert.M0 = compute_M0(traj.history, opt.samples_per_window);
    const WindowDiameters wd = wd_future.get();
    cert.D0 = wd.values.at(0);

    int res = opt.psi0_resolution;
    if (res <= 0) {
        if (sc.influence.form == model::InfluenceForm::DifferenceForm || sc.dimension == 1)
            res = 64;
        else
            res = sc.dimension == 2 ? 24 : 10;
    }
    const double region =
        sc.influence.form == model::InfluenceForm::DifferenceForm ? cert.D0 : cert.M0;
    cert.psi0 = model::compute_psi0(sc.influence, sc.dimension, region, res);
    if (!(cert.psi0 > 0.0) || cert.K < cert.psi0 * (1.0 - 1e-12))
        throw std::domain_error("certificate refused: influence bounds are inconsistent "
                                "(need 0 < psi0 <= K)");

    const ProofConstants pc = proof_constants(cert.K, cert.psi0, cert.tau_bar);
    cert.C = pc.C;
    cert.C_tilde = pc.C_tilde;
    cert.gamma = pc.gamma;

    const double eps_hull = 1e-6 + 1e-9 * (1.0 + cert.M0);

    auto launch = [&](auto fn) {
        return std::async(opt.parallel_checks ? std::launch::async : std::launch::deferred,
                          std::move(fn));
    };
    auto chain_future = launch([&] { return verify_lemma_chain(traj, cert, wd); });
    auto hull_future = launch([&] {
        return verify_hull_confinement(traj, 0.0, opt.hull_directions, opt.hull_samples,
                                       opt.rng_seed);
    });

    // Empirical decay rate over [2 tau_bar, T], compared against gamma. When
    // the sampled diameter hits zero the estimate is vacuously satisfied.
    CheckRecord rate{"empirical_rate_dominance", 0.0, true, ""};
    const double t0 = 2.0 * cert.tau_bar;
    if (t0 >= traj.horizon()) {
        rate.note = "insufficient horizon: rate fit needs T > 2 tau_bar";
    } else {
        try {
            const double rate_hat = fit_decay_rate(traj, t0, traj.horizon(), opt.rate_samples);
            rate.worst_margin = rate_hat - cert.gamma;
            rate.pass = rate.worst_margin >= -1e-6;
        } catch (const std::domain_error&) {
            rate.note = "consensus exact within sampling: decay bound holds vacuously";
        }
    }

    cert.checks = chain_future.get();
    const double hull_margin = hull_future.get();
    cert.checks.push_back({"hull_confinement", hull_margin, hull_margin >= -eps_hull, ""});
    cert.checks.push_back(std::move(rate));
    return cert;
}

inline ConsensusCertificate build_certificate(const solver::Trajectory& traj,
                                              const model::Scenario& sc) {
    return build_certificate(traj, sc, CertificateOptions{});
}

}  // namespace hkdelay::analysis
