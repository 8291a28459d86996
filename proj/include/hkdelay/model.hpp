#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hkdelay/vec_ops.hpp"

namespace hkdelay::model {

namespace detail {

inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    const double h = (hi - lo) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k) out[k] = lo + static_cast<double>(k) * h;
    out.back() = hi;
    return out;
}

// Piecewise-linear interpolation over sorted nodes, clamped at both ends.
inline double interp_linear(const std::vector<double>& xs, const std::vector<double>& ys,
                            double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    std::size_t hi = 1;
    while (xs[hi] < x) ++hi;
    const double w = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
    return (1.0 - w) * ys[hi - 1] + w * ys[hi];
}

[[noreturn]] inline void fail(const std::string& what) { throw std::invalid_argument(what); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Scalar functions of time (delay laws and the distributed-delay kernel).
// ---------------------------------------------------------------------------

struct ConstantFn {
    double value = 0.0;
};

// offset + amplitude * sin(omega * t + phase)
struct SinusoidalFn {
    double offset = 0.0;
    double amplitude = 0.0;
    double omega = 1.0;
    double phase = 0.0;
};

// coefficients[k] * s^k, evaluated by Horner's rule
struct PolynomialFn {
    std::vector<double> coefficients;
};

// linear interpolation through (times, values), constant beyond the end nodes
struct SampledFn {
    std::vector<double> times;
    std::vector<double> values;
};

struct CustomScalarFn {
    std::function<double(double)> fn;
};

using ScalarFunction =
    std::variant<ConstantFn, SinusoidalFn, PolynomialFn, SampledFn, CustomScalarFn>;

inline double eval_scalar(const ScalarFunction& f, double t) {
    return std::visit(
        [t](const auto& g) -> double {
            using G = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<G, ConstantFn>) {
                return g.value;
            } else if constexpr (std::is_same_v<G, SinusoidalFn>) {
                return g.offset + g.amplitude * std::sin(g.omega * t + g.phase);
            } else if constexpr (std::is_same_v<G, PolynomialFn>) {
                double acc = 0.0;
                for (auto it = g.coefficients.rbegin(); it != g.coefficients.rend(); ++it)
                    acc = acc * t + *it;
                return acc;
            } else if constexpr (std::is_same_v<G, SampledFn>) {
                return detail::interp_linear(g.times, g.values, t);
            } else {
                return g.fn(t);
            }
        },
        f);
}

// ---------------------------------------------------------------------------
// Delay specification: a single lag tau(t) in [0, tau_bar], or a lag window
// [tau1(t), tau2(t)] with kernel alpha on [0, tau_bar].
// ---------------------------------------------------------------------------

enum class DelayKind { Pointwise, Distributed };

struct DelaySpec {
    DelayKind kind = DelayKind::Pointwise;
    double tau_bar = 0.0;
    ScalarFunction tau;           // pointwise lag
    ScalarFunction tau1, tau2;    // distributed lag window edges
    ScalarFunction alpha;         // distributed kernel, positive on [0, tau_bar]
};

// Single-lag evaluation; throws if the user function escapes [0, tau_bar].
inline double eval_delay(const DelaySpec& spec, double t) {
    if (spec.kind != DelayKind::Pointwise)
        detail::fail("eval_delay: spec is not a pointwise delay");
    const double tau = eval_scalar(spec.tau, t);
    const double slack = 1e-12 * std::max(1.0, spec.tau_bar);
    if (!(tau >= -slack && tau <= spec.tau_bar + slack)) {
        std::ostringstream msg;
        msg << "delay function violates 0 <= tau(t) <= tau_bar at t=" << t << ": tau=" << tau
            << ", tau_bar=" << spec.tau_bar;
        throw std::domain_error(msg.str());
    }
    return std::min(std::max(tau, 0.0), spec.tau_bar);
}

// Lag-window evaluation; enforces 0 <= tau1(t) < tau2(t) <= tau_bar.
inline std::pair<double, double> eval_delay_bounds(const DelaySpec& spec, double t) {
    if (spec.kind != DelayKind::Distributed)
        detail::fail("eval_delay_bounds: spec is not a distributed delay");
    const double t1 = eval_scalar(spec.tau1, t);
    const double t2 = eval_scalar(spec.tau2, t);
    const double slack = 1e-12 * std::max(1.0, spec.tau_bar);
    if (!(t1 >= -slack && t1 < t2 && t2 <= spec.tau_bar + slack)) {
        std::ostringstream msg;
        msg << "distributed delay violates 0 <= tau1(t) < tau2(t) <= tau_bar at t=" << t
            << ": tau1=" << t1 << ", tau2=" << t2 << ", tau_bar=" << spec.tau_bar;
        throw std::domain_error(msg.str());
    }
    return {std::max(t1, 0.0), std::min(t2, spec.tau_bar)};
}

// h(t) = integral of alpha over [tau1(t), tau2(t)], composite trapezoid with
// `quadrature_resolution` subintervals. Strictly positive for a valid kernel.
inline double compute_h(const DelaySpec& spec, double t, int quadrature_resolution) {
    if (quadrature_resolution < 1)
        detail::fail("compute_h: quadrature_resolution must be >= 1");
    const auto [a, b] = eval_delay_bounds(spec, t);
    const double h = (b - a) / quadrature_resolution;
    double acc = 0.5 * (eval_scalar(spec.alpha, a) + eval_scalar(spec.alpha, b));
    for (int k = 1; k < quadrature_resolution; ++k)
        acc += eval_scalar(spec.alpha, a + k * h);
    const double result = acc * h;
    if (!(result > 0.0)) {
        std::ostringstream msg;
        msg << "compute_h: non-positive lag-window mass h(" << t << ")=" << result
            << " (kernel must be positive and tau1 < tau2)";
        throw std::domain_error(msg.str());
    }
    return result;
}

// ---------------------------------------------------------------------------
// Influence function: either a general positive pair function psi(x, y) or a
// radial difference form psi~(|x - y|). K is the declared supremum; every
// probed value is cross-checked against it.
// ---------------------------------------------------------------------------

enum class InfluenceForm { General, DifferenceForm };

struct ConstantInfluence {
    double value = 1.0;
};

// offset + amplitude * sin(x[0]); x is the first (current-state) argument
struct OffsetSinInfluence {
    double offset = 0.0;
    double amplitude = 0.0;
};

// scale / (1 + r^2)^exponent
struct RationalInfluence {
    double scale = 1.0;
    double exponent = 1.0;
};

// floor + scale * exp(-(r / width)^2)
struct GaussianInfluence {
    double scale = 1.0;
    double width = 1.0;
    double floor = 0.0;
};

struct CustomPairInfluence {
    std::function<double(std::span<const double>, std::span<const double>)> fn;
};

struct CustomRadialInfluence {
    std::function<double(double)> fn;
};

using GeneralInfluenceFn = std::variant<ConstantInfluence, OffsetSinInfluence, CustomPairInfluence>;
using RadialInfluenceFn =
    std::variant<ConstantInfluence, RationalInfluence, GaussianInfluence, CustomRadialInfluence>;

struct InfluenceSpec {
    InfluenceForm form = InfluenceForm::General;
    double K = 1.0;
    std::optional<double> psi0_override;
    GeneralInfluenceFn general;
    RadialInfluenceFn radial;

    double evaluate(std::span<const double> x, std::span<const double> y) const {
        double value;
        if (form == InfluenceForm::General) {
            value = std::visit(
                [&](const auto& g) -> double {
                    using G = std::decay_t<decltype(g)>;
                    if constexpr (std::is_same_v<G, ConstantInfluence>) {
                        return g.value;
                    } else if constexpr (std::is_same_v<G, OffsetSinInfluence>) {
                        return g.offset + g.amplitude * std::sin(x[0]);
                    } else {
                        return g.fn(x, y);
                    }
                },
                general);
        } else {
            value = evaluate_radial_raw(distance(x, y));
        }
        check_probe(value);
        return value;
    }

    // Difference form only: psi~(r).
    double evaluate_radial(double r) const {
        if (form != InfluenceForm::DifferenceForm)
            detail::fail("evaluate_radial: influence is not in difference form");
        const double value = evaluate_radial_raw(r);
        check_probe(value);
        return value;
    }

  private:
    double evaluate_radial_raw(double r) const {
        return std::visit(
            [r](const auto& g) -> double {
                using G = std::decay_t<decltype(g)>;
                if constexpr (std::is_same_v<G, ConstantInfluence>) {
                    return g.value;
                } else if constexpr (std::is_same_v<G, RationalInfluence>) {
                    return g.scale / std::pow(1.0 + r * r, g.exponent);
                } else if constexpr (std::is_same_v<G, GaussianInfluence>) {
                    const double u = r / g.width;
                    return g.floor + g.scale * std::exp(-u * u);
                } else {
                    return g.fn(r);
                }
            },
            radial);
    }

    void check_probe(double value) const {
        if (!std::isfinite(value) || value <= 0.0) {
            std::ostringstream msg;
            msg << "influence function returned a non-positive or non-finite value " << value
                << "; it must be strictly positive everywhere";
            throw std::domain_error(msg.str());
        }
        if (value > K * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "influence value " << value << " exceeds the declared supremum K=" << K
                << "; K must be a true upper bound";
            throw std::domain_error(msg.str());
        }
    }
};

// Minimum of the influence on the region the states provably stay in: the
// product of balls of radius `bound` (= M0) for the general form, or the
// distance range [0, bound] (= D0) for the difference form. Grid-sampled;
// psi0_override wins when set.
inline double compute_psi0(const InfluenceSpec& influence, std::size_t dimension, double bound,
                           int grid_resolution) {
    if (influence.psi0_override) {
        if (!(*influence.psi0_override > 0.0))
            detail::fail("psi0_override must be positive");
        return *influence.psi0_override;
    }
    if (grid_resolution < 2) detail::fail("compute_psi0: grid_resolution must be >= 2");
    if (!(bound >= 0.0)) detail::fail("compute_psi0: bound must be >= 0");

    double best = std::numeric_limits<double>::infinity();
    if (influence.form == InfluenceForm::DifferenceForm) {
        for (double r : detail::linspace(0.0, bound, static_cast<std::size_t>(grid_resolution)))
            best = std::min(best, influence.evaluate_radial(r));
    } else {
        if (dimension > 3)
            detail::fail(
                "compute_psi0: general-form grid sampling supports dimension <= 3; "
                "set psi0_override for higher dimensions");
        const auto axis =
            detail::linspace(-bound, bound, static_cast<std::size_t>(grid_resolution));
        std::vector<double> ball;  // flat d-vectors with |p| <= bound
        std::vector<std::size_t> idx(dimension, 0);
        const double r2max = bound * bound * (1.0 + 1e-12);
        while (true) {
            double r2 = 0.0;
            for (std::size_t k = 0; k < dimension; ++k) r2 += axis[idx[k]] * axis[idx[k]];
            if (r2 <= r2max)
                for (std::size_t k = 0; k < dimension; ++k) ball.push_back(axis[idx[k]]);
            std::size_t k = 0;
            for (; k < dimension; ++k) {
                if (++idx[k] < axis.size()) break;
                idx[k] = 0;
            }
            if (k == dimension) break;
        }
        const std::size_t n = ball.size() / dimension;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = 0; b < n; ++b)
                best = std::min(best, influence.evaluate(slice(ball, a, dimension),
                                                         slice(ball, b, dimension)));
    }
    if (!(best > 0.0))
        throw std::domain_error("compute_psi0: sampled minimum is not positive; the influence "
                                "function violates the positivity assumption");
    return best;
}

// ---------------------------------------------------------------------------
// Initial history: per-agent continuous functions on [-tau_bar, 0].
// ---------------------------------------------------------------------------

struct ConstantHistory {
    std::vector<double> value;  // d entries
};

// value(s) = sum_k coefficients[k] * s^k, coefficients[k] a d-vector
struct PolynomialHistory {
    std::vector<std::vector<double>> coefficients;
};

struct SampledHistory {
    std::vector<double> times;                // within [-tau_bar, 0], sorted
    std::vector<std::vector<double>> values;  // d-vectors
};

struct CustomHistory {
    std::function<void(double, std::span<double>)> fn;
};

using HistoryFunction =
    std::variant<ConstantHistory, PolynomialHistory, SampledHistory, CustomHistory>;

struct InitialHistory {
    double tau_bar = 0.0;
    std::size_t dimension = 0;
    std::vector<HistoryFunction> agents;
};

inline void eval_history(const InitialHistory& history, std::size_t agent, double s,
                         std::span<double> out) {
    if (agent >= history.agents.size()) {
        std::ostringstream msg;
        msg << "eval_history: agent index " << agent << " out of range (N="
            << history.agents.size() << ")";
        throw std::out_of_range(msg.str());
    }
    const double slack = 1e-9 * std::max(1.0, history.tau_bar);
    if (!(s >= -history.tau_bar - slack && s <= slack)) {
        std::ostringstream msg;
        msg << "eval_history: s=" << s << " outside the history domain [-tau_bar, 0] = [-"
            << history.tau_bar << ", 0]";
        throw std::out_of_range(msg.str());
    }
    s = std::min(std::max(s, -history.tau_bar), 0.0);
    std::visit(
        [&](const auto& g) {
            using G = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<G, ConstantHistory>) {
                for (std::size_t k = 0; k < out.size(); ++k) out[k] = g.value[k];
            } else if constexpr (std::is_same_v<G, PolynomialHistory>) {
                for (std::size_t k = 0; k < out.size(); ++k) {
                    double acc = 0.0;
                    for (auto it = g.coefficients.rbegin(); it != g.coefficients.rend(); ++it)
                        acc = acc * s + (*it)[k];
                    out[k] = acc;
                }
            } else if constexpr (std::is_same_v<G, SampledHistory>) {
                if (s <= g.times.front()) {
                    for (std::size_t k = 0; k < out.size(); ++k) out[k] = g.values.front()[k];
                    return;
                }
                if (s >= g.times.back()) {
                    for (std::size_t k = 0; k < out.size(); ++k) out[k] = g.values.back()[k];
                    return;
                }
                std::size_t hi = 1;
                while (g.times[hi] < s) ++hi;
                const double w = (s - g.times[hi - 1]) / (g.times[hi] - g.times[hi - 1]);
                for (std::size_t k = 0; k < out.size(); ++k)
                    out[k] = (1.0 - w) * g.values[hi - 1][k] + w * g.values[hi][k];
            } else {
                g.fn(s, out);
            }
        },
        history.agents[agent]);
}

inline std::vector<double> eval_history(const InitialHistory& history, std::size_t agent,
                                        double s) {
    std::vector<double> out(history.dimension);
    eval_history(history, agent, s, out);
    return out;
}

// ---------------------------------------------------------------------------
// Solver parameters and the full scenario.
// ---------------------------------------------------------------------------

struct SolverParams {
    double step = 0.0;
    int corrector_iterations = 2;     // fixed-point passes for intra-step delayed arguments
    int quadrature_points_per_step = 4;
};

struct Scenario {
    std::size_t agent_count = 0;
    std::size_t dimension = 0;
    double horizon = 0.0;
    DelaySpec delay;
    InfluenceSpec influence;
    InitialHistory history;
    SolverParams solver;

    // Semantic validation; throws std::invalid_argument / std::domain_error
    // naming the violated rule. Delay laws are sampled on a 10^4-point grid
    // of [0, horizon], the kernel and histories on [0, tau_bar] / [-tau_bar, 0].
    void validate() const {
        if (agent_count < 2) detail::fail("agent_count must be >= 2");
        if (dimension < 1) detail::fail("dimension must be >= 1");
        if (!(horizon > 0.0)) detail::fail("horizon must be > 0");
        if (!(delay.tau_bar > 0.0))
            detail::fail("delay.tau_bar must be > 0 (the delay bound 0 <= tau(t) <= tau_bar "
                         "requires a positive tau_bar)");
        if (history.tau_bar != delay.tau_bar)
            detail::fail("history domain [-tau_bar, 0] must use the same tau_bar as the delay "
                         "spec");
        if (history.dimension != dimension)
            detail::fail("history dimension does not match scenario dimension");
        if (history.agents.size() != agent_count)
            detail::fail("history must provide exactly one function per agent");
        if (!(influence.K > 0.0)) detail::fail("influence.K must be > 0");
        if (influence.psi0_override && !(*influence.psi0_override > 0.0))
            detail::fail("influence.psi0_override must be > 0 when set");

        if (!(solver.step > 0.0)) detail::fail("solver.step must be > 0");
        if (solver.step > delay.tau_bar / 4.0 * (1.0 + 1e-12))
            detail::fail("solver.step must satisfy step <= tau_bar / 4");
        const double steps = horizon / solver.step;
        if (std::abs(steps - std::llround(steps)) * solver.step >
            1e-9 * std::max(1.0, horizon))
            detail::fail("solver.step must divide horizon");
        if (solver.corrector_iterations < 0)
            detail::fail("solver.corrector_iterations must be >= 0");
        if (solver.quadrature_points_per_step < 1)
            detail::fail("solver.quadrature_points_per_step must be >= 1");

        // Delay laws: bounds are re-checked on every evaluation; sampling here
        // rejects ill-formed functions before any integration starts.
        constexpr std::size_t kDelaySamples = 10000;
        for (double t : detail::linspace(0.0, horizon, kDelaySamples)) {
            if (delay.kind == DelayKind::Pointwise)
                (void)eval_delay(delay, t);
            else
                (void)eval_delay_bounds(delay, t);
        }
        if (delay.kind == DelayKind::Distributed) {
            for (double s : detail::linspace(0.0, delay.tau_bar, 1024)) {
                const double a = eval_scalar(delay.alpha, s);
                if (!(a > 0.0) || !std::isfinite(a)) {
                    std::ostringstream msg;
                    msg << "kernel alpha must be strictly positive on [0, tau_bar]; alpha(" << s
                        << ")=" << a;
                    throw std::invalid_argument(msg.str());
                }
            }
        }

        std::vector<double> buf(dimension);
        for (std::size_t i = 0; i < agent_count; ++i) {
            for (double s : detail::linspace(-delay.tau_bar, 0.0, 257)) {
                eval_history(history, i, s, buf);
                if (!all_finite(buf)) {
                    std::ostringstream msg;
                    msg << "history of agent " << i << " is non-finite at s=" << s;
                    throw std::invalid_argument(msg.str());
                }
            }
        }
    }
};

}  // namespace hkdelay::model
