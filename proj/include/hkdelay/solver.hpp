#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <vector>

#include "hkdelay/model.hpp"
#include "hkdelay/trajectory.hpp"
#include "hkdelay/vec_ops.hpp"

namespace hkdelay::solver {

namespace detail {

// Right-hand side of the single-lag system at time t: for each agent i,
//   x_i' = 1/(N-1) * sum_{j != i} psi(x_i(t), x_j(t - tau(t))) * (x_j(t - tau(t)) - x_i(t)).
// `current` is the (stage) state at t; `delayed(s, j, out)` supplies x_j(s).
template <class DelayedEval>
void rhs_stage_pointwise(const model::Scenario& sc, double t, std::span<const double> current,
                         const DelayedEval& delayed, std::span<double> out) {
    const std::size_t N = sc.agent_count, d = sc.dimension;
    const double ts = t - model::eval_delay(sc.delay, t);
    std::vector<double> lagged(N * d);
    for (std::size_t j = 0; j < N; ++j) delayed(ts, j, slice(lagged, j, d));

    for (std::size_t i = 0; i < N; ++i) {
        const auto xi = current.subspan(i * d, d);
        const auto oi = out.subspan(i * d, d);
        for (std::size_t k = 0; k < d; ++k) oi[k] = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            const auto xj = slice(lagged, j, d);
            const double w = sc.influence.evaluate(xi, xj);
            for (std::size_t k = 0; k < d; ++k) oi[k] += w * (xj[k] - xi[k]);
        }
        const double scale = 1.0 / static_cast<double>(N - 1);
        for (std::size_t k = 0; k < d; ++k) oi[k] *= scale;
    }
}

// Right-hand side of the lag-window system at time t: for each agent i,
//   x_i' = 1/(h(t)(N-1)) * sum_{j != i} integral over u in [tau1(t), tau2(t)] of
//          alpha(u) * psi(x_i(t), x_j(t-u)) * (x_j(t-u) - x_i(t)) du.
// The integral uses the composite trapezoid rule on the same u-nodes for the
// numerator and (via compute_h) the denominator, so a consensus state is an
// exact equilibrium of the discretization.
template <class DelayedEval>
void rhs_stage_distributed(const model::Scenario& sc, double t, std::span<const double> current,
                           const DelayedEval& delayed, std::span<double> out) {
    const std::size_t N = sc.agent_count, d = sc.dimension;
    const auto [u1, u2] = model::eval_delay_bounds(sc.delay, t);
    const double dt = sc.solver.step;
    const int m = sc.solver.quadrature_points_per_step *
                  static_cast<int>(std::ceil((u2 - u1) / dt - 1e-9));
    const int subintervals = std::max(m, sc.solver.quadrature_points_per_step);
    const double h_mass = model::compute_h(sc.delay, t, subintervals);
    const double du = (u2 - u1) / subintervals;

    std::vector<double> lagged(static_cast<std::size_t>(subintervals + 1) * N * d);
    std::vector<double> weight(subintervals + 1);  // trapezoid weight * alpha(u_q)
    for (int q = 0; q <= subintervals; ++q) {
        const double u = u1 + q * du;
        weight[q] = ((q == 0 || q == subintervals) ? 0.5 : 1.0) * du *
                    model::eval_scalar(sc.delay.alpha, u);
        for (std::size_t j = 0; j < N; ++j)
            delayed(t - u, j,
                    std::span<double>(lagged.data() + (static_cast<std::size_t>(q) * N + j) * d,
                                      d));
    }

    for (std::size_t i = 0; i < N; ++i) {
        const auto xi = current.subspan(i * d, d);
        const auto oi = out.subspan(i * d, d);
        for (std::size_t k = 0; k < d; ++k) oi[k] = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            for (int q = 0; q <= subintervals; ++q) {
                const auto xj = std::span<const double>(
                    lagged.data() + (static_cast<std::size_t>(q) * N + j) * d, d);
                const double w = weight[q] * sc.influence.evaluate(xi, xj);
                for (std::size_t k = 0; k < d; ++k) oi[k] += w * (xj[k] - xi[k]);
            }
        }
        const double scale = 1.0 / (h_mass * static_cast<double>(N - 1));
        for (std::size_t k = 0; k < d; ++k) oi[k] *= scale;
    }
}

template <class DelayedEval>
void rhs_stage(const model::Scenario& sc, double t, std::span<const double> current,
               const DelayedEval& delayed, std::span<double> out) {
    if (sc.delay.kind == model::DelayKind::Pointwise)
        rhs_stage_pointwise(sc, t, current, delayed, out);
    else
        rhs_stage_distributed(sc, t, current, delayed, out);
}

}  // namespace detail

// Right-hand side evaluated on a finished trajectory (states via dense output).
inline std::vector<double> rhs_pointwise(const model::Scenario& sc, const Trajectory& traj,
                                         double t) {
    std::vector<double> current, out(sc.agent_count * sc.dimension);
    traj.eval_all(t, current);
    detail::rhs_stage_pointwise(
        sc, t, current,
        [&](double s, std::size_t j, std::span<double> o) { traj.eval(s, j, o); }, out);
    return out;
}

inline std::vector<double> rhs_distributed(const model::Scenario& sc, const Trajectory& traj,
                                           double t) {
    std::vector<double> current, out(sc.agent_count * sc.dimension);
    traj.eval_all(t, current);
    detail::rhs_stage_distributed(
        sc, t, current,
        [&](double s, std::size_t j, std::span<double> o) { traj.eval(s, j, o); }, out);
    return out;
}

// Integrates the scenario over [0, horizon] by the method of steps: classical
// 4-stage Runge-Kutta with the fixed step, delayed arguments served by the
// dense output. When a stage needs a time inside the current open step, the
// first pass extends the previous interval's Hermite polynomial (first-order
// Taylor on the very first step) and the whole step is then re-run
// `corrector_iterations` times against the provisional current-step Hermite.
// A fixed-point change above 1e-10 after the final pass is recorded in
// Trajectory::warnings.
inline Trajectory integrate(const model::Scenario& sc) {
    sc.validate();
    const double dt = sc.solver.step;
    const auto steps = static_cast<std::size_t>(std::llround(sc.horizon / dt));
    const std::size_t N = sc.agent_count, d = sc.dimension, nd = N * d;

    Trajectory traj;
    traj.agent_count = N;
    traj.dimension = d;
    traj.step = dt;
    traj.history = sc.history;
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);
    traj.derivs.reserve(steps + 1);

    std::vector<double> x0(nd);
    for (std::size_t i = 0; i < N; ++i) model::eval_history(sc.history, i, 0.0, slice(x0, i, d));
    traj.times.push_back(0.0);
    traj.states.push_back(x0);

    std::size_t k = 0;       // index of the current step's left node
    int pass = 0;            // 0 = predictor, >= 1 = corrector re-runs
    bool used_intra = false; // any stage needed a time beyond the left node
    std::vector<double> xprov(nd), fprov(nd);

    // x_j(s) during integration: finished part of the trajectory for s <= t_k,
    // Hermite extension / provisional current-step Hermite beyond it.
    auto delayed = [&](double s, std::size_t j, std::span<double> out) {
        const double tk = traj.times[k];
        if (s <= tk + 1e-12 * std::max(1.0, tk + dt)) {
            traj.eval(std::min(s, tk), j, out);
            return;
        }
        used_intra = true;
        if (pass == 0) {
            if (k == 0) {
                const auto x = slice(traj.states[0], j, d);
                const auto f = slice(traj.derivs[0], j, d);
                for (std::size_t c = 0; c < d; ++c) out[c] = x[c] + s * f[c];
            } else {
                hermite_eval((s - traj.times[k - 1]) / dt, dt, slice(traj.states[k - 1], j, d),
                             slice(traj.derivs[k - 1], j, d), slice(traj.states[k], j, d),
                             slice(traj.derivs[k], j, d), out);
            }
        } else {
            hermite_eval((s - tk) / dt, dt, slice(traj.states[k], j, d),
                         slice(traj.derivs[k], j, d), slice(xprov, j, d), slice(fprov, j, d),
                         out);
        }
    };

    // Node-0 derivative: every delayed argument at t=0 lies in the history.
    std::vector<double> f0(nd);
    detail::rhs_stage(sc, 0.0, x0, delayed, f0);
    traj.derivs.push_back(f0);

    std::vector<double> Y(nd), f1(nd), f2(nd), f3(nd), f4(nd), xnew(nd), fnew(nd), xprev(nd);
    for (k = 0; k < steps; ++k) {
        const double tk = traj.times[k];
        const double tk1 = static_cast<double>(k + 1) * dt;
        const auto& xk = traj.states[k];

        auto run_pass = [&] {
            detail::rhs_stage(sc, tk, xk, delayed, f1);
            for (std::size_t c = 0; c < nd; ++c) Y[c] = xk[c] + 0.5 * dt * f1[c];
            detail::rhs_stage(sc, tk + 0.5 * dt, Y, delayed, f2);
            for (std::size_t c = 0; c < nd; ++c) Y[c] = xk[c] + 0.5 * dt * f2[c];
            detail::rhs_stage(sc, tk + 0.5 * dt, Y, delayed, f3);
            for (std::size_t c = 0; c < nd; ++c) Y[c] = xk[c] + dt * f3[c];
            detail::rhs_stage(sc, tk1, Y, delayed, f4);
            for (std::size_t c = 0; c < nd; ++c)
                xnew[c] = xk[c] + dt / 6.0 * (f1[c] + 2.0 * f2[c] + 2.0 * f3[c] + f4[c]);
            detail::rhs_stage(sc, tk1, xnew, delayed, fnew);
        };

        pass = 0;
        used_intra = false;
        run_pass();
        if (used_intra && sc.solver.corrector_iterations > 0) {
            for (pass = 1; pass <= sc.solver.corrector_iterations; ++pass) {
                xprov = xnew;
                fprov = fnew;
                xprev = xnew;
                run_pass();
            }
            double residual = 0.0;
            for (std::size_t c = 0; c < nd; ++c)
                residual = std::max(residual, std::abs(xnew[c] - xprev[c]));
            if (residual > 1e-10) {
                std::ostringstream msg;
                msg << "step corrector did not converge on [" << tk << ", " << tk1
                    << "]: fixed-point change " << residual << " after "
                    << sc.solver.corrector_iterations << " iteration(s)";
                traj.warnings.push_back(msg.str());
            }
        }

        traj.times.push_back(tk1);
        traj.states.push_back(xnew);
        traj.derivs.push_back(fnew);
    }
    return traj;
}

}  // namespace hkdelay::solver
