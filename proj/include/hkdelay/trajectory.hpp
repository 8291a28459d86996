#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hkdelay/model.hpp"
#include "hkdelay/vec_ops.hpp"

namespace hkdelay::solver {

// Cubic Hermite interpolant on one step of width h: endpoint states xk, xk1
// and endpoint derivatives fk, fk1, evaluated at relative position theta.
// theta outside [0, 1] evaluates the polynomial extension (used by the
// intra-step corrector, which needs values slightly beyond the last node).
inline void hermite_eval(double theta, double h, std::span<const double> xk,
                         std::span<const double> fk, std::span<const double> xk1,
                         std::span<const double> fk1, std::span<double> out) {
    const double t2 = theta * theta;
    const double h10 = theta * (1.0 - theta) * (1.0 - theta);
    const double h01 = t2 * (3.0 - 2.0 * theta);
    const double h11 = t2 * (theta - 1.0);
    // Incremental form (h00 == 1 - h01 as polynomials): a node pair with equal
    // states and zero derivatives reproduces the state bitwise, which keeps
    // consensus an exact equilibrium of the integrator.
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = xk[k] + h01 * (xk1[k] - xk[k]) + h * (h10 * fk[k] + h11 * fk1[k]);
}

// Solution of a delayed scenario on a uniform grid, plus everything needed to
// evaluate it at arbitrary times: the initial history for t <= 0 and stored
// node derivatives for cubic Hermite interpolation on [0, T].
struct Trajectory {
    std::size_t agent_count = 0;
    std::size_t dimension = 0;
    double step = 0.0;
    model::InitialHistory history;
    std::vector<double> times;                // t_k = k * step, up to T
    std::vector<std::vector<double>> states;  // per node: flat agent-major N*d
    std::vector<std::vector<double>> derivs;  // per node: flat agent-major N*d
    std::vector<std::string> warnings;        // corrector non-convergence reports

    double horizon() const { return times.back(); }
    double tau_bar() const { return history.tau_bar; }

    // Dense evaluation of agent `agent` at any t in [-tau_bar, T]: initial
    // history for t <= 0, cubic Hermite between bracketing nodes for t > 0.
    // Grid times reproduce the stored states exactly.
    void eval(double t, std::size_t agent, std::span<double> out) const {
        const double T = horizon();
        if (t > T + 1e-9 * std::max(1.0, T)) {
            std::ostringstream msg;
            msg << "dense evaluation at t=" << t << " beyond the trajectory horizon T=" << T;
            throw std::out_of_range(msg.str());
        }
        if (t <= 0.0) {
            model::eval_history(history, agent, t, out);
            return;
        }
        t = std::min(t, T);
        const double pos = t / step;
        const auto near = static_cast<std::size_t>(std::llround(pos));
        if (near < times.size() && std::abs(t - times[near]) <= 1e-9 * step) {
            const auto x = slice(states[near], agent, dimension);
            for (std::size_t k = 0; k < out.size(); ++k) out[k] = x[k];
            return;
        }
        auto k = static_cast<std::size_t>(pos);
        if (k >= times.size() - 1) k = times.size() - 2;
        double theta = (t - times[k]) / step;
        theta = std::min(std::max(theta, 0.0), 1.0);
        hermite_eval(theta, step, slice(states[k], agent, dimension),
                     slice(derivs[k], agent, dimension), slice(states[k + 1], agent, dimension),
                     slice(derivs[k + 1], agent, dimension), out);
    }

    std::vector<double> eval(double t, std::size_t agent) const {
        std::vector<double> out(dimension);
        eval(t, agent, out);
        return out;
    }

    // All agents at once, flat agent-major.
    void eval_all(double t, std::vector<double>& out) const {
        out.resize(agent_count * dimension);
        for (std::size_t i = 0; i < agent_count; ++i) eval(t, i, slice(out, i, dimension));
    }
};

}  // namespace hkdelay::solver
