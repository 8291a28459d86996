// Tests for the integrator: right-hand sides against hand-computed values,
// closed-form references for the two-agent problems, dense-output guarantees,
// equilibrium/permutation/translation structure, and corrector diagnostics.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "hkdelay/model.hpp"
#include "hkdelay/solver.hpp"
#include "test_support.hpp"

using namespace hkdelay;

namespace {

// Three scalar agents pinned at constant history levels, single lag tau == 0.
model::Scenario three_agent_levels(double a, double b, double c) {
    model::Scenario sc = testsupport::two_agent_scenario(0.0, a, b, 0.25, 1.0);
    sc.agent_count = 3;
    sc.history.agents = {model::ConstantHistory{{a}}, model::ConstantHistory{{b}},
                         model::ConstantHistory{{c}}};
    return sc;
}

double diff12(const solver::Trajectory& traj, double t) {
    return traj.eval(t, 0)[0] - traj.eval(t, 1)[0];
}

}  // namespace

TEST_CASE("pairwise right-hand side matches hand evaluation", "[solver]") {
    SECTION("two agents, no lag") {
        const auto sc = testsupport::two_agent_scenario(0.0, 0.0, 1.0, 0.25, 1.0);
        const auto traj = solver::integrate(sc);
        const auto f = solver::rhs_pointwise(sc, traj, 0.0);
        CHECK(f[0] == 1.0);
        CHECK(f[1] == -1.0);
    }
    SECTION("three agents at levels 0, 1, 2") {
        const auto sc = three_agent_levels(0.0, 1.0, 2.0);
        const auto traj = solver::integrate(sc);
        const auto f = solver::rhs_pointwise(sc, traj, 0.0);
        CHECK(f[0] == 1.5);
        CHECK(f[1] == 0.0);
        CHECK(f[2] == -1.5);
        // The stored node-0 derivative is the same evaluation.
        CHECK(traj.derivs[0] == f);
    }
    SECTION("a consensus state is an exact equilibrium of the rhs") {
        const auto sc = three_agent_levels(0.7, 0.7, 0.7);
        const auto traj = solver::integrate(sc);
        for (double t : {0.0, 0.375, 1.0})
            for (double fk : solver::rhs_pointwise(sc, traj, t)) CHECK(fk == 0.0);
    }
}

TEST_CASE("lag-window right-hand side matches hand evaluation", "[solver]") {
    SECTION("full-window average of a constant history") {
        const double y0 = 0.7;
        const auto sc = testsupport::distributed_two_agent_scenario(y0, 0.0, 0.05, 2.0);
        const auto traj = solver::integrate(sc);
        const auto f = solver::rhs_distributed(sc, traj, 0.0);
        CHECK_THAT(f[0], Catch::Matchers::WithinAbs(-y0, 1e-12));
        CHECK_THAT(f[1], Catch::Matchers::WithinAbs(y0, 1e-12));
    }
    SECTION("a constant integrand factors out of any kernel") {
        // alpha(u) = u weights old information more, but with constant
        // histories the weighted average collapses to x2 - x1 regardless.
        auto sc = testsupport::distributed_two_agent_scenario(0.7, 0.0, 0.05, 2.0);
        sc.delay.alpha = model::PolynomialFn{{0.0, 1.0}};

        solver::Trajectory traj;
        traj.agent_count = 2;
        traj.dimension = 1;
        traj.step = sc.solver.step;
        traj.history = sc.history;
        traj.times = {0.0};
        traj.states = {{0.7, 0.0}};
        traj.derivs = {{0.0, 0.0}};

        const auto f = solver::rhs_distributed(sc, traj, 0.0);
        CHECK_THAT(f[0], Catch::Matchers::WithinAbs(0.0 - 0.7, 1e-13));
        CHECK_THAT(f[1], Catch::Matchers::WithinAbs(0.7 - 0.0, 1e-13));
    }
    SECTION("identical histories give exactly zero slopes") {
        const auto sc = testsupport::distributed_two_agent_scenario(0.4, 0.4, 0.05, 2.0);
        const auto traj = solver::integrate(sc);
        for (double fk : solver::rhs_distributed(sc, traj, 0.0)) CHECK(fk == 0.0);
    }
}

TEST_CASE("undelayed two-agent problem matches y' = -2y", "[solver]") {
    const auto sc = testsupport::two_agent_scenario(0.0, 1.0, 0.0, 1e-3, 1.0);
    const auto traj = solver::integrate(sc);
    CHECK(traj.warnings.empty());

    const double gap1 = diff12(traj, 1.0);
    CHECK_THAT(gap1, Catch::Matchers::WithinRel(std::exp(-2.0), 1e-6));
    CHECK_THAT(gap1, Catch::Matchers::WithinAbs(0.135335283236613, 1e-9));

    // Mid-step dense evaluation stays on the closed form.
    for (double t : {0.0314, 0.2501, 0.35059, 0.77777, 0.9995})
        CHECK_THAT(diff12(traj, t), Catch::Matchers::WithinRel(std::exp(-2.0 * t), 1e-6));
}

TEST_CASE("constant-lag two-agent problem matches the stepwise closed form", "[solver]") {
    // y' = -y(t) - y(t-1), y == 1 on [-1, 0]:
    //   y(t) = 2 e^{-t} - 1                 on [0, 1]
    //   y(t) = 1 + 2 e^{-t} - 2 e t e^{-t}  on [1, 2]
    const auto sc = testsupport::two_agent_scenario(1.0, 0.5, -0.5, 1e-3, 2.0);
    const auto traj = solver::integrate(sc);
    REQUIRE(traj.warnings.empty());

    double worst0 = 0.0;
    for (int k = 0; k <= 500; ++k) {
        const double t = k / 500.0;
        worst0 = std::max(worst0, std::abs(diff12(traj, t) - (2.0 * std::exp(-t) - 1.0)));
    }
    CHECK(worst0 <= 1e-5);

    CHECK_THAT(diff12(traj, 1.0), Catch::Matchers::WithinAbs(-0.264241117657115, 1e-9));
    CHECK(std::abs(diff12(traj, std::log(2.0))) <= 1e-5);  // the sign change

    const auto closed1 = [](double t) {
        return 1.0 + 2.0 * std::exp(-t) - 2.0 * std::exp(1.0) * t * std::exp(-t);
    };
    CHECK_THAT(diff12(traj, 1.5), Catch::Matchers::WithinAbs(closed1(1.5), 1e-9));
    CHECK_THAT(diff12(traj, 1.5), Catch::Matchers::WithinAbs(-0.373331658841041, 1e-12));
    CHECK_THAT(diff12(traj, 2.0), Catch::Matchers::WithinAbs(closed1(2.0), 1e-9));
}

TEST_CASE("observed convergence order is at least 2.5 on the constant-lag problem",
          "[solver]") {
    const auto closed1 = [](double t) {
        return 1.0 + 2.0 * std::exp(-t) - 2.0 * std::exp(1.0) * t * std::exp(-t);
    };
    const auto err_at = [&](double step) {
        const auto sc = testsupport::two_agent_scenario(1.0, 0.5, -0.5, step, 2.0);
        return std::abs(diff12(solver::integrate(sc), 2.0) - closed1(2.0));
    };
    const double coarse = err_at(1e-2);
    const double fine = err_at(1e-3);
    REQUIRE(fine > 0.0);
    const double order = std::log10(coarse / fine);  // err ~ step^p over one decade
    CHECK(order >= 2.5);
}

TEST_CASE("dense output collocates the grid and stays continuous", "[solver]") {
    const auto sc = testsupport::two_agent_scenario(0.5, 1.0, 0.0, 0.05, 2.0);
    const auto traj = solver::integrate(sc);

    SECTION("grid times reproduce stored states exactly") {
        for (std::size_t k : {std::size_t{0}, std::size_t{7}, std::size_t{23},
                              traj.times.size() - 1}) {
            for (std::size_t i = 0; i < 2; ++i)
                CHECK(traj.eval(traj.times[k], i)[0] == traj.states[k][i]);
        }
    }
    SECTION("the history region serves eval_history values") {
        CHECK(traj.eval(-0.5, 0)[0] == 1.0);
        CHECK(traj.eval(-1.0, 1)[0] == 0.0);
    }
    SECTION("continuous at t = 0 and at interior nodes") {
        const double delta = 1e-8;
        CHECK_THAT(traj.eval(delta, 0)[0],
                   Catch::Matchers::WithinAbs(traj.eval(0.0, 0)[0], 1e-6));
        for (double tk : {0.05, 0.75, 1.95})
            CHECK_THAT(traj.eval(tk - delta, 0)[0],
                       Catch::Matchers::WithinAbs(traj.eval(tk + delta, 0)[0], 1e-6));
    }
    SECTION("domain edges") {
        CHECK(traj.eval(2.0, 0)[0] == traj.states.back()[0]);
        CHECK_NOTHROW(traj.eval(2.0 + 1e-10, 0));          // rounding dust clamps
        CHECK_THROWS_AS(traj.eval(2.1, 0), std::out_of_range);
        CHECK_THROWS_AS(traj.eval(-1.5, 0), std::out_of_range);
    }
}

TEST_CASE("identical constant histories yield a bitwise-constant trajectory", "[solver]") {
    SECTION("single lag") {
        auto sc = testsupport::two_agent_scenario(0.5, 0.7, 0.7, 0.25, 2.0);
        sc.delay.tau = model::SinusoidalFn{0.5, 0.5, 1.3, 0.2};  // touches zero
        const auto traj = solver::integrate(sc);
        for (const auto& node : traj.states) {
            CHECK(node[0] == 0.7);
            CHECK(node[1] == 0.7);
        }
        for (const auto& node : traj.derivs)
            for (double fk : node) CHECK(fk == 0.0);
        CHECK(traj.warnings.empty());
    }
    SECTION("lag window") {
        const auto sc = testsupport::distributed_two_agent_scenario(-0.3, -0.3, 0.25, 2.0);
        const auto traj = solver::integrate(sc);
        for (const auto& node : traj.states)
            for (double xk : node) CHECK(xk == -0.3);
    }
}

TEST_CASE("relabeling agents permutes the trajectory", "[solver]") {
    SECTION("three agents: exact under a swap of the last two") {
        const auto sc = three_agent_levels(0.1, 0.8, -0.4);
        auto swapped = sc;
        std::swap(swapped.history.agents[1], swapped.history.agents[2]);

        const auto a = solver::integrate(sc);
        const auto b = solver::integrate(swapped);
        REQUIRE(a.states.size() == b.states.size());
        for (std::size_t k = 0; k < a.states.size(); ++k) {
            CHECK(a.states[k][0] == b.states[k][0]);
            CHECK(a.states[k][1] == b.states[k][2]);
            CHECK(a.states[k][2] == b.states[k][1]);
        }
    }
    SECTION("eight agents: reversal agrees to rounding error") {
        std::mt19937 rng(99);
        auto sc = testsupport::random_pointwise_scenario(rng);
        sc.agent_count = 8;
        sc.history.agents.resize(8);
        sc.horizon = 4.0 * sc.delay.tau_bar;

        auto reversed = sc;
        std::reverse(reversed.history.agents.begin(), reversed.history.agents.end());

        const auto a = solver::integrate(sc);
        const auto b = solver::integrate(reversed);
        const std::size_t d = sc.dimension;
        for (std::size_t k = 0; k < a.states.size(); k += 16) {
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t c = 0; c < d; ++c)
                    CHECK_THAT(a.states[k][i * d + c],
                               Catch::Matchers::WithinAbs(
                                   b.states[k][(7 - i) * d + c], 1e-12));
        }
    }
}

TEST_CASE("difference-form dynamics are translation invariant", "[solver]") {
    std::mt19937 rng(2024);
    auto sc = testsupport::random_pointwise_scenario(rng);
    sc.horizon = 6.0 * sc.delay.tau_bar;
    REQUIRE(sc.influence.form == model::InfluenceForm::DifferenceForm);

    const double c = 0.35;
    auto shifted = sc;
    for (auto& agent : shifted.history.agents) {
        if (auto* h = std::get_if<model::ConstantHistory>(&agent)) {
            for (auto& v : h->value) v += c;
        } else if (auto* p = std::get_if<model::PolynomialHistory>(&agent)) {
            for (auto& v : p->coefficients[0]) v += c;
        } else if (auto* s = std::get_if<model::SampledHistory>(&agent)) {
            for (auto& knot : s->values)
                for (auto& v : knot) v += c;
        } else {
            FAIL("unexpected history kind from the generator");
        }
    }

    const auto a = solver::integrate(sc);
    const auto b = solver::integrate(shifted);
    for (std::size_t k = 0; k < a.states.size(); k += 8) {
        const double tol = 1e-12 * (1.0 + a.times[k]);
        for (std::size_t q = 0; q < a.states[k].size(); ++q)
            CHECK_THAT(b.states[k][q] - a.states[k][q],
                       Catch::Matchers::WithinAbs(c, tol));
    }
}

TEST_CASE("the corrector reports non-convergence instead of guessing", "[solver]") {
    // Zero lag forces every stage inside the open step; one coarse corrector
    // pass leaves a fixed-point change far above the 1e-10 acceptance.
    auto sc = testsupport::two_agent_scenario(0.0, 1.0, 0.0, 0.25, 1.0);
    sc.solver.corrector_iterations = 1;
    const auto traj = solver::integrate(sc);
    REQUIRE_FALSE(traj.warnings.empty());
    CHECK(traj.warnings.front().find("corrector") != std::string::npos);

    // A fine step converges within the default two passes.
    const auto quiet =
        solver::integrate(testsupport::two_agent_scenario(0.0, 1.0, 0.0, 1e-3, 1.0));
    CHECK(quiet.warnings.empty());
}
