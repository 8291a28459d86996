#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hkdelay/model.hpp"

namespace hkdelay::cli {

using nlohmann::json;

// Grid request embedded in a scenario document: one certificate per value of
// the swept parameter.
struct SweepSpec {
    std::string parameter;       // "tau_bar", "K", "step", or "horizon"
    std::vector<double> values;
};

// Mean-field ladder request embedded in a scenario document.
struct MeanFieldSpec {
    std::vector<std::size_t> ladder{8, 32, 128};
    double tau_star = 0.0;
    std::optional<double> lipschitz_L;
    int samples_per_window = 33;
};

struct ScenarioDocument {
    model::Scenario scenario;
    std::optional<SweepSpec> sweep;
    std::optional<MeanFieldSpec> meanfield;
};

namespace detail {

[[noreturn]] inline void bad(const std::string& ctx, const std::string& what) {
    throw std::invalid_argument("scenario config: " + ctx + ": " + what);
}

inline void check_keys(const json& j, const std::string& ctx,
                       const std::set<std::string>& required,
                       const std::set<std::string>& optional) {
    if (!j.is_object()) bad(ctx, "expected an object");
    for (const auto& item : j.items()) {
        if (!required.count(item.key()) && !optional.count(item.key()))
            bad(ctx, "unknown field \"" + item.key() + "\"");
    }
    for (const auto& key : required)
        if (!j.contains(key)) bad(ctx, "missing required field \"" + key + "\"");
}

inline double get_number(const json& j, const std::string& ctx, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_number()) bad(ctx, "field \"" + key + "\" must be a number");
    return v.get<double>();
}

inline double get_number_or(const json& j, const std::string& ctx, const std::string& key,
                            double fallback) {
    return j.contains(key) ? get_number(j, ctx, key) : fallback;
}

inline long get_integer(const json& j, const std::string& ctx, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_number_integer()) bad(ctx, "field \"" + key + "\" must be an integer");
    return v.get<long>();
}

inline std::string get_string(const json& j, const std::string& ctx, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_string()) bad(ctx, "field \"" + key + "\" must be a string");
    return v.get<std::string>();
}

inline std::vector<double> get_number_array(const json& v, const std::string& ctx) {
    if (!v.is_array() || v.empty()) bad(ctx, "expected a non-empty array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) {
        if (!e.is_number()) bad(ctx, "expected numbers only");
        out.push_back(e.get<double>());
    }
    return out;
}

inline model::ScalarFunction parse_scalar_fn(const json& j, const std::string& ctx) {
    if (!j.is_object()) bad(ctx, "expected an object with a \"kind\" field");
    const std::string kind = get_string(j, ctx, "kind");
    if (kind == "constant") {
        check_keys(j, ctx, {"kind", "value"}, {});
        return model::ConstantFn{get_number(j, ctx, "value")};
    }
    if (kind == "sinusoidal") {
        check_keys(j, ctx, {"kind"}, {"offset", "amplitude", "omega", "phase"});
        return model::SinusoidalFn{get_number_or(j, ctx, "offset", 0.0),
                                   get_number_or(j, ctx, "amplitude", 0.0),
                                   get_number_or(j, ctx, "omega", 1.0),
                                   get_number_or(j, ctx, "phase", 0.0)};
    }
    if (kind == "polynomial") {
        check_keys(j, ctx, {"kind", "coefficients"}, {});
        return model::PolynomialFn{get_number_array(j.at("coefficients"),
                                                    ctx + ".coefficients")};
    }
    if (kind == "piecewise_linear") {
        check_keys(j, ctx, {"kind", "times", "values"}, {});
        model::SampledFn fn{get_number_array(j.at("times"), ctx + ".times"),
                            get_number_array(j.at("values"), ctx + ".values")};
        if (fn.times.size() != fn.values.size() || fn.times.size() < 2)
            bad(ctx, "\"times\" and \"values\" must have equal length >= 2");
        for (std::size_t k = 1; k < fn.times.size(); ++k)
            if (!(fn.times[k] > fn.times[k - 1]))
                bad(ctx, "\"times\" must be strictly increasing");
        return fn;
    }
    bad(ctx, "unknown scalar function kind \"" + kind + "\"");
}

inline model::DelaySpec parse_delay(const json& j, const std::string& ctx) {
    const std::string kind = get_string(j, ctx, "kind");
    model::DelaySpec spec;
    spec.tau_bar = get_number(j, ctx, "tau_bar");
    if (kind == "pointwise") {
        check_keys(j, ctx, {"kind", "tau_bar", "tau"}, {});
        spec.kind = model::DelayKind::Pointwise;
        spec.tau = parse_scalar_fn(j.at("tau"), ctx + ".tau");
        return spec;
    }
    if (kind == "distributed") {
        check_keys(j, ctx, {"kind", "tau_bar", "tau1", "tau2", "alpha"}, {});
        spec.kind = model::DelayKind::Distributed;
        spec.tau1 = parse_scalar_fn(j.at("tau1"), ctx + ".tau1");
        spec.tau2 = parse_scalar_fn(j.at("tau2"), ctx + ".tau2");
        spec.alpha = parse_scalar_fn(j.at("alpha"), ctx + ".alpha");
        return spec;
    }
    bad(ctx, "delay kind must be \"pointwise\" or \"distributed\"");
}

inline model::InfluenceSpec parse_influence(const json& j, const std::string& ctx) {
    check_keys(j, ctx, {"form", "K", "psi"}, {"psi0_override"});
    model::InfluenceSpec spec;
    spec.K = get_number(j, ctx, "K");
    if (j.contains("psi0_override")) spec.psi0_override = get_number(j, ctx, "psi0_override");
    const std::string form = get_string(j, ctx, "form");
    const auto& psi = j.at("psi");
    const std::string pctx = ctx + ".psi";
    const std::string kind = get_string(psi, pctx, "kind");
    if (form == "difference") {
        spec.form = model::InfluenceForm::DifferenceForm;
        if (kind == "constant") {
            check_keys(psi, pctx, {"kind", "value"}, {});
            spec.radial = model::ConstantInfluence{get_number(psi, pctx, "value")};
        } else if (kind == "rational") {
            check_keys(psi, pctx, {"kind", "scale"}, {"exponent"});
            spec.radial = model::RationalInfluence{get_number(psi, pctx, "scale"),
                                                   get_number_or(psi, pctx, "exponent", 1.0)};
        } else if (kind == "gaussian") {
            check_keys(psi, pctx, {"kind", "scale", "width"}, {"floor"});
            spec.radial = model::GaussianInfluence{get_number(psi, pctx, "scale"),
                                                   get_number(psi, pctx, "width"),
                                                   get_number_or(psi, pctx, "floor", 0.0)};
        } else {
            bad(pctx, "difference-form influence kind must be \"constant\", \"rational\", or "
                      "\"gaussian\"");
        }
        return spec;
    }
    if (form == "general") {
        spec.form = model::InfluenceForm::General;
        if (kind == "constant") {
            check_keys(psi, pctx, {"kind", "value"}, {});
            spec.general = model::ConstantInfluence{get_number(psi, pctx, "value")};
        } else if (kind == "offset_sin") {
            check_keys(psi, pctx, {"kind", "offset", "amplitude"}, {});
            spec.general = model::OffsetSinInfluence{get_number(psi, pctx, "offset"),
                                                     get_number(psi, pctx, "amplitude")};
        } else {
            bad(pctx, "general-form influence kind must be \"constant\" or \"offset_sin\"");
        }
        return spec;
    }
    bad(ctx, "influence form must be \"general\" or \"difference\"");
}

inline std::vector<std::vector<double>> get_vector_array(const json& v, const std::string& ctx,
                                                         std::size_t dimension) {
    if (!v.is_array() || v.empty()) bad(ctx, "expected a non-empty array");
    std::vector<std::vector<double>> out;
    out.reserve(v.size());
    for (const auto& e : v) {
        auto vec = get_number_array(e, ctx);
        if (vec.size() != dimension) bad(ctx, "entries must have length = dimension");
        out.push_back(std::move(vec));
    }
    return out;
}

inline model::HistoryFunction parse_history_fn(const json& j, const std::string& ctx,
                                               std::size_t dimension) {
    const std::string kind = get_string(j, ctx, "kind");
    if (kind == "constant") {
        check_keys(j, ctx, {"kind", "value"}, {});
        auto value = get_number_array(j.at("value"), ctx + ".value");
        if (value.size() != dimension) bad(ctx, "\"value\" must have length = dimension");
        return model::ConstantHistory{std::move(value)};
    }
    if (kind == "polynomial") {
        check_keys(j, ctx, {"kind", "coefficients"}, {});
        return model::PolynomialHistory{
            get_vector_array(j.at("coefficients"), ctx + ".coefficients", dimension)};
    }
    if (kind == "sampled") {
        check_keys(j, ctx, {"kind", "times", "values"}, {});
        model::SampledHistory fn{get_number_array(j.at("times"), ctx + ".times"),
                                 get_vector_array(j.at("values"), ctx + ".values", dimension)};
        if (fn.times.size() != fn.values.size() || fn.times.size() < 2)
            bad(ctx, "\"times\" and \"values\" must have equal length >= 2");
        for (std::size_t k = 1; k < fn.times.size(); ++k)
            if (!(fn.times[k] > fn.times[k - 1]))
                bad(ctx, "\"times\" must be strictly increasing");
        return fn;
    }
    bad(ctx, "history kind must be \"constant\", \"polynomial\", or \"sampled\"");
}

inline SweepSpec parse_sweep(const json& j, const std::string& ctx) {
    check_keys(j, ctx, {"parameter", "values"}, {});
    SweepSpec spec;
    spec.parameter = get_string(j, ctx, "parameter");
    if (spec.parameter != "tau_bar" && spec.parameter != "K" && spec.parameter != "step" &&
        spec.parameter != "horizon")
        bad(ctx, "sweep parameter must be one of \"tau_bar\", \"K\", \"step\", \"horizon\"");
    spec.values = get_number_array(j.at("values"), ctx + ".values");
    return spec;
}

inline MeanFieldSpec parse_meanfield(const json& j, const std::string& ctx) {
    check_keys(j, ctx, {"tau_star"}, {"ladder", "lipschitz_L", "samples_per_window"});
    MeanFieldSpec spec;
    spec.tau_star = get_number(j, ctx, "tau_star");
    if (j.contains("ladder")) {
        spec.ladder.clear();
        for (const auto& e : j.at("ladder")) {
            if (!e.is_number_integer() || e.get<long>() < 2)
                bad(ctx + ".ladder", "entries must be integers >= 2");
            spec.ladder.push_back(e.get<std::size_t>());
        }
        if (spec.ladder.empty()) bad(ctx + ".ladder", "must be non-empty");
    }
    if (j.contains("lipschitz_L")) spec.lipschitz_L = get_number(j, ctx, "lipschitz_L");
    if (j.contains("samples_per_window"))
        spec.samples_per_window = static_cast<int>(get_integer(j, ctx, "samples_per_window"));
    return spec;
}

}  // namespace detail

// Parses and semantically validates a scenario document. Every unknown key is
// rejected; every violated model invariant is reported by name.
inline ScenarioDocument parse_scenario_document(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& err) {
        throw std::invalid_argument(std::string("scenario config: ") + err.what());
    }
    detail::check_keys(j, "top level",
                       {"agents", "dimension", "horizon", "delay", "influence", "history",
                        "solver"},
                       {"sweep", "meanfield"});

    ScenarioDocument doc;
    model::Scenario& sc = doc.scenario;
    const long agents = detail::get_integer(j, "top level", "agents");
    const long dimension = detail::get_integer(j, "top level", "dimension");
    if (agents < 2) detail::bad("top level", "\"agents\" must be >= 2");
    if (dimension < 1) detail::bad("top level", "\"dimension\" must be >= 1");
    sc.agent_count = static_cast<std::size_t>(agents);
    sc.dimension = static_cast<std::size_t>(dimension);
    sc.horizon = detail::get_number(j, "top level", "horizon");

    sc.delay = detail::parse_delay(j.at("delay"), "delay");

    sc.influence = detail::parse_influence(j.at("influence"), "influence");

    const auto& hist = j.at("history");
    detail::check_keys(hist, "history", {"agents"}, {});
    const auto& agent_list = hist.at("agents");
    if (!agent_list.is_array() || agent_list.size() != sc.agent_count)
        detail::bad("history.agents", "must be an array with one entry per agent");
    sc.history.tau_bar = sc.delay.tau_bar;
    sc.history.dimension = sc.dimension;
    for (std::size_t i = 0; i < agent_list.size(); ++i) {
        std::ostringstream ctx;
        ctx << "history.agents[" << i << "]";
        sc.history.agents.push_back(
            detail::parse_history_fn(agent_list[i], ctx.str(), sc.dimension));
    }

    const auto& solver = j.at("solver");
    detail::check_keys(solver, "solver", {"step"},
                       {"corrector_iterations", "quadrature_points_per_step"});
    sc.solver.step = detail::get_number(solver, "solver", "step");
    if (solver.contains("corrector_iterations"))
        sc.solver.corrector_iterations =
            static_cast<int>(detail::get_integer(solver, "solver", "corrector_iterations"));
    if (solver.contains("quadrature_points_per_step"))
        sc.solver.quadrature_points_per_step = static_cast<int>(
            detail::get_integer(solver, "solver", "quadrature_points_per_step"));

    if (j.contains("sweep")) doc.sweep = detail::parse_sweep(j.at("sweep"), "sweep");
    if (j.contains("meanfield"))
        doc.meanfield = detail::parse_meanfield(j.at("meanfield"), "meanfield");

    sc.validate();
    return doc;
}

inline model::Scenario parse_scenario(const std::string& text) {
    return parse_scenario_document(text).scenario;
}

}  // namespace hkdelay::cli
