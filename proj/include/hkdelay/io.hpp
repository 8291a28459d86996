#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hkdelay/analysis.hpp"
#include "hkdelay/meanfield.hpp"
#include "hkdelay/trajectory.hpp"

namespace hkdelay::io {

// Shortest decimal that parses back to the same double (report values).
inline std::string format_shortest(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Fixed 9-decimal format for grid times: stable join keys across files.
inline std::string format_fixed9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    return std::string(buf);
}

namespace detail {

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    return out;
}

}  // namespace detail

// Grid states, one row per (time, agent): t,agent,x0,...,x{d-1}.
inline void write_trajectory_csv(const solver::Trajectory& traj, std::ostream& out) {
    out << "t,agent";
    for (std::size_t k = 0; k < traj.dimension; ++k) out << ",x" << k;
    out << "\n";
    for (std::size_t node = 0; node < traj.times.size(); ++node) {
        for (std::size_t i = 0; i < traj.agent_count; ++i) {
            out << format_fixed9(traj.times[node]) << "," << i;
            const auto x = slice(traj.states[node], i, traj.dimension);
            for (std::size_t k = 0; k < traj.dimension; ++k)
                out << "," << format_shortest(x[k]);
            out << "\n";
        }
    }
}

// Diameter against the certified envelope on the solver grid: t,d_t,bound_t.
inline void write_metrics_csv(const solver::Trajectory& traj,
                              const analysis::ConsensusCertificate& cert, std::ostream& out) {
    out << "t,d_t,bound_t\n";
    for (const double t : traj.times) {
        const double dt = analysis::diameter_at(traj, t);
        const double bound = cert.D0 * std::exp(-cert.gamma * (t - 2.0 * cert.tau_bar));
        out << format_fixed9(t) << "," << format_shortest(dt) << "," << format_shortest(bound)
            << "\n";
    }
}

inline nlohmann::ordered_json certificate_to_json(const analysis::ConsensusCertificate& cert) {
    nlohmann::ordered_json j;
    j["K"] = cert.K;
    j["M0"] = cert.M0;
    j["psi0"] = cert.psi0;
    j["D0"] = cert.D0;
    j["C"] = cert.C;
    j["C_tilde"] = cert.C_tilde;
    j["gamma"] = cert.gamma;
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : cert.checks) {
        nlohmann::ordered_json rec;
        rec["name"] = c.name;
        rec["worst_margin"] = c.worst_margin;
        rec["pass"] = c.pass;
        if (!c.note.empty()) rec["note"] = c.note;
        j["checks"].push_back(std::move(rec));
    }
    return j;
}

inline void write_certificate_json(const analysis::ConsensusCertificate& cert,
                                   std::ostream& out) {
    out << certificate_to_json(cert).dump(2) << "\n";
}

// Mean-field ladder rows: N,t,dX,bound,margin.
inline void write_meanfield_csv(const std::vector<meanfield::MeanFieldRow>& rows,
                                std::ostream& out) {
    out << "N,t,dX,bound,margin\n";
    for (const auto& r : rows)
        out << r.N << "," << format_fixed9(r.t) << "," << format_shortest(r.dX) << ","
            << format_shortest(r.bound) << "," << format_shortest(r.margin) << "\n";
}

// One certificate summary per swept value.
inline void write_sweep_csv(const std::string& parameter, const std::vector<double>& values,
                            const std::vector<analysis::ConsensusCertificate>& certs,
                            std::ostream& out) {
    out << "parameter,value,K,M0,psi0,D0,C,C_tilde,gamma,pass\n";
    for (std::size_t k = 0; k < values.size(); ++k) {
        const auto& c = certs[k];
        out << parameter << "," << format_shortest(values[k]) << "," << format_shortest(c.K)
            << "," << format_shortest(c.M0) << "," << format_shortest(c.psi0) << ","
            << format_shortest(c.D0) << "," << format_shortest(c.C) << ","
            << format_shortest(c.C_tilde) << "," << format_shortest(c.gamma) << ","
            << (c.all_pass() ? "true" : "false") << "\n";
    }
}

// Static SVG line chart of ln d(t) against the certified decay line
// ln D0 - gamma (t - 2 tau_bar). Diagnostic only; zero diameters are skipped.
inline void write_decay_svg(const solver::Trajectory& traj,
                            const analysis::ConsensusCertificate& cert, std::ostream& out) {
    struct Pt {
        double t, y;
    };
    std::vector<Pt> data, bound;
    for (const double t : traj.times) {
        const double dt = analysis::diameter_at(traj, t);
        if (dt > 0.0) data.push_back({t, std::log(dt)});
        if (cert.D0 > 0.0)
            bound.push_back({t, std::log(cert.D0) - cert.gamma * (t - 2.0 * cert.tau_bar)});
    }
    const double width = 640.0, height = 400.0, ml = 60.0, mr = 15.0, mt = 15.0, mb = 45.0;
    double t_lo = traj.times.front(), t_hi = traj.times.back();
    double y_lo = 0.0, y_hi = 1.0;
    bool first = true;
    for (const auto& series : {data, bound}) {
        for (const auto& p : series) {
            if (first) {
                y_lo = y_hi = p.y;
                first = false;
            }
            y_lo = std::min(y_lo, p.y);
            y_hi = std::max(y_hi, p.y);
        }
    }
    if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1.0;
    if (t_hi - t_lo < 1e-12) t_hi = t_lo + 1.0;
    const auto px = [&](double t) { return ml + (t - t_lo) / (t_hi - t_lo) * (width - ml - mr); };
    const auto py = [&](double y) {
        return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb);
    };
    const auto polyline = [&](const std::vector<Pt>& pts, const char* style) {
        out << "  <polyline fill=\"none\" " << style << " points=\"";
        for (const auto& p : pts) out << format_shortest(px(p.t)) << "," << format_shortest(py(p.y)) << " ";
        out << "\"/>\n";
    };
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "  <line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
        << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << height - mb << "\" stroke=\"black\"/>\n";
    if (!data.empty()) polyline(data, "stroke=\"#1f77b4\" stroke-width=\"1.5\"");
    if (!bound.empty())
        polyline(bound, "stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"");
    out << "  <text x=\"" << (ml + width - mr) / 2.0 << "\" y=\"" << height - 10.0
        << "\" text-anchor=\"middle\" font-size=\"14\">t</text>\n";
    out << "  <text x=\"18\" y=\"" << (mt + height - mb) / 2.0
        << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 "
        << (mt + height - mb) / 2.0 << ")\">ln d(t)</text>\n";
    out << "  <text x=\"" << width - mr - 10.0 << "\" y=\"" << mt + 15.0
        << "\" text-anchor=\"end\" font-size=\"12\" fill=\"#d62728\">certified bound</text>\n";
    out << "</svg>\n";
}

// Path-based wrappers.
inline void write_trajectory_csv(const solver::Trajectory& traj, const std::string& path) {
    auto out = detail::open_out(path);
    write_trajectory_csv(traj, out);
}
inline void write_metrics_csv(const solver::Trajectory& traj,
                              const analysis::ConsensusCertificate& cert,
                              const std::string& path) {
    auto out = detail::open_out(path);
    write_metrics_csv(traj, cert, out);
}
inline void write_certificate_json(const analysis::ConsensusCertificate& cert,
                                   const std::string& path) {
    auto out = detail::open_out(path);
    write_certificate_json(cert, out);
}
inline void write_meanfield_csv(const std::vector<meanfield::MeanFieldRow>& rows,
                                const std::string& path) {
    auto out = detail::open_out(path);
    write_meanfield_csv(rows, out);
}
inline void write_sweep_csv(const std::string& parameter, const std::vector<double>& values,
                            const std::vector<analysis::ConsensusCertificate>& certs,
                            const std::string& path) {
    auto out = detail::open_out(path);
    write_sweep_csv(parameter, values, certs, out);
}
inline void write_decay_svg(const solver::Trajectory& traj,
                            const analysis::ConsensusCertificate& cert,
                            const std::string& path) {
    auto out = detail::open_out(path);
    write_decay_svg(traj, cert, out);
}

}  // namespace hkdelay::io
