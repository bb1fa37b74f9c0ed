#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "serodesign/config.hpp"
#include "serodesign/copt.hpp"
#include "serodesign/minimax.hpp"
#include "serodesign/model.hpp"
#include "serodesign/simulate.hpp"
#include "serodesign/strata.hpp"

namespace serodesign {

// Machine reports: ordered JSON, no timings or host details.

inline Json design_json(const Design& d, const std::string& currency) {
  Json rows = Json::array();
  for (std::size_t t = 0; t < d.patterns.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    rows.push_back({{"pattern", d.patterns[t].label()},
                    {"fraction", d.fractions[i]},
                    {"count", d.counts[i]},
                    {"participants", d.integer_counts[t]},
                    {"unit_cost", d.patterns[t].cost()},
                    {"cost", static_cast<double>(d.integer_counts[t]) * d.patterns[t].cost()}});
  }
  return {{"budget", d.budget},
          {"currency", currency},
          {"fractional_cost", d.fractional_cost()},
          {"realized_cost", d.realized_cost()},
          {"rows", std::move(rows)}};
}

inline Json c_optimal_json(const SolveReport& r, const Parameter& p, const std::string& currency) {
  return {{"command", "c-optimal"},
          {"p", detail::to_json(p.values())},
          {"objective", r.objective},
          {"min_variance", r.min_variance},
          {"kkt_residual", r.kkt_residual},
          {"relative_kkt_residual", r.relative_kkt_residual()},
          {"iterations", r.iterations},
          {"design", design_json(r.design, currency)}};
}

inline Json worst_case_json(const WorstCaseResult& r, const ParameterBox& box, const std::string& currency) {
  const SaddleReport& s = r.saddle;
  Json out{{"command", "worst-case"},
           {"box", detail::to_json(box)},
           {"grid_step", s.grid_step},
           {"p_star", detail::to_json(s.p_star.values())},
           {"game_value", s.game_value},
           {"worst_case_variance", r.worst_case_variance},
           {"saddle_gap", s.saddle_gap},
           {"primal_gap", s.gaps.primal},
           {"dual_gap", s.gaps.dual},
           {"certified", s.certified},
           {"design", design_json(r.design, currency)}};
  if (s.refined) {
    out["refined"] = {{"upper_value", s.refined->upper_value},
                      {"lower_value", s.refined->lower_value},
                      {"rounds", s.refined->rounds},
                      {"certified", s.refined->certified},
                      {"p", detail::to_json(s.refined->p.values())},
                      {"design", design_json(*r.refined_design, currency)}};
  }
  return out;
}

inline Json allocation_json(const AllocationReport& r, const std::string& command, const std::string& currency) {
  Json strata = Json::array();
  for (const auto& s : r.strata) {
    Json e{{"name", s.name},
           {"fraction", s.fraction},
           {"a_value", s.a_value},
           {"share", s.share},
           {"budget", s.budget},
           {"kkt_residual", s.kkt_residual}};
    if (s.saddle) {
      e["p_star"] = detail::to_json(s.saddle->p_star.values());
      e["certified"] = s.saddle->certified;
    }
    e["design"] = design_json(s.design, currency);
    strata.push_back(std::move(e));
  }
  return {{"command", command}, {"budget", r.budget}, {"total_variance", r.total_variance}, {"strata", std::move(strata)}};
}

inline Json margin_json(const MarginBudget& m, double moe, double alpha, const Design& d, const std::string& currency) {
  return {{"command", "budget"},
          {"moe", moe},
          {"alpha", alpha},
          {"z", m.z},
          {"objective", m.objective},
          {"budget", m.budget},
          {"design", design_json(d, currency)}};
}

inline Json variance_json(const VarianceCheck& c, int replications, std::uint64_t seed) {
  return {{"command", "simulate"},
          {"replications", replications},
          {"seed", seed},
          {"predicted_variance", c.predicted_variance},
          {"empirical_variance", c.empirical_variance},
          {"ratio", c.ratio},
          {"bias", c.bias},
          {"bias_standard_error", c.bias_standard_error},
          {"skewness", c.skewness},
          {"excess_kurtosis", c.excess_kurtosis},
          {"jarque_bera", c.jarque_bera},
          {"normality_p_value", c.normality_p_value}};
}

namespace detail {

inline std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline std::string scalar_text(const Json& v) {
  if (v.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
    return buf;
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

inline void render_design(std::ostringstream& out, const Json& d, const std::string& indent) {
  char line[160];
  std::snprintf(line, sizeof line, "%s%-10s %10s %12s %14s\n", indent.c_str(), "pattern", "fraction", "participants",
                ("cost " + d.at("currency").get<std::string>()).c_str());
  out << line;
  for (const auto& row : d.at("rows")) {
    if (row.at("fraction").get<double>() <= 0.0 && row.at("participants").get<long long>() == 0) continue;
    std::snprintf(line, sizeof line, "%s%-10s %10s %12lld %14s\n", indent.c_str(),
                  row.at("pattern").get<std::string>().c_str(), fixed(row.at("fraction").get<double>(), 6).c_str(),
                  row.at("participants").get<long long>(), fixed(row.at("cost").get<double>(), 0).c_str());
    out << line;
  }
  std::snprintf(line, sizeof line, "%s%-10s %10s %12s %14s\n", indent.c_str(), "total", "", "",
                fixed(d.at("realized_cost").get<double>(), 0).c_str());
  out << line;
}

inline void render(std::ostringstream& out, const Json& node, const std::string& indent) {
  for (const auto& [key, value] : node.items()) {
    if (key == "name" && !indent.empty()) continue;
    if (key == "design") {
      out << indent << "design:\n";
      render_design(out, value, indent + "  ");
    } else if (value.is_object()) {
      out << indent << key << ":\n";
      render(out, value, indent + "  ");
    } else if (value.is_array() && !value.empty() && value.front().is_object()) {
      for (const auto& item : value) {
        out << indent << key << " " << (item.contains("name") ? item.at("name").get<std::string>() : "") << ":\n";
        render(out, item, indent + "  ");
      }
    } else if (value.is_array()) {
      out << indent << key << ": (";
      for (std::size_t i = 0; i < value.size(); ++i) out << (i ? ", " : "") << scalar_text(value[i]);
      out << ")\n";
    } else {
      out << indent << key << ": " << scalar_text(value) << "\n";
    }
  }
}

}  // namespace detail

/// Human-readable rendering of a machine report.
inline std::string render_table(const Json& report) {
  std::ostringstream out;
  detail::render(out, report, "");
  return out.str();
}

}  // namespace serodesign
