#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "serodesign/copt.hpp"
#include "serodesign/errors.hpp"
#include "serodesign/minimax.hpp"
#include "serodesign/model.hpp"

namespace serodesign {

/// Population stratum (district, age band, ...) with its own parameter
/// guess, or a parameter box when a worst-case design is wanted there.
struct StratumSpec {
  std::string name;
  /// Population fraction n_d.
  double fraction = 0.0;
  std::variant<Parameter, ParameterBox> parameter;

  friend bool operator==(const StratumSpec&, const StratumSpec&) = default;
};

struct ReliabilityOverride {
  std::string test_id;
  std::optional<double> sensitivity;
  std::optional<double> specificity;

  friend bool operator==(const ReliabilityOverride&, const ReliabilityOverride&) = default;
};

/// Observable group (e.g. symptomatic) whose tests behave differently.
struct GroupSpec {
  std::string name;
  /// Population fraction r_s.
  double fraction = 0.0;
  Parameter parameter{0.0};
  /// Entries not listed inherit the base model.
  std::vector<ReliabilityOverride> overrides;

  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

struct StratumAllocation {
  std::string name;
  double fraction = 0.0;
  /// a-value of the stratum's design: local optimum, or worst-case value
  /// for box strata.
  double a_value = 0.0;
  /// Budget share m_d = C_d / C.
  double share = 0.0;
  double budget = 0.0;
  Design design;
  double kkt_residual = 0.0;
  std::optional<SaddleReport> saddle;
};

struct AllocationReport {
  double budget = 0.0;
  std::vector<StratumAllocation> strata;
  /// Variance of the population-weighted estimate.
  double total_variance = 0.0;
};

/// sum_d n_d^2 a_d / C_d.
inline double weighted_variance(const AllocationReport& report) {
  double total = 0.0;
  for (const auto& s : report.strata) total += s.fraction * s.fraction * s.a_value / s.budget;
  return total;
}

namespace detail {

inline void check_fractions_sum(const std::vector<double>& fractions, const std::string& path) {
  if (fractions.empty()) throw ValidationError("at least one entry is required", path);
  double total = 0.0;
  for (std::size_t d = 0; d < fractions.size(); ++d) {
    const double n = fractions[d];
    if (!(n > 0.0 && n <= 1.0)) {
      throw ValidationError("population fraction must lie in (0, 1]", path + "[" + std::to_string(d) + "].fraction");
    }
    total += n;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("population fractions must sum to 1 (got " + std::to_string(total) + ")", path);
  }
}

/// Square-root allocation: C_d proportional to n_d sqrt(a_d).
inline void split_budget(AllocationReport& report, const std::vector<Eigen::VectorXd>& fractions,
                         const std::vector<TestPattern>& patterns) {
  double norm = 0.0;
  for (const auto& s : report.strata) norm += s.fraction * std::sqrt(s.a_value);
  for (std::size_t d = 0; d < report.strata.size(); ++d) {
    auto& s = report.strata[d];
    s.share = s.fraction * std::sqrt(s.a_value) / norm;
    s.budget = report.budget * s.share;
    s.design = design_from_fractions(fractions[d], s.budget, patterns);
  }
  report.total_variance = weighted_variance(report);
}

template <typename Solve>
auto in_stratum(const std::string& kind, const std::string& name, Solve&& solve) {
  try {
    return solve();
  } catch (const AssumptionError& e) {
    throw AssumptionError(kind + " '" + name + "': " + e.what());
  } catch (const SolverError& e) {
    throw SolverError(kind + " '" + name + "': " + e.what(), e.best_iterate());
  }
}

}  // namespace detail

/// Splits a budget across districts in proportion to n_d sqrt(a_d), then
/// gives each district its own optimal design for its share.
inline AllocationReport allocate_districts(const std::vector<StratumSpec>& strata, const DiseaseModel& model,
                                           const std::vector<TestPattern>& patterns, double budget,
                                           const MinimaxOptions& options = {}) {
  if (!(budget > 0.0)) throw ValidationError("budget must be positive", "budget");
  std::vector<double> weights;
  for (const auto& s : strata) weights.push_back(s.fraction);
  detail::check_fractions_sum(weights, "strata");

  AllocationReport report;
  report.budget = budget;
  std::vector<Eigen::VectorXd> fractions;
  for (const auto& spec : strata) {
    StratumAllocation s;
    s.name = spec.name;
    s.fraction = spec.fraction;
    if (const auto* p = std::get_if<Parameter>(&spec.parameter)) {
      const SolveReport local = detail::in_stratum("stratum", spec.name, [&] {
        return solve_c_optimal(*p, model, patterns, budget, options.solver);
      });
      s.a_value = local.objective;
      s.kkt_residual = local.kkt_residual;
      fractions.push_back(local.design.fractions);
    } else {
      const auto& box = std::get<ParameterBox>(spec.parameter);
      const WorstCaseResult worst = detail::in_stratum("stratum", spec.name, [&] {
        return worst_case_design(box, model, patterns, budget, options);
      });
      s.a_value = worst.saddle.game_value;
      s.saddle = worst.saddle;
      fractions.push_back(worst.design.fractions);
    }
    report.strata.push_back(std::move(s));
  }
  detail::split_budget(report, fractions, patterns);
  return report;
}

/// Test reliabilities of a group after applying its overrides.
inline DiseaseModel group_model(const GroupSpec& group, const DiseaseModel& base) {
  DiseaseModel model = base;
  for (const auto& o : group.overrides) model = model.with_reliability(o.test_id, o.sensitivity, o.specificity);
  return model;
}

/// Same square-root split as allocate_districts, with each group's Fisher
/// information computed under its own test reliabilities.
inline AllocationReport allocate_groups(const std::vector<GroupSpec>& groups, const DiseaseModel& model,
                                        const std::vector<TestPattern>& patterns, double budget,
                                        const SolverOptions& options = {}) {
  if (!(budget > 0.0)) throw ValidationError("budget must be positive", "budget");
  std::vector<double> weights;
  for (const auto& g : groups) weights.push_back(g.fraction);
  detail::check_fractions_sum(weights, "groups");

  AllocationReport report;
  report.budget = budget;
  std::vector<Eigen::VectorXd> fractions;
  for (const auto& spec : groups) {
    const DiseaseModel local_model = group_model(spec, model);
    const SolveReport local = detail::in_stratum("group", spec.name, [&] {
      return solve_c_optimal(spec.parameter, local_model, patterns, budget, options);
    });
    StratumAllocation s;
    s.name = spec.name;
    s.fraction = spec.fraction;
    s.a_value = local.objective;
    s.kkt_residual = local.kkt_residual;
    fractions.push_back(local.design.fractions);
    report.strata.push_back(std::move(s));
  }
  detail::split_budget(report, fractions, patterns);
  return report;
}

}  // namespace serodesign
