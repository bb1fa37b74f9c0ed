#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "serodesign/copt.hpp"
#include "serodesign/errors.hpp"
#include "serodesign/model.hpp"

namespace serodesign {

struct MinimaxOptions {
  double grid_step = 0.01;
  /// Relative tolerance on both equilibrium gaps.
  double saddle_tol = 1e-4;
  /// Cap on alternating best-response rounds when the grid maximin design is
  /// not certified.
  int max_rounds = 200;
  SolverOptions solver;
};

/// Payoff of the design game: a(v;p). Convex in v, concave in p.
inline double payoff(const Eigen::VectorXd& v, const Parameter& p, const DiseaseModel& model,
                     const std::vector<TestPattern>& patterns) {
  return objective(v, p, model, patterns);
}

/// Cost-scaled information at every point of the feasible grid of a box.
class GridGame {
 public:
  GridGame(const ParameterBox& box, const DiseaseModel& model, std::vector<TestPattern> patterns,
           double grid_step)
      : patterns_(std::move(patterns)),
        channels_(make_channels(patterns_, model)),
        u_(model.u()),
        grid_(feasible_grid(box, grid_step)) {
    if (box.dimension() != model.dimension()) throw ValidationError("box dimension mismatch", "box");
    infos_.reserve(grid_.size());
    for (const auto& p : grid_) infos_.emplace_back(channels_, p.values(), u_);
  }

  const std::vector<Parameter>& grid() const noexcept { return grid_; }
  const std::vector<TestPattern>& patterns() const noexcept { return patterns_; }
  const ScaledInformation& info(std::size_t g) const { return infos_[g]; }
  ScaledInformation info_at(const Eigen::VectorXd& p) const { return {channels_, p, u_}; }

  struct BestResponse {
    std::size_t index = 0;
    double value = 0.0;
  };

  /// Grid maximizer of a(v;.) with the lowest index winning ties.
  BestResponse best_response(const Eigen::VectorXd& v) const {
    BestResponse best{0, objective(infos_[0], v)};
    for (std::size_t g = 1; g < grid_.size(); ++g) {
      const double value = objective(infos_[g], v);
      if (value > best.value) best = {g, value};
    }
    return best;
  }

 private:
  std::vector<TestPattern> patterns_;
  std::vector<PatternChannel> channels_;
  Eigen::VectorXd u_;
  std::vector<Parameter> grid_;
  std::vector<ScaledInformation> infos_;
};

struct SaddleGaps {
  /// max_p a(v;p) - a(v;p) over the grid; how much the max player gains by
  /// deviating.
  double primal = 0.0;
  /// a(v;p) - min_v' a(v';p); how much the min player gains by deviating.
  double dual = 0.0;
};

inline SaddleGaps saddle_check(const GridGame& game, const Eigen::VectorXd& v, const Eigen::VectorXd& p,
                               const SolverOptions& options = {}) {
  const ScaledInformation at_p = game.info_at(p);
  const double value = objective(at_p, v);
  const double best_max = game.best_response(v).value;
  const double best_min = solve_c_optimal(at_p, game.patterns(), 1.0, options).objective;
  return {best_max - value, value - best_min};
}

inline SaddleGaps saddle_check(const Eigen::VectorXd& v, const Parameter& p, const ParameterBox& box,
                               const DiseaseModel& model, const std::vector<TestPattern>& patterns,
                               double grid_step, const SolverOptions& options = {}) {
  return saddle_check(GridGame(box, model, patterns, grid_step), v, p.values(), options);
}

/// Outcome of alternating best responses started from the grid maximin pair.
struct RefinedEquilibrium {
  /// Averaged design of the min player.
  Eigen::VectorXd v;
  /// Grid best response of the max player to v.
  Parameter p{0.0};
  /// max over the grid of a(v;p): worst-case a-value of v.
  double upper_value = 0.0;
  /// min_v' a(v';p_avg) at the averaged parameter of the max player.
  double lower_value = 0.0;
  int rounds = 0;
  bool certified = false;
};

struct SaddleReport {
  /// Optimal design at the grid maximin point, v*(p*).
  Eigen::VectorXd v_star;
  /// Grid point maximizing min_v a(v;p).
  Parameter p_star{0.0};
  /// a(v*;p*), which is also the grid maximin value.
  double game_value = 0.0;
  /// max over the grid of a(v*;p) - a(v*;p*).
  double saddle_gap = 0.0;
  /// Both equilibrium gaps of (v*, p*) as returned by saddle_check.
  SaddleGaps gaps;
  double grid_step = 0.0;
  /// Both gaps within saddle_tol relative to game_value.
  bool certified = false;
  /// Present when (v*, p*) is not certified.
  std::optional<RefinedEquilibrium> refined;

  /// Worst-case a-value of the reported design over the grid.
  double design_worst_value() const { return game_value + saddle_gap; }
};

struct WorstCaseResult {
  SaddleReport saddle;
  /// Design built from v*.
  Design design;
  /// Design built from the refined equilibrium strategy, when one was computed.
  std::optional<Design> refined_design;
  /// game_value / budget.
  double worst_case_variance = 0.0;
};

namespace detail {

/// Fictitious play from (v0, p0): the max player answers the averaged design
/// on the grid, the min player answers the averaged parameter.
inline RefinedEquilibrium refine_equilibrium(const GridGame& game, const Eigen::VectorXd& v0,
                                             const Eigen::VectorXd& p0, const MinimaxOptions& options) {
  Eigen::VectorXd v_avg = v0;
  Eigen::VectorXd p_avg = p0;
  RefinedEquilibrium out;
  auto best = game.best_response(v0);
  out.v = v0;
  out.upper_value = best.value;
  out.lower_value = solve_c_optimal(game.info_at(p0), game.patterns(), 1.0, options.solver).objective;
  out.p = game.grid()[best.index];
  int rounds = 0;
  while (rounds < options.max_rounds &&
         out.upper_value - out.lower_value > options.saddle_tol * out.upper_value) {
    ++rounds;
    const auto response = game.best_response(v_avg);
    p_avg += (game.grid()[response.index].values() - p_avg) / static_cast<double>(rounds + 1);
    const SolveReport answer = solve_c_optimal(game.info_at(p_avg), game.patterns(), 1.0, options.solver);
    v_avg += (answer.design.fractions - v_avg) / static_cast<double>(rounds + 1);
    v_avg /= v_avg.sum();
    const auto upper = game.best_response(v_avg);
    out.lower_value = std::max(out.lower_value, answer.objective);
    if (upper.value < out.upper_value) {
      out.upper_value = upper.value;
      out.v = v_avg;
      out.p = game.grid()[upper.index];
    }
  }
  out.rounds = rounds;
  out.certified = out.upper_value - out.lower_value <= options.saddle_tol * out.upper_value;
  return out;
}

}  // namespace detail

/// Worst-case design over the feasible grid of a parameter box.
///
/// Every grid point gets a local c-optimal solve; the point with the largest
/// optimal value is the worst case p* and v*(p*) the reported design. The
/// pair is then certified by both players' best responses. When a gap
/// exceeds saddle_tol, alternating best responses with averaging are run
/// and reported alongside.
inline WorstCaseResult worst_case_design(const ParameterBox& box, const DiseaseModel& model,
                                         const std::vector<TestPattern>& patterns, double budget,
                                         const MinimaxOptions& options = {}) {
  if (!(budget > 0.0)) throw ValidationError("budget must be positive", "budget");
  const A2Result a2 = check_a2(box, patterns, model, options.grid_step, options.solver.pd_tolerance);
  if (!a2.holds) {
    throw AssumptionError("no test pattern is uniformly informative over the box; the worst-case "
                          "variance is unbounded");
  }
  const GridGame game(box, model, patterns, options.grid_step);
  const auto& grid = game.grid();

  std::size_t arg = 0;
  double maximin = -kInfiniteVariance;
  Eigen::VectorXd v_star;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    SolveReport local = solve_c_optimal(game.info(g), patterns, 1.0, options.solver);
    if (local.objective > maximin) {
      maximin = local.objective;
      arg = g;
      v_star = std::move(local.design.fractions);
    }
  }

  SaddleReport report;
  report.grid_step = options.grid_step;
  report.v_star = v_star;
  report.p_star = grid[arg];
  report.game_value = maximin;
  report.gaps = saddle_check(game, v_star, grid[arg].values(), options.solver);
  report.saddle_gap = report.gaps.primal;
  report.certified = report.gaps.primal <= options.saddle_tol * maximin &&
                     report.gaps.dual <= options.saddle_tol * maximin;

  WorstCaseResult result{report, design_from_fractions(v_star, budget, patterns), std::nullopt,
                         maximin / budget};
  if (!report.certified) {
    result.saddle.refined = detail::refine_equilibrium(game, v_star, grid[arg].values(), options);
    result.refined_design = design_from_fractions(result.saddle.refined->v, budget, patterns);
  }
  return result;
}

}  // namespace serodesign
