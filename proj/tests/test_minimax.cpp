#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "serodesign/minimax.hpp"

namespace sd = serodesign;

namespace {

sd::DiseaseModel row4_model() { return sd::DiseaseModel::serosurvey_default(450, 100, 300); }

sd::ParameterBox row4_box() {
  return {Eigen::Vector3d(0.01, 0.10, 0.0), Eigen::Vector3d(0.15, 0.50, 0.02)};
}

const sd::WorstCaseResult& row4() {
  static const sd::WorstCaseResult result = [] {
    const auto m = row4_model();
    return sd::worst_case_design(row4_box(), m, sd::all_patterns(m), 1e7);
  }();
  return result;
}

}  // namespace

TEST(Payoff, EqualsObjective) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto patterns = sd::all_patterns(m);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd v = oracle::simplex_point(rng, 7);
    const sd::Parameter p(oracle::interior_point(rng, 3, 0.0));
    EXPECT_EQ(sd::payoff(v, p, m, patterns), sd::objective(v, p, m, patterns));
  }
}

TEST(Payoff, ConcaveInP) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto patterns = sd::all_patterns(m);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int checked = 0;
  while (checked < 500) {
    const Eigen::VectorXd v = oracle::simplex_point(rng, 7);
    const Eigen::VectorXd p1 = oracle::interior_point(rng, 3, 0.005);
    const Eigen::VectorXd p2 = oracle::interior_point(rng, 3, 0.005);
    const double l = unit(rng);
    const double f1 = sd::payoff(v, sd::Parameter(p1), m, patterns);
    const double f2 = sd::payoff(v, sd::Parameter(p2), m, patterns);
    if (!std::isfinite(f1) || !std::isfinite(f2)) continue;
    const double mid = sd::payoff(v, sd::Parameter(l * p1 + (1 - l) * p2), m, patterns);
    EXPECT_GE(mid, l * f1 + (1 - l) * f2 - 1e-9);
    ++checked;
  }
}

TEST(WorstCase, TableRowFour) {
  const auto m = row4_model();
  const auto& r = row4();
  const Eigen::Vector3d target(0.06, 0.45, 0.0);
  EXPECT_LE((r.saddle.p_star.values() - target).cwiseAbs().maxCoeff(), 0.02 + 1e-12);
  EXPECT_NEAR(static_cast<double>(r.design.count_for(sd::parse_pattern("(0,0,1)", m))), 838.0, 5.0);
  EXPECT_NEAR(static_cast<double>(r.design.count_for(sd::parse_pattern("(0,1,1)", m))), 24371.0, 5.0);
  EXPECT_NEAR(100.0 * r.design.fraction_for(sd::parse_pattern("(0,0,1)", m)), 2.5, 0.3);
  EXPECT_NEAR(r.saddle.game_value, sd::payoff(r.saddle.v_star, r.saddle.p_star, m, sd::all_patterns(m)), 1e-12);
  EXPECT_GE(r.saddle.saddle_gap, 0.0);
}

TEST(WorstCase, ValueSandwich) {
  const auto m = row4_model();
  const auto patterns = sd::all_patterns(m);
  const auto& r = row4();
  const sd::GridGame game(row4_box(), m, patterns, 0.01);
  double maximin = 0.0;
  for (std::size_t g = 0; g < game.grid().size(); ++g) {
    maximin = std::max(maximin, sd::solve_c_optimal(game.info(g), patterns, 1.0).objective);
  }
  const double minimax = game.best_response(r.saddle.v_star).value;
  const double tol = 1e-4 * r.saddle.game_value;
  EXPECT_GE(r.saddle.game_value, maximin - tol);
  EXPECT_LE(r.saddle.game_value, minimax + tol);
}

TEST(WorstCase, RefinedEquilibriumIsCertified) {
  const auto m = row4_model();
  const auto& r = row4();
  ASSERT_TRUE(r.saddle.refined.has_value());
  const auto& e = *r.saddle.refined;
  EXPECT_TRUE(e.certified);
  const auto gaps = sd::saddle_check(e.v, e.p, row4_box(), m, sd::all_patterns(m), 0.01);
  EXPECT_GE(gaps.primal, -1e-9);
  EXPECT_GE(gaps.dual, -1e-9);
  EXPECT_LE(gaps.primal, 1e-4 * r.saddle.game_value);
  EXPECT_LE(gaps.dual, 1e-4 * r.saddle.game_value);
}

TEST(WorstCase, SinglePointBoxReducesToLocal) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto patterns = sd::all_patterns(m);
  const Eigen::Vector3d p(0.1, 0.3, 0.01);
  const auto w = sd::worst_case_design(sd::ParameterBox(p, p), m, patterns, 1e7);
  const auto local = sd::solve_c_optimal(sd::Parameter(p), m, patterns, 1e7);
  EXPECT_EQ(w.saddle.v_star, local.design.fractions);
  EXPECT_EQ(w.saddle.game_value, local.objective);
  EXPECT_EQ(w.saddle.saddle_gap, 0.0);
  EXPECT_TRUE(w.saddle.certified);
}

TEST(WorstCase, FinerGridDoesNotLowerValue) {
  const auto m = row4_model();
  sd::MinimaxOptions fine;
  fine.grid_step = 0.005;
  const auto r = sd::worst_case_design(row4_box(), m, sd::all_patterns(m), 1e7, fine);
  EXPECT_GE(r.saddle.game_value, row4().saddle.game_value * (1 - 1e-4));
}

TEST(SaddleCheck, OrderingHoldsForArbitraryPairs) {
  const auto m = row4_model();
  const auto patterns = sd::all_patterns(m);
  const sd::GridGame game(row4_box(), m, patterns, 0.02);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd v = oracle::simplex_point(rng, 7);
    const auto& p = game.grid()[static_cast<std::size_t>(trial * 7) % game.grid().size()];
    const auto gaps = sd::saddle_check(game, v, p.values());
    EXPECT_GE(gaps.primal, -1e-9);
    EXPECT_GE(gaps.dual, -1e-9);
  }
}

TEST(WorstCase, AssumptionFailure) {
  std::vector<sd::TestSpec> tests{{"a", 1, 0.5, 0.5}, {"b", 1, 0.5, 0.5}, {"c", 1, 0.5, 0.5}};
  const sd::DiseaseModel flat(tests, row4_model().nominal_matrix(), Eigen::VectorXd::Ones(3));
  EXPECT_THROW(sd::worst_case_design(row4_box(), flat, sd::all_patterns(flat), 1e7), sd::AssumptionError);
}
