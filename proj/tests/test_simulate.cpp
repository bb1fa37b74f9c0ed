#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "serodesign/simulate.hpp"

namespace sd = serodesign;

namespace {

const sd::Parameter kP{0.10, 0.30, 0.01};

sd::TestPattern pat(const std::string& label, const sd::DiseaseModel& m) { return sd::parse_pattern(label, m); }

sd::Design single(const std::string& label, long long n, const sd::DiseaseModel& m) {
  const std::vector<sd::TestPattern> patterns{pat(label, m)};
  return sd::design_from_fractions(Eigen::VectorXd::Ones(1), static_cast<double>(n) * patterns[0].cost(), patterns);
}

double total_loglik(const sd::SurveyDataset& data, const Eigen::VectorXd& p, const sd::DiseaseModel& m) {
  double total = 0.0;
  for (std::size_t t = 0; t < data.patterns.size(); ++t) {
    const auto ys = sd::outcome_space(data.patterns[t]);
    for (std::size_t y = 0; y < ys.size(); ++y) {
      if (data.counts[t][y] == 0) continue;
      total += static_cast<double>(data.counts[t][y]) * std::log(oracle::mixture(ys[y], data.patterns[t].mask(), p, m));
    }
  }
  return total;
}

sd::VarianceCheck row1_check(double budget, int replications, std::uint64_t seed) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto patterns = sd::all_patterns(m);
  const auto r = sd::solve_c_optimal(kP, m, patterns, budget);
  sd::VarianceCheckOptions o;
  o.replications = replications;
  o.seed = seed;
  return sd::variance_check(kP, m, patterns, r.design.fractions, budget, o);
}

}  // namespace

TEST(SampleOutcomes, ConservesCounts) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto patterns = sd::all_patterns(m);
  const auto d = sd::design_from_fractions(Eigen::VectorXd::Constant(7, 1.0 / 7.0), 1e6, patterns);
  const auto data = sd::sample_outcomes(d, kP, m, 3);
  for (std::size_t t = 0; t < patterns.size(); ++t) EXPECT_EQ(data.participants(t), d.integer_counts[t]);
}

TEST(SampleOutcomes, Reproducible) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto d = sd::solve_c_optimal(kP, m, sd::all_patterns(m), 1e7).design;
  EXPECT_EQ(sd::sample_outcomes(d, kP, m, 5, 2), sd::sample_outcomes(d, kP, m, 5, 2));
  EXPECT_NE(sd::sample_outcomes(d, kP, m, 5, 2), sd::sample_outcomes(d, kP, m, 5, 3));
}

TEST(SampleOutcomes, GoodnessOfFitAtScale) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto d = single("(1,1,1)", 1000000, m);
  const auto data = sd::sample_outcomes(d, kP, m, 99);
  const auto ys = sd::outcome_space(d.patterns[0]);
  double chi2 = 0.0;
  for (std::size_t y = 0; y < ys.size(); ++y) {
    const double expected = 1e6 * sd::mixture_prob(ys[y], d.patterns[0], kP, m);
    const double diff = static_cast<double>(data.counts[0][y]) - expected;
    chi2 += diff * diff / expected;
  }
  EXPECT_LT(chi2, 18.475);  // chi-square(7) upper 1% point
}

TEST(SampleOutcomes, NearPerfectSpecificityGivesNegatives) {
  auto m = sd::DiseaseModel::serosurvey_default();
  for (const char* id : {"RAT", "RTPCR", "Antibody"}) m = m.with_reliability(id, std::nullopt, 1.0 - 1e-12);
  const auto d = single("(1,1,1)", 10000, m);
  const auto data = sd::sample_outcomes(d, sd::Parameter{0, 0, 0}, m, 1);
  EXPECT_EQ(data.counts[0][0], 10000);
}

TEST(Mle, NoiselessPlugIn) {
  auto m = sd::DiseaseModel::serosurvey_default();
  for (const char* id : {"RAT", "RTPCR", "Antibody"}) m = m.with_reliability(id, 1.0 - 1e-12, 1.0 - 1e-12);
  const auto d = single("(1,1,1)", 20000, m);
  const auto data = sd::sample_outcomes(d, kP, m, 12);
  const auto ys = sd::outcome_space(d.patterns[0]);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(3);
  for (int s = 0; s < 3; ++s) {
    for (std::size_t y = 0; y < ys.size(); ++y) {
      bool match = true;
      for (std::size_t j = 0; j < 3; ++j) match = match && ys[y][j] == m.nominal(s, j);
      if (match) freq[s] = static_cast<double>(data.counts[0][y]) / 20000.0;
    }
  }
  const auto fit = sd::mle(data, m);
  EXPECT_LE((fit.estimate.values() - freq).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Mle, MatchesGridSearchOnSmallData) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const std::vector<sd::TestPattern> patterns{pat("(0,0,1)", m), pat("(1,0,1)", m), pat("(1,1,1)", m)};
  sd::SurveyDataset data{patterns, {{6, 4}, {3, 2, 1, 4}, {2, 0, 0, 1, 0, 0, 1, 6}}, 0};
  const auto fit = sd::mle(data, m);

  Eigen::VectorXd best = Eigen::VectorXd::Zero(3);
  double best_value = -1e300;
  auto scan = [&](Eigen::VectorXd lo, Eigen::VectorXd hi, double step) {
    for (double a = lo[0]; a <= hi[0] + 1e-12; a += step) {
      for (double b = lo[1]; b <= hi[1] + 1e-12; b += step) {
        for (double c = lo[2]; c <= hi[2] + 1e-12; c += step) {
          if (a < 0 || b < 0 || c < 0 || a + b + c > 1 + 1e-12) continue;
          const Eigen::Vector3d p(a, b, c);
          const double value = total_loglik(data, p, m);
          if (value > best_value) {
            best_value = value;
            best = p;
          }
        }
      }
    }
  };
  scan(Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones(), 0.01);
  scan(best.array() - 0.01, best.array() + 0.01, 0.001);
  EXPECT_LE((fit.estimate.values() - best).cwiseAbs().maxCoeff(), 0.002);
  EXPECT_GE(fit.log_likelihood, best_value - 1e-9);
}

TEST(Mle, BeatsTruthOnSampledData) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto d = sd::solve_c_optimal(kP, m, sd::all_patterns(m), 1e6).design;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto data = sd::sample_outcomes(d, kP, m, 77, rep);
    const auto fit = sd::mle(data, m);
    EXPECT_GE(fit.log_likelihood, total_loglik(data, kP.values(), m) - 1e-8);
    EXPECT_LE(fit.projected_gradient_norm, 1e-8);
  }
}

TEST(ProjectToSimplex, Feasible) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d x(n(rng), n(rng), n(rng));
    const Eigen::VectorXd p = sd::project_to_simplex(x);
    EXPECT_GE(p.minCoeff(), 0.0);
    EXPECT_LE(p.sum(), 1.0 + 1e-12);
  }
}

TEST(VarianceCheck, RejectsFewReplications) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto patterns = sd::all_patterns(m);
  sd::VarianceCheckOptions o;
  o.replications = 50;
  EXPECT_THROW(sd::variance_check(kP, m, patterns, Eigen::VectorXd::Constant(7, 1.0 / 7), 1e7, o),
               sd::ValidationError);
}

TEST(VarianceCheck, DeterministicAcrossThreadCounts) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto patterns = sd::all_patterns(m);
  const auto v = sd::solve_c_optimal(kP, m, patterns, 1e6).design.fractions;
  sd::VarianceCheckOptions a, b;
  a.replications = b.replications = 100;
  a.threads = 1;
  b.threads = 4;
  EXPECT_EQ(sd::variance_check(kP, m, patterns, v, 1e6, a).estimates,
            sd::variance_check(kP, m, patterns, v, 1e6, b).estimates);
}

TEST(VarianceCheck, DoublingBudgetHalvesVariance) {
  const auto c1 = row1_check(1e7, 200, 21);
  const auto c2 = row1_check(2e7, 200, 22);
  EXPECT_NEAR(c2.predicted_variance, c1.predicted_variance / 2, 1e-12 * c1.predicted_variance);
  const double ratio_of_ratios = c2.ratio / c1.ratio;
  EXPECT_GE(ratio_of_ratios, 0.85 * 0.85);
  EXPECT_LE(ratio_of_ratios, 1.15 / 0.85);
}

TEST(VarianceCheck, UniformDesignIsNotBetter) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto patterns = sd::all_patterns(m);
  const auto opt = sd::solve_c_optimal(kP, m, patterns, 1e7);
  sd::VarianceCheckOptions o;
  o.replications = 200;
  o.seed = 31;
  const auto uniform = sd::variance_check(kP, m, patterns, Eigen::VectorXd::Constant(7, 1.0 / 7.0), 1e7, o);
  const double sd_of_variance = uniform.empirical_variance * std::sqrt(2.0 / (o.replications - 1));
  EXPECT_GE(uniform.empirical_variance, opt.min_variance - 2.0 * sd_of_variance);
  EXPECT_GT(uniform.predicted_variance, opt.min_variance);
}

TEST(VarianceCheck, BiasShrinksWithBudget) {
  const auto small = row1_check(1e6, 200, 41);
  const auto large = row1_check(4e6, 200, 42);
  EXPECT_LE(std::abs(large.bias), std::abs(small.bias) + 2.0 * small.bias_standard_error);
}

TEST(VarianceCheck, EstimatesLookNormal) {
  const auto c = row1_check(1e7, 500, 7);
  EXPECT_GT(c.normality_p_value, 0.01);
}
