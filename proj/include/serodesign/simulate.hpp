#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "serodesign/copt.hpp"
#include "serodesign/errors.hpp"
#include "serodesign/model.hpp"

namespace serodesign {

/// Outcome counts per pattern; the sufficient statistic of a survey.
struct SurveyDataset {
  std::vector<TestPattern> patterns;
  /// counts[t][y] follows outcome_space(patterns[t]) order.
  std::vector<std::vector<long long>> counts;
  std::uint64_t seed = 0;

  long long participants(std::size_t t) const {
    return std::accumulate(counts[t].begin(), counts[t].end(), 0LL);
  }
  long long total() const {
    long long n = 0;
    for (std::size_t t = 0; t < counts.size(); ++t) n += participants(t);
    return n;
  }
  friend bool operator==(const SurveyDataset&, const SurveyDataset&) = default;
};

/// Random stream for one (seed, replication, pattern) triple. Streams are
/// independent of evaluation order, so replications can run in parallel and
/// still reproduce bit-for-bit.
inline std::mt19937_64 survey_stream(std::uint64_t seed, std::uint64_t replication, std::uint64_t pattern) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32),
                    static_cast<std::uint32_t>(pattern), 0x5e705e70U};
  return std::mt19937_64(seq);
}

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

/// Simulates the integer design: each participant draws a disease state from
/// (p, 1 - sum p), then each conducted test reports through its channel.
inline SurveyDataset sample_outcomes(const Design& design, const Parameter& p, const DiseaseModel& model,
                                     std::uint64_t seed, std::uint64_t replication = 0) {
  if (p.dimension() != model.dimension()) throw ValidationError("parameter dimension mismatch", "p");
  const Eigen::VectorXd states = p.state_probabilities();
  std::vector<double> cumulative(static_cast<std::size_t>(states.size()));
  std::partial_sum(states.begin(), states.end(), cumulative.begin());

  SurveyDataset data{design.patterns, {}, seed};
  for (std::size_t t = 0; t < design.patterns.size(); ++t) {
    const TestPattern& pattern = design.patterns[t];
    std::vector<std::size_t> included;
    for (std::size_t j = 0; j < pattern.num_tests(); ++j) {
      if (pattern.includes(j)) included.push_back(j);
    }
    std::vector<long long> counts(std::size_t{1} << included.size(), 0);
    auto rng = survey_stream(seed, replication, t);
    const long long n = design.integer_counts[t];
    if (n < 0) throw ValidationError("integer counts must be nonnegative", "design");
    for (long long i = 0; i < n; ++i) {
      const double draw = detail::uniform01(rng) * cumulative.back();
      int state = 0;
      while (state + 1 < static_cast<int>(cumulative.size()) && draw >= cumulative[static_cast<std::size_t>(state)]) ++state;
      std::size_t code = 0;
      for (std::size_t j : included) {
        const int nominal = model.nominal(state, j);
        const bool correct = detail::uniform01(rng) < model.reliability(state, j);
        code = (code << 1) | static_cast<std::size_t>(correct ? nominal : 1 - nominal);
      }
      ++counts[code];
    }
    data.counts.push_back(std::move(counts));
  }
  return data;
}

struct MleOptions {
  /// Projected-gradient norm of the per-participant log-likelihood.
  double tolerance = 1e-8;
  int max_iterations = 10000;
};

struct MleResult {
  Parameter estimate{0.0};
  /// Total log-likelihood at the estimate.
  double log_likelihood = 0.0;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
};

/// Euclidean projection onto {p >= 0, sum p <= 1}.
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& x) {
  Eigen::VectorXd clipped = x.cwiseMax(0.0);
  if (clipped.sum() <= 1.0) return clipped;
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cumulative += sorted[i];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - candidate > 0.0) theta = candidate;
  }
  Eigen::VectorXd out = (x.array() - theta).cwiseMax(0.0);
  const double total = out.sum();
  if (total > 1.0) out /= total;
  return out;
}

/// Log-likelihood of a dataset with its gradient and Hessian in p.
class SurveyLikelihood {
 public:
  SurveyLikelihood(const SurveyDataset& data, const DiseaseModel& model) {
    for (std::size_t t = 0; t < data.patterns.size(); ++t) {
      const PatternChannel channel(data.patterns[t], model);
      for (std::size_t y = 0; y < data.counts[t].size(); ++y) {
        const long long n = data.counts[t][y];
        if (n < 0) throw ValidationError("counts must be nonnegative", "dataset");
        if (n == 0) continue;
        const auto row = static_cast<Eigen::Index>(y);
        contrasts_.push_back(channel.contrasts().row(row).transpose());
        reference_.push_back(channel.table()(row, channel.table().cols() - 1));
        counts_.push_back(static_cast<double>(n));
        total_ += static_cast<double>(n);
      }
    }
    if (total_ == 0.0) throw ValidationError("dataset has no participants", "dataset");
    dimension_ = model.dimension();
  }

  int dimension() const noexcept { return dimension_; }
  double participants() const noexcept { return total_; }

  double value(const Eigen::VectorXd& p) const {
    double total = 0.0;
    for (std::size_t i = 0; i < counts_.size(); ++i) total += counts_[i] * std::log(prob(i, p));
    return total;
  }

  /// Per-participant gradient.
  Eigen::VectorXd gradient(const Eigen::VectorXd& p) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dimension_);
    for (std::size_t i = 0; i < counts_.size(); ++i) g += (counts_[i] / prob(i, p)) * contrasts_[i];
    return g / total_;
  }

  /// Per-participant Hessian (negative semidefinite).
  Eigen::MatrixXd hessian(const Eigen::VectorXd& p) const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dimension_, dimension_);
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      const double q = prob(i, p);
      h -= (counts_[i] / (q * q)) * contrasts_[i] * contrasts_[i].transpose();
    }
    return h / total_;
  }

 private:
  double prob(std::size_t i, const Eigen::VectorXd& p) const { return contrasts_[i].dot(p) + reference_[i]; }

  std::vector<Eigen::VectorXd> contrasts_;
  std::vector<double> reference_;
  std::vector<double> counts_;
  double total_ = 0.0;
  int dimension_ = 0;
};

/// Constrained maximum-likelihood estimate over the parameter simplex.
///
/// Projected ascent with Armijo backtracking from the centroid. Each
/// iteration first tries a Newton direction on the coordinates not pinned at
/// zero and falls back to the plain gradient when that step is rejected.
inline MleResult mle(const SurveyDataset& data, const DiseaseModel& model, const MleOptions& options = {}) {
  const SurveyLikelihood like(data, model);
  const int k = like.dimension();
  Eigen::VectorXd p = Eigen::VectorXd::Constant(k, 1.0 / (k + 1));
  double value = like.value(p) / like.participants();

  auto try_direction = [&](const Eigen::VectorXd& grad, const Eigen::VectorXd& dir) -> bool {
    double step = 1.0;
    for (int back = 0; back < 60; ++back, step *= 0.5) {
      const Eigen::VectorXd trial = project_to_simplex(p + step * dir);
      const double ascent = grad.dot(trial - p);
      if (ascent <= 0.0) continue;
      const double trial_value = like.value(trial) / like.participants();
      // Near the optimum the Armijo gain falls below rounding error in the
      // log-likelihood, so differences at that level count as no loss.
      const double slack = 1e-14 * std::max(1.0, std::abs(value));
      if (trial_value >= value + 1e-4 * ascent - slack) {
        p = trial;
        value = trial_value;
        return true;
      }
    }
    return false;
  };

  int it = 0;
  double pg_norm = 0.0;
  for (; it < options.max_iterations; ++it) {
    const Eigen::VectorXd grad = like.gradient(p);
    pg_norm = (project_to_simplex(p + grad) - p).norm();
    if (pg_norm <= options.tolerance) break;

    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (p[i] > 1e-12 || grad[i] > 0.0) free.push_back(i);
    }
    bool moved = false;
    if (!free.empty()) {
      const Eigen::MatrixXd h = like.hessian(p);
      const auto m = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd hf(m, m);
      Eigen::VectorXd gf(m);
      for (Eigen::Index a = 0; a < m; ++a) {
        gf[a] = grad[free[static_cast<std::size_t>(a)]];
        for (Eigen::Index b = 0; b < m; ++b) hf(a, b) = -h(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
      }
      Eigen::LLT<Eigen::MatrixXd> llt(hf);
      if (llt.info() == Eigen::Success) {
        const Eigen::VectorXd df = llt.solve(gf);
        Eigen::VectorXd dir = Eigen::VectorXd::Zero(k);
        for (Eigen::Index a = 0; a < m; ++a) dir[free[static_cast<std::size_t>(a)]] = df[a];
        if (dir.allFinite()) moved = try_direction(grad, dir);
      }
    }
    if (!moved && !try_direction(grad, grad)) break;
  }
  if (pg_norm > options.tolerance) {
    throw SolverError("maximum-likelihood fit stopped with projected gradient norm " + std::to_string(pg_norm), p);
  }
  return {Parameter(p), like.value(p), pg_norm, it};
}

/// Compensated (Neumaier) running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

struct VarianceCheck {
  /// Sample variance of u^T p-hat over replications.
  double empirical_variance = 0.0;
  /// a(v;p) / C.
  double predicted_variance = 0.0;
  /// empirical / predicted.
  double ratio = 0.0;
  /// Mean of u^T p-hat minus u^T p.
  double bias = 0.0;
  /// Standard error of the mean of u^T p-hat.
  double bias_standard_error = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  /// Jarque-Bera statistic and its chi-square(2) p-value.
  double jarque_bera = 0.0;
  double normality_p_value = 0.0;
  std::vector<double> estimates;
};

struct VarianceCheckOptions {
  int replications = 200;
  std::uint64_t seed = 1;
  /// 0 picks the hardware concurrency.
  unsigned threads = 0;
  MleOptions mle;
};

/// Moment summary of a sample of u^T p-hat values.
inline void summarize(VarianceCheck& out, double truth) {
  const auto n = static_cast<double>(out.estimates.size());
  CompensatedSum sum;
  for (double x : out.estimates) sum.add(x);
  const double mean = sum.value() / n;
  CompensatedSum m2;
  CompensatedSum m3;
  CompensatedSum m4;
  for (double x : out.estimates) {
    const double d = x - mean;
    m2.add(d * d);
    m3.add(d * d * d);
    m4.add(d * d * d * d);
  }
  out.empirical_variance = m2.value() / (n - 1.0);
  out.bias = mean - truth;
  out.bias_standard_error = std::sqrt(out.empirical_variance / n);
  const double var_pop = m2.value() / n;
  out.skewness = (m3.value() / n) / std::pow(var_pop, 1.5);
  out.excess_kurtosis = (m4.value() / n) / (var_pop * var_pop) - 3.0;
  out.jarque_bera = n / 6.0 * (out.skewness * out.skewness + 0.25 * out.excess_kurtosis * out.excess_kurtosis);
  out.normality_p_value = std::exp(-0.5 * out.jarque_bera);
}

/// Monte-Carlo check of the predicted variance a(v;p)/C: repeatedly
/// simulates the integer design built from fractions v and budget C, fits
/// the MLE and compares the spread of u^T p-hat to the prediction.
inline VarianceCheck variance_check(const Parameter& p, const DiseaseModel& model,
                                    const std::vector<TestPattern>& patterns, const Eigen::VectorXd& v,
                                    double budget, const VarianceCheckOptions& options = {}) {
  if (options.replications < 100) throw ValidationError("at least 100 replications are required", "replications");
  const Design design = design_from_fractions(v, budget, patterns);
  const double predicted = objective(v, p, model, patterns) / budget;

  VarianceCheck out;
  out.predicted_variance = predicted;
  out.estimates.assign(static_cast<std::size_t>(options.replications), 0.0);
  const Eigen::VectorXd& u = model.u();

  unsigned threads = options.threads ? options.threads : std::max(1U, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(options.replications));
  std::vector<std::future<void>> workers;
  for (unsigned w = 0; w < threads; ++w) {
    workers.push_back(std::async(std::launch::async, [&, w] {
      for (auto r = static_cast<std::size_t>(w); r < out.estimates.size(); r += threads) {
        const SurveyDataset data = sample_outcomes(design, p, model, options.seed, r);
        out.estimates[r] = u.dot(mle(data, model, options.mle).estimate.values());
      }
    }));
  }
  for (auto& w : workers) w.get();

  summarize(out, u.dot(p.values()));
  out.ratio = out.empirical_variance / predicted;
  return out;
}

}  // namespace serodesign
