#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "serodesign/errors.hpp"
#include "serodesign/model.hpp"

namespace serodesign {

/// Returned by objective() when the combined information matrix is singular.
inline constexpr double kInfiniteVariance = std::numeric_limits<double>::infinity();

/// Relative eigenvalue floor below which a combined information matrix is
/// treated as singular.
inline constexpr double kSingularityRatio = 1e-12;

struct SolverOptions {
  /// Stop when the Frank-Wolfe duality gap drops below gap_tol * objective.
  double gap_tol = 1e-9;
  int max_iterations = 100000;
  /// Relative KKT residual accepted at termination.
  double kkt_tol = 1e-6;
  /// Fractions at or below this are treated as off-support.
  double support_eps = 1e-7;
  double pd_tolerance = kDefaultPdTolerance;
};

/// Cost-scaled information matrices I_t(p) / c_t for every pattern at one
/// parameter value. All design-space computations at a fixed p go through
/// this, so the per-pattern Fisher matrices are built once.
class ScaledInformation {
 public:
  ScaledInformation(const std::vector<PatternChannel>& channels, const Eigen::VectorXd& p,
                    Eigen::VectorXd u)
      : u_(std::move(u)) {
    if (channels.empty()) throw ValidationError("at least one pattern is required", "patterns");
    scaled_.reserve(channels.size());
    costs_.reserve(channels.size());
    for (const auto& channel : channels) {
      const double cost = channel.pattern().cost();
      scaled_.push_back(channel.fisher(p) / cost);
      costs_.push_back(cost);
    }
  }

  ScaledInformation(const std::vector<TestPattern>& patterns, const Parameter& p,
                    const DiseaseModel& model)
      : ScaledInformation(make_channels(patterns, model), checked(p, model), model.u()) {}

  std::size_t size() const noexcept { return scaled_.size(); }
  int dimension() const noexcept { return static_cast<int>(u_.size()); }
  const Eigen::MatrixXd& operator[](std::size_t t) const { return scaled_[t]; }
  double cost(std::size_t t) const { return costs_[t]; }
  const Eigen::VectorXd& u() const noexcept { return u_; }

  /// A(v) = sum_t v_t I_t / c_t.
  Eigen::MatrixXd combined(const Eigen::VectorXd& v) const {
    if (static_cast<std::size_t>(v.size()) != scaled_.size()) {
      throw ValidationError("fraction vector length must equal the number of patterns", "v");
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(u_.size(), u_.size());
    for (std::size_t t = 0; t < scaled_.size(); ++t) {
      if (v[static_cast<Eigen::Index>(t)] != 0.0) a += v[static_cast<Eigen::Index>(t)] * scaled_[t];
    }
    return a;
  }

 private:
  static const Eigen::VectorXd& checked(const Parameter& p, const DiseaseModel& model) {
    if (p.dimension() != model.dimension()) throw ValidationError("parameter dimension mismatch", "p");
    return p.values();
  }

  std::vector<Eigen::MatrixXd> scaled_;
  std::vector<double> costs_;
  Eigen::VectorXd u_;
};

namespace detail {

inline bool numerically_singular(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()[0];
  const double hi = eig.eigenvalues()[eig.eigenvalues().size() - 1];
  return !(hi > 0.0) || lo <= kSingularityRatio * hi;
}

/// Factorized A(v) with x = A^{-1} u.
struct Evaluation {
  bool singular = true;
  double value = kInfiniteVariance;
  Eigen::LLT<Eigen::MatrixXd> factor;
  Eigen::VectorXd x;
};

inline Evaluation evaluate(const ScaledInformation& info, const Eigen::VectorXd& v) {
  Evaluation e;
  const Eigen::MatrixXd a = info.combined(v);
  if (numerically_singular(a)) return e;
  e.factor.compute(a);
  if (e.factor.info() != Eigen::Success) return e;
  e.x = e.factor.solve(info.u());
  e.value = info.u().dot(e.x);
  e.singular = false;
  return e;
}

/// Positive sensitivities g_t = x^T (I_t/c_t) x; the gradient of the
/// objective is -g.
inline Eigen::VectorXd sensitivities(const ScaledInformation& info, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(info.size()));
  for (std::size_t t = 0; t < info.size(); ++t) g[static_cast<Eigen::Index>(t)] = x.dot(info[t] * x);
  return g;
}

inline void check_fractions(const Eigen::VectorXd& v) {
  for (Eigen::Index t = 0; t < v.size(); ++t) {
    if (!(v[t] >= 0.0) || !std::isfinite(v[t])) {
      throw ValidationError("fractions must be finite and nonnegative", "v[" + std::to_string(t) + "]");
    }
  }
}

}  // namespace detail

/// a(v;p) = u^T A(v)^{-1} u, or kInfiniteVariance when A(v) is singular.
inline double objective(const ScaledInformation& info, const Eigen::VectorXd& v) {
  detail::check_fractions(v);
  return detail::evaluate(info, v).value;
}

inline double objective(const Eigen::VectorXd& v, const Parameter& p, const DiseaseModel& model,
                        const std::vector<TestPattern>& patterns) {
  return objective(ScaledInformation(patterns, p, model), v);
}

/// Gradient of a(v;p) with respect to v: component t is
/// -u^T A^{-1} (I_t/c_t) A^{-1} u.
inline Eigen::VectorXd objective_gradient(const ScaledInformation& info, const Eigen::VectorXd& v) {
  detail::check_fractions(v);
  const auto e = detail::evaluate(info, v);
  if (e.singular) throw AssumptionError("combined information matrix is singular; gradient undefined");
  return -detail::sensitivities(info, e.x);
}

inline Eigen::VectorXd objective_gradient(const Eigen::VectorXd& v, const Parameter& p,
                                          const DiseaseModel& model,
                                          const std::vector<TestPattern>& patterns) {
  return objective_gradient(ScaledInformation(patterns, p, model), v);
}

/// Allocation of a budget over test patterns.
struct Design {
  std::vector<TestPattern> patterns;
  /// Budget shares v_t.
  Eigen::VectorXd fractions;
  double budget = 0.0;
  /// Participants per pattern, w_t = v_t C / c_t.
  Eigen::VectorXd counts;
  /// Nearest-integer rounding of counts.
  std::vector<long long> integer_counts;

  double fractional_cost() const {
    double total = 0.0;
    for (std::size_t t = 0; t < patterns.size(); ++t) total += counts[static_cast<Eigen::Index>(t)] * patterns[t].cost();
    return total;
  }
  double realized_cost() const {
    double total = 0.0;
    for (std::size_t t = 0; t < patterns.size(); ++t) total += static_cast<double>(integer_counts[t]) * patterns[t].cost();
    return total;
  }
  /// Integer count for a pattern, or 0 if it is not part of the design.
  long long count_for(const TestPattern& pattern) const {
    for (std::size_t t = 0; t < patterns.size(); ++t) {
      if (patterns[t] == pattern) return integer_counts[t];
    }
    return 0;
  }
  double fraction_for(const TestPattern& pattern) const {
    for (std::size_t t = 0; t < patterns.size(); ++t) {
      if (patterns[t] == pattern) return fractions[static_cast<Eigen::Index>(t)];
    }
    return 0.0;
  }
};

inline Design design_from_fractions(const Eigen::VectorXd& v, double budget,
                                    const std::vector<TestPattern>& patterns) {
  if (!(budget > 0.0) || !std::isfinite(budget)) throw ValidationError("budget must be positive", "budget");
  if (static_cast<std::size_t>(v.size()) != patterns.size()) {
    throw ValidationError("fraction vector length must equal the number of patterns", "v");
  }
  detail::check_fractions(v);
  if (std::abs(v.sum() - 1.0) > 1e-9) throw ValidationError("fractions must sum to 1", "v");
  Design d{patterns, v, budget, Eigen::VectorXd(v.size()), {}};
  d.integer_counts.reserve(patterns.size());
  for (std::size_t t = 0; t < patterns.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    d.counts[i] = v[i] * budget / patterns[t].cost();
    d.integer_counts.push_back(std::llround(d.counts[i]));
  }
  return d;
}

/// Largest violation of the first-order optimality conditions on the simplex.
///
/// With g_t = u^T A^{-1} (I_t/c_t) A^{-1} u and mu = a(v;p): support patterns
/// need g_t = mu, off-support patterns need g_t <= mu.
inline double kkt_check(const ScaledInformation& info, const Eigen::VectorXd& v,
                        double support_eps = SolverOptions{}.support_eps) {
  detail::check_fractions(v);
  const auto e = detail::evaluate(info, v);
  if (e.singular) throw AssumptionError("combined information matrix is singular; KKT undefined");
  const Eigen::VectorXd g = detail::sensitivities(info, e.x);
  const double mu = e.value;
  double residual = 0.0;
  for (Eigen::Index t = 0; t < v.size(); ++t) {
    const double r = v[t] > support_eps ? std::abs(g[t] - mu) : std::max(0.0, g[t] - mu);
    residual = std::max(residual, r);
  }
  return residual;
}

inline double kkt_check(const Eigen::VectorXd& v, const Parameter& p, const DiseaseModel& model,
                        const std::vector<TestPattern>& patterns) {
  return kkt_check(ScaledInformation(patterns, p, model), v);
}

struct SolveReport {
  Design design;
  /// a(v*;p).
  double objective = 0.0;
  /// objective / budget.
  double min_variance = 0.0;
  /// Absolute KKT residual at v*.
  double kkt_residual = 0.0;
  int iterations = 0;
  /// Multiplier of the budget constraint; equals the objective at optimum.
  double mu_star = 0.0;
  double duality_gap = 0.0;

  double relative_kkt_residual() const { return kkt_residual / mu_star; }
};

namespace detail {

/// Exact line search for phi(s) = u^T (A + s D)^{-1} u on [0, s_max]. phi is
/// convex; the root of phi' is bracketed and located by safeguarded Newton.
inline double pairwise_step(const Eigen::MatrixXd& a, const Eigen::MatrixXd& d, const Eigen::VectorXd& u,
                            double s_max) {
  struct Slope {
    bool ok;
    double first;
    double second;
  };
  auto slope = [&](double s) -> Slope {
    const Eigen::MatrixXd m = a + s * d;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success || numerically_singular(m)) return {false, 0.0, 0.0};
    const Eigen::VectorXd x = llt.solve(u);
    const Eigen::VectorXd dx = d * x;
    return {true, -x.dot(dx), 2.0 * dx.dot(llt.solve(dx))};
  };

  const Slope start = slope(0.0);
  if (!start.ok || start.first >= 0.0) return 0.0;
  const Slope end = slope(s_max);
  if (end.ok && end.first <= 0.0) return s_max;

  double lo = 0.0;
  double hi = s_max;
  double s = 0.0;
  Slope cur = start;
  for (int it = 0; it < 200; ++it) {
    double next = cur.ok && cur.second > 0.0 ? s - cur.first / cur.second : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    s = next;
    cur = slope(s);
    if (!cur.ok || cur.first > 0.0) {
      hi = s;
    } else {
      lo = s;
    }
    if (cur.ok && std::abs(cur.first) <= 1e-15 * std::abs(start.first)) break;
    if (hi - lo <= 1e-16 * s_max) break;
  }
  return cur.ok ? s : lo;
}

/// Newton polish of the fractions on their current support, keeping the sum
/// at one. Patterns whose weight is driven to zero leave the support.
inline void polish_support(const ScaledInformation& info, Eigen::VectorXd& v) {
  for (int round = 0; round < 50; ++round) {
    const auto e = evaluate(info, v);
    if (e.singular) return;
    std::vector<std::size_t> support;
    for (std::size_t t = 0; t < info.size(); ++t) {
      if (v[static_cast<Eigen::Index>(t)] > 0.0) support.push_back(t);
    }
    const auto n = static_cast<Eigen::Index>(support.size());
    if (n < 2) return;

    std::vector<Eigen::VectorXd> bx;
    std::vector<Eigen::VectorXd> ainv_bx;
    for (std::size_t t : support) {
      bx.push_back(info[t] * e.x);
      ainv_bx.push_back(e.factor.solve(bx.back()));
    }
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 1, n + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) kkt(i, j) = 2.0 * bx[static_cast<std::size_t>(i)].dot(ainv_bx[static_cast<std::size_t>(j)]);
      kkt(i, n) = kkt(n, i) = 1.0;
      rhs[i] = e.x.dot(bx[static_cast<std::size_t>(i)]);  // minus the gradient
    }
    const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    const Eigen::VectorXd step = sol.head(n);
    if (step.lpNorm<Eigen::Infinity>() <= 1e-15) return;

    double tau = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double vi = v[static_cast<Eigen::Index>(support[static_cast<std::size_t>(i)])];
      if (step[i] < 0.0 && vi / -step[i] <= tau) {
        tau = vi / -step[i];
        blocking = i;
      }
    }
    bool accepted = false;
    for (int back = 0; back < 40 && !accepted; ++back, tau *= 0.5) {
      Eigen::VectorXd trial = v;
      for (Eigen::Index i = 0; i < n; ++i) {
        auto& w = trial[static_cast<Eigen::Index>(support[static_cast<std::size_t>(i)])];
        w = std::max(0.0, w + tau * step[i]);
      }
      if (back == 0 && blocking >= 0) {
        trial[static_cast<Eigen::Index>(support[static_cast<std::size_t>(blocking)])] = 0.0;
      }
      trial /= trial.sum();
      if (evaluate(info, trial).value <= e.value) {
        accepted = trial != v;
        v = trial;
        if (!accepted) return;
      }
    }
    if (!accepted) return;
  }
}

}  // namespace detail

/// Locally c-optimal budget fractions at a fixed parameter.
///
/// Pairwise Frank-Wolfe over the simplex of patterns from the uniform
/// allocation, with exact line search, followed by a Newton polish on the
/// active support. The result does not depend on the budget; the budget only
/// scales the participant counts and the variance.
inline SolveReport solve_c_optimal(const ScaledInformation& info, const std::vector<TestPattern>& patterns,
                                   double budget, const SolverOptions& options = {}) {
  if (patterns.size() != info.size()) throw ValidationError("pattern list does not match information set", "patterns");
  if (!(budget > 0.0)) throw ValidationError("budget must be positive", "budget");
  const auto n = static_cast<Eigen::Index>(info.size());
  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  if (detail::evaluate(info, v).singular) {
    throw AssumptionError("no pattern combination has a nonsingular information matrix; "
                          "every design has infinite variance");
  }

  int iterations = 0;
  double gap = kInfiniteVariance;
  Eigen::VectorXd best = v;
  double best_value = kInfiniteVariance;
  for (int cycle = 0; cycle < 20; ++cycle) {
    while (iterations < options.max_iterations) {
      const auto e = detail::evaluate(info, v);
      const Eigen::VectorXd g = detail::sensitivities(info, e.x);
      if (e.value < best_value) {
        best_value = e.value;
        best = v;
      }
      Eigen::Index toward = 0;
      for (Eigen::Index t = 1; t < n; ++t) {
        if (g[t] > g[toward]) toward = t;
      }
      gap = g[toward] - e.value;
      if (gap <= options.gap_tol * e.value) break;
      Eigen::Index away = -1;
      for (Eigen::Index t = 0; t < n; ++t) {
        if (v[t] > 0.0 && (away < 0 || g[t] < g[away])) away = t;
      }
      if (away == toward) break;
      const Eigen::MatrixXd direction =
          info[static_cast<std::size_t>(toward)] - info[static_cast<std::size_t>(away)];
      const double s_max = v[away];
      const double s = detail::pairwise_step(info.combined(v), direction, info.u(), s_max);
      ++iterations;
      if (s == s_max) {
        v[toward] += v[away];
        v[away] = 0.0;
      } else {
        v[toward] += s;
        v[away] -= s;
      }
    }
    detail::polish_support(info, v);
    const auto e = detail::evaluate(info, v);
    if (e.value < best_value) {
      best_value = e.value;
      best = v;
    }
    const double residual = kkt_check(info, v, options.support_eps);
    if (residual <= options.kkt_tol * e.value) {
      SolveReport report;
      report.design = design_from_fractions(v, budget, patterns);
      report.objective = e.value;
      report.min_variance = e.value / budget;
      report.kkt_residual = residual;
      report.iterations = iterations;
      report.mu_star = e.value;
      const Eigen::VectorXd g = detail::sensitivities(info, e.x);
      report.duality_gap = g.maxCoeff() - e.value;
      return report;
    }
    if (iterations >= options.max_iterations) break;
  }
  throw SolverError("c-optimal solve did not reach the KKT tolerance after " + std::to_string(iterations) +
                        " iterations (duality gap " + std::to_string(gap) + ")",
                    best);
}

inline SolveReport solve_c_optimal(const Parameter& p, const DiseaseModel& model,
                                   const std::vector<TestPattern>& patterns, double budget,
                                   const SolverOptions& options = {}) {
  if (!check_a1(p, patterns, model, options.pd_tolerance).holds) {
    throw AssumptionError("no test pattern has a positive definite information matrix at p = " +
                          format_vector(p.values()) + "; no design has finite variance");
  }
  return solve_c_optimal(ScaledInformation(patterns, p, model), patterns, budget, options);
}

/// Upper quantile function of the standard normal distribution (Wichura's
/// AS241 PPND16, relative accuracy about 1e-16).
inline double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("probability must lie in (0, 1)", "alpha");
  const double q = prob - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? prob : 1.0 - prob;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                 1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
              4.6303378461565452959) * r + 1.42343711074968357734) /
            (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                 0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
              2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                 0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
              5.4637849111641143699) * r + 6.6579046435011037772) /
            (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                 7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
              0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

struct MarginBudget {
  /// Budget at which the margin of error equals the target exactly.
  double budget = 0.0;
  /// |Phi^{-1}(alpha/2)|.
  double z = 0.0;
  /// a(v*;p) of the c-optimal design.
  double objective = 0.0;
};

/// Smallest budget whose c-optimal design reaches margin of error `moe` at
/// confidence 1 - alpha: C = z^2 a(v*;p) / moe^2.
inline MarginBudget budget_for_margin(const Parameter& p, const DiseaseModel& model,
                                      const std::vector<TestPattern>& patterns, double moe, double alpha,
                                      const SolverOptions& options = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)", "alpha");
  if (!(moe > 0.0) || !std::isfinite(moe)) throw ValidationError("margin of error must be positive", "moe");
  const SolveReport report = solve_c_optimal(p, model, patterns, 1.0, options);
  const double z = std::abs(normal_quantile(alpha / 2.0));
  return {z * z * report.objective / (moe * moe), z, report.objective};
}

}  // namespace serodesign
