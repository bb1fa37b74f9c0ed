#pragma once

// Independent reference computations used to check the library. None of
// these call the routine they check.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "serodesign/serodesign.hpp"

namespace oracle {

namespace sd = serodesign;

/// P(y|t;p) summed state by state straight from the test table.
inline double mixture(const sd::Outcome& y, const std::vector<std::uint8_t>& mask, const Eigen::VectorXd& p,
                      const sd::DiseaseModel& model) {
  const int k = model.dimension();
  double total = 0.0;
  for (int s = 0; s <= k; ++s) {
    const double weight = s < k ? p[s] : 1.0 - p.sum();
    double q = 1.0;
    for (std::size_t j = 0; j < mask.size(); ++j) {
      if (!mask[j]) continue;
      const int m = model.nominal_matrix()(s, static_cast<Eigen::Index>(j));
      const auto& test = model.tests()[j];
      const double pos = m == 1 ? test.sensitivity : 1.0 - test.specificity;
      q *= y[j] == 1 ? pos : 1.0 - pos;
    }
    total += weight * q;
  }
  return total;
}

/// Every 0/1 assignment of the included tests, NA elsewhere, in any order.
inline std::vector<sd::Outcome> outcomes(const std::vector<std::uint8_t>& mask) {
  std::vector<sd::Outcome> out{sd::Outcome(mask.size(), sd::kNotObserved)};
  for (std::size_t j = 0; j < mask.size(); ++j) {
    if (!mask[j]) continue;
    std::vector<sd::Outcome> next;
    for (auto y : out) {
      y[j] = 0;
      next.push_back(y);
      y[j] = 1;
      next.push_back(y);
    }
    out = std::move(next);
  }
  return out;
}

/// Negative expected Hessian of log P(y|t;p) by central differences.
inline Eigen::MatrixXd fisher_fd(const std::vector<std::uint8_t>& mask, const Eigen::VectorXd& p,
                                 const sd::DiseaseModel& model, double h = 1e-4) {
  const int k = static_cast<int>(p.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(k, k);
  for (const auto& y : outcomes(mask)) {
    const double weight = mixture(y, mask, p, model);
    auto logp = [&](const Eigen::VectorXd& x) { return std::log(mixture(y, mask, x, model)); };
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        Eigen::VectorXd pp = p, pm = p, mp = p, mm = p;
        pp[i] += h; pp[j] += h;
        pm[i] += h; pm[j] -= h;
        mp[i] -= h; mp[j] += h;
        mm[i] -= h; mm[j] -= h;
        const double hess = (logp(pp) - logp(pm) - logp(mp) + logp(mm)) / (4.0 * h * h);
        out(i, j) -= weight * hess;
      }
    }
  }
  return out;
}

/// Golden-section minimum of f on [lo, hi].
inline double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-10) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - r * (b - a); fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + r * (b - a); fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Standard normal CDF.
inline double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Uniform point in the interior of {p >= 0, sum p <= 1}, kept margin away
/// from every face.
inline Eigen::VectorXd interior_point(std::mt19937_64& rng, int k, double margin = 0.02) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd w(k + 1);
  for (int i = 0; i <= k; ++i) w[i] = e(rng);
  w /= w.sum();
  const double scale = 1.0 - (k + 1) * margin;
  return (w.head(k).array() * scale + margin).matrix();
}

/// Uniform point on the probability simplex of dimension n.
inline Eigen::VectorXd simplex_point(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = e(rng);
  return w / w.sum();
}

}  // namespace oracle
