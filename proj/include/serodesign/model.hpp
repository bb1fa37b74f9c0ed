#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <limits>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "serodesign/errors.hpp"

namespace serodesign {

/// Marker for a test that was not conducted in an outcome vector.
inline constexpr std::int8_t kNotObserved = -1;

/// One entry per test: 0 (negative), 1 (positive) or kNotObserved.
using Outcome = std::vector<std::int8_t>;

inline constexpr double kDefaultPdTolerance = 1e-10;

struct TestSpec {
  std::string id;
  double cost = 0.0;
  double sensitivity = 0.0;  // P(positive | nominal positive)
  double specificity = 0.0;  // P(negative | nominal negative)

  friend bool operator==(const TestSpec&, const TestSpec&) = default;
};

inline void validate_test(const TestSpec& test, const std::string& path) {
  if (test.id.empty()) throw ValidationError("test id must be non-empty", path + ".id");
  if (!(test.cost > 0.0) || !std::isfinite(test.cost)) {
    throw ValidationError("cost must be a positive finite number", path + ".cost");
  }
  // Strict bounds keep every outcome probability positive, including on the
  // boundary of the parameter simplex.
  if (!(test.sensitivity > 0.0 && test.sensitivity < 1.0)) {
    throw ValidationError("sensitivity must lie strictly inside (0, 1); a perfect test "
                          "makes some outcome probabilities zero",
                          path + ".sensitivity");
  }
  if (!(test.specificity > 0.0 && test.specificity < 1.0)) {
    throw ValidationError("specificity must lie strictly inside (0, 1); a perfect test "
                          "makes some outcome probabilities zero",
                          path + ".specificity");
  }
}

/// Multi-test observation model.
///
/// Rows of the nominal matrix are disease states, columns are tests. The
/// first k rows are the states whose probabilities form the parameter; the
/// last row is the reference state with probability 1 - sum(p). State
/// indices in this library are zero-based.
class DiseaseModel {
 public:
  DiseaseModel(std::vector<TestSpec> tests, Eigen::MatrixXi nominal, Eigen::VectorXd u)
      : tests_(std::move(tests)), nominal_(std::move(nominal)), u_(std::move(u)) {
    if (tests_.empty()) throw ValidationError("at least one test is required", "tests");
    if (tests_.size() > 20) throw ValidationError("at most 20 tests are supported", "tests");
    for (std::size_t j = 0; j < tests_.size(); ++j) {
      validate_test(tests_[j], "tests[" + std::to_string(j) + "]");
      for (std::size_t i = 0; i < j; ++i) {
        if (tests_[i].id == tests_[j].id) {
          throw ValidationError("duplicate test id '" + tests_[j].id + "'",
                                "tests[" + std::to_string(j) + "].id");
        }
      }
    }
    if (nominal_.rows() < 2) {
      throw ValidationError("need at least two states (k >= 1 plus the reference state)",
                            "nominal");
    }
    if (nominal_.cols() != static_cast<Eigen::Index>(tests_.size())) {
      throw ValidationError("every row must have one entry per test", "nominal");
    }
    for (Eigen::Index s = 0; s < nominal_.rows(); ++s) {
      for (Eigen::Index j = 0; j < nominal_.cols(); ++j) {
        if (nominal_(s, j) != 0 && nominal_(s, j) != 1) {
          throw ValidationError("entries must be 0 or 1",
                                "nominal[" + std::to_string(s) + "][" + std::to_string(j) + "]");
        }
      }
    }
    if (u_.size() != nominal_.rows() - 1) {
      throw ValidationError("length must equal the parameter dimension k = "
                                + std::to_string(nominal_.rows() - 1),
                            "u");
    }
    if (!u_.allFinite() || u_.isZero(0.0)) throw ValidationError("must be a finite nonzero vector", "u");
  }

  /// Four-state serosurvey model: RAT, RT-PCR and antibody tests, estimating
  /// the total burden p1 + p2 + p3.
  static DiseaseModel serosurvey_default(double rat_cost = 450.0, double rtpcr_cost = 1600.0,
                                         double antibody_cost = 300.0) {
    std::vector<TestSpec> tests{{"RAT", rat_cost, 0.5, 0.975},
                                {"RTPCR", rtpcr_cost, 0.95, 0.97},
                                {"Antibody", antibody_cost, 0.921, 0.977}};
    Eigen::MatrixXi nominal(4, 3);
    nominal << 1, 1, 0,  //
        0, 0, 1,         //
        1, 1, 1,         //
        0, 0, 0;
    return DiseaseModel(std::move(tests), std::move(nominal), Eigen::VectorXd::Ones(3));
  }

  std::size_t num_tests() const noexcept { return tests_.size(); }
  int dimension() const noexcept { return static_cast<int>(nominal_.rows()) - 1; }
  int num_states() const noexcept { return static_cast<int>(nominal_.rows()); }
  int reference_state() const noexcept { return dimension(); }

  const std::vector<TestSpec>& tests() const noexcept { return tests_; }
  const TestSpec& test(std::size_t j) const { return tests_.at(j); }
  const Eigen::MatrixXi& nominal_matrix() const noexcept { return nominal_; }
  int nominal(int state, std::size_t test) const {
    return nominal_(state, static_cast<Eigen::Index>(test));
  }
  const Eigen::VectorXd& u() const noexcept { return u_; }

  /// Probability that test j reports the nominal response of `state`.
  double reliability(int state, std::size_t test) const {
    const TestSpec& spec = tests_[test];
    return nominal(state, test) == 1 ? spec.sensitivity : spec.specificity;
  }

  std::optional<std::size_t> find_test(const std::string& id) const {
    for (std::size_t j = 0; j < tests_.size(); ++j) {
      if (tests_[j].id == id) return j;
    }
    return std::nullopt;
  }

  /// Copy with one test's sensitivity and/or specificity replaced.
  DiseaseModel with_reliability(const std::string& id, std::optional<double> sensitivity,
                                std::optional<double> specificity) const {
    auto j = find_test(id);
    if (!j) throw ValidationError("unknown test id '" + id + "'", "overrides");
    std::vector<TestSpec> tests = tests_;
    if (sensitivity) tests[*j].sensitivity = *sensitivity;
    if (specificity) tests[*j].specificity = *specificity;
    return DiseaseModel(std::move(tests), nominal_, u_);
  }

  DiseaseModel with_u(Eigen::VectorXd u) const { return DiseaseModel(tests_, nominal_, std::move(u)); }

  friend bool operator==(const DiseaseModel& a, const DiseaseModel& b) {
    return a.tests_ == b.tests_ && a.nominal_ == b.nominal_ && a.u_ == b.u_;
  }

 private:
  std::vector<TestSpec> tests_;
  Eigen::MatrixXi nominal_;
  Eigen::VectorXd u_;
};

/// Nonempty subset of tests given to one participant.
class TestPattern {
 public:
  TestPattern(std::vector<std::uint8_t> mask, const DiseaseModel& model) : mask_(std::move(mask)) {
    if (mask_.size() != model.num_tests()) {
      throw ValidationError("pattern length must equal the number of tests", "pattern");
    }
    for (std::size_t j = 0; j < mask_.size(); ++j) {
      if (mask_[j] > 1) throw ValidationError("pattern entries must be 0 or 1", "pattern");
      if (mask_[j] == 1) {
        cost_ += model.test(j).cost;
        ++size_;
      }
    }
    if (size_ == 0) throw ValidationError("pattern must include at least one test", "pattern");
  }

  const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }
  bool includes(std::size_t test) const { return mask_[test] == 1; }
  std::size_t num_tests() const noexcept { return mask_.size(); }
  /// Number of tests conducted.
  std::size_t size() const noexcept { return size_; }
  double cost() const noexcept { return cost_; }

  /// "(0,1,1)" style label.
  std::string label() const {
    std::string out = "(";
    for (std::size_t j = 0; j < mask_.size(); ++j) {
      if (j) out += ',';
      out += mask_[j] ? '1' : '0';
    }
    return out + ")";
  }

  friend bool operator==(const TestPattern& a, const TestPattern& b) { return a.mask_ == b.mask_; }
  friend auto operator<=>(const TestPattern& a, const TestPattern& b) { return a.mask_ <=> b.mask_; }

 private:
  std::vector<std::uint8_t> mask_;
  double cost_ = 0.0;
  std::size_t size_ = 0;
};

/// All nonempty test subsets in lexicographic mask order.
inline std::vector<TestPattern> all_patterns(const DiseaseModel& model) {
  const std::size_t tests = model.num_tests();
  std::vector<TestPattern> out;
  out.reserve((std::size_t{1} << tests) - 1);
  for (std::uint32_t code = 1; code < (std::uint32_t{1} << tests); ++code) {
    std::vector<std::uint8_t> mask(tests);
    for (std::size_t j = 0; j < tests; ++j) mask[j] = (code >> (tests - 1 - j)) & 1U;
    out.emplace_back(std::move(mask), model);
  }
  return out;
}

/// Parses "(0,1,1)", "011" or "0,1,1".
inline TestPattern parse_pattern(const std::string& text, const DiseaseModel& model) {
  std::vector<std::uint8_t> mask;
  for (char c : text) {
    if (c == '0' || c == '1') {
      mask.push_back(static_cast<std::uint8_t>(c - '0'));
    } else if (c != '(' && c != ')' && c != ',' && c != ' ') {
      throw ValidationError("unexpected character in pattern '" + text + "'", "pattern");
    }
  }
  return TestPattern(std::move(mask), model);
}

/// Point in the parameter simplex {p >= 0, sum(p) <= 1}.
class Parameter {
 public:
  static constexpr double kSumTolerance = 1e-12;

  explicit Parameter(Eigen::VectorXd values) : values_(std::move(values)) {
    if (values_.size() == 0) throw ValidationError("parameter must be nonempty", "p");
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i]) || values_[i] < 0.0) {
        throw ValidationError("entries must be finite and nonnegative",
                              "p[" + std::to_string(i) + "]");
      }
    }
    if (values_.sum() > 1.0 + kSumTolerance) {
      throw ValidationError("entries must sum to at most 1 (got " + std::to_string(values_.sum()) + ")",
                            "p");
    }
  }
  Parameter(std::initializer_list<double> values)
      : Parameter(Eigen::Map<const Eigen::VectorXd>(values.begin(),
                                                    static_cast<Eigen::Index>(values.size()))) {}

  const Eigen::VectorXd& values() const noexcept { return values_; }
  int dimension() const noexcept { return static_cast<int>(values_.size()); }
  double operator[](Eigen::Index i) const { return values_[i]; }

  /// Probability of the reference state, clamped at zero.
  double reference_mass() const { return std::max(0.0, 1.0 - values_.sum()); }

  /// Length k+1 state distribution (p, 1 - sum p).
  Eigen::VectorXd state_probabilities() const {
    Eigen::VectorXd out(values_.size() + 1);
    out.head(values_.size()) = values_;
    out[values_.size()] = reference_mass();
    return out;
  }

  friend bool operator==(const Parameter& a, const Parameter& b) { return a.values_ == b.values_; }

 private:
  Eigen::VectorXd values_;
};

inline std::string format_vector(const Eigen::VectorXd& v) {
  std::ostringstream out;
  out.precision(6);
  out << '(';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v[i];
  out << ')';
  return out.str();
}

/// Axis-aligned box intersected with the parameter simplex.
class ParameterBox {
 public:
  ParameterBox(Eigen::VectorXd lower, Eigen::VectorXd upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() == 0 || lower_.size() != upper_.size()) {
      throw ValidationError("lower and upper must be nonempty and of equal length", "box");
    }
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      const std::string path = "box[" + std::to_string(i) + "]";
      if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i])) {
        throw ValidationError("bounds must be finite", path);
      }
      if (lower_[i] < 0.0) throw ValidationError("lower bound must be nonnegative", path);
      if (lower_[i] > upper_[i]) throw ValidationError("lower bound exceeds upper bound", path);
    }
    if (lower_.sum() > 1.0 + Parameter::kSumTolerance) {
      throw ValidationError("box does not intersect the parameter simplex", "box");
    }
  }

  static ParameterBox point(const Parameter& p) { return ParameterBox(p.values(), p.values()); }

  const Eigen::VectorXd& lower() const noexcept { return lower_; }
  const Eigen::VectorXd& upper() const noexcept { return upper_; }
  int dimension() const noexcept { return static_cast<int>(lower_.size()); }

  bool contains(const Eigen::VectorXd& p, double tol = 1e-12) const {
    if (p.size() != lower_.size()) return false;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p[i] < lower_[i] - tol || p[i] > upper_[i] + tol) return false;
    }
    return (p.array() >= -tol).all() && p.sum() <= 1.0 + tol;
  }

  friend bool operator==(const ParameterBox& a, const ParameterBox& b) {
    return a.lower_ == b.lower_ && a.upper_ == b.upper_;
  }

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

namespace detail {

inline double snap(double x) { return std::round(x * 1e12) / 1e12; }

inline std::vector<double> axis_values(double lower, double upper, double step) {
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((upper - lower) / step + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(snap(lower + static_cast<double>(i) * step));
  if (out.back() < upper - 1e-12) out.push_back(upper);
  return out;
}

}  // namespace detail

/// Feasible grid over box ∩ simplex in lexicographic order. Each axis runs
/// from its lower bound in `step` increments and always includes the upper
/// face. Points with sum(p) > 1 are skipped; where the sum(p) = 1 facet cuts
/// the last axis, the facet point is added.
inline std::vector<Parameter> feasible_grid(const ParameterBox& box, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("grid step must be positive", "grid_step");
  const int k = box.dimension();
  std::vector<std::vector<double>> axes;
  for (int i = 0; i < k; ++i) axes.push_back(detail::axis_values(box.lower()[i], box.upper()[i], step));

  std::vector<Parameter> out;
  std::vector<std::size_t> index(static_cast<std::size_t>(k), 0);
  Eigen::VectorXd point(k);
  const auto last = static_cast<std::size_t>(k - 1);
  while (true) {
    double head_sum = 0.0;
    for (int i = 0; i + 1 < k; ++i) {
      point[i] = axes[static_cast<std::size_t>(i)][index[static_cast<std::size_t>(i)]];
      head_sum += point[i];
    }
    const double facet = 1.0 - head_sum;
    bool facet_added = false;
    for (double value : axes[last]) {
      if (!facet_added && facet >= box.lower()[k - 1] && facet < value - 1e-12 &&
          head_sum <= 1.0 + Parameter::kSumTolerance) {
        point[k - 1] = std::max(0.0, facet);
        out.emplace_back(point);
        facet_added = true;
      }
      if (head_sum + value > 1.0 + Parameter::kSumTolerance) break;
      point[k - 1] = value;
      out.emplace_back(point);
      if (std::abs(head_sum + value - 1.0) <= 1e-12) facet_added = true;
    }
    int d = k - 2;
    while (d >= 0) {
      auto& idx = index[static_cast<std::size_t>(d)];
      if (++idx < axes[static_cast<std::size_t>(d)].size()) break;
      idx = 0;
      --d;
    }
    if (d < 0) break;
  }
  if (out.empty()) throw ValidationError("box has no feasible grid points", "box");
  return out;
}

/// Every valid outcome of a pattern, lexicographic over the included tests
/// (the first included test varies slowest).
inline std::vector<Outcome> outcome_space(const TestPattern& pattern) {
  std::vector<std::size_t> included;
  for (std::size_t j = 0; j < pattern.num_tests(); ++j) {
    if (pattern.includes(j)) included.push_back(j);
  }
  const std::size_t m = included.size();
  std::vector<Outcome> out;
  out.reserve(std::size_t{1} << m);
  for (std::uint32_t code = 0; code < (std::uint32_t{1} << m); ++code) {
    Outcome y(pattern.num_tests(), kNotObserved);
    for (std::size_t r = 0; r < m; ++r) {
      y[included[r]] = static_cast<std::int8_t>((code >> (m - 1 - r)) & 1U);
    }
    out.push_back(std::move(y));
  }
  return out;
}

/// q(y | state, t): product over conducted tests of the channel probability.
inline double conditional_prob(const Outcome& y, int state, const TestPattern& pattern,
                               const DiseaseModel& model) {
  if (y.size() != pattern.num_tests()) throw ValidationError("outcome length mismatch", "outcome");
  if (state < 0 || state >= model.num_states()) throw ValidationError("state index out of range", "state");
  double prob = 1.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (!pattern.includes(j)) {
      if (y[j] != kNotObserved) {
        throw ValidationError("outcome reports test " + std::to_string(j) + " which was not conducted",
                              "outcome");
      }
      continue;
    }
    if (y[j] != 0 && y[j] != 1) {
      throw ValidationError("conducted test " + std::to_string(j) + " needs a 0/1 outcome", "outcome");
    }
    const double sigma = model.reliability(state, j);
    prob *= (y[j] == model.nominal(state, j)) ? sigma : 1.0 - sigma;
  }
  return prob;
}

/// P(y | t; p) = sum_s p_s q(y|s,t) + (1 - sum p) q(y|ref,t).
inline double mixture_prob(const Outcome& y, const TestPattern& pattern, const Parameter& p,
                           const DiseaseModel& model) {
  if (p.dimension() != model.dimension()) throw ValidationError("parameter dimension mismatch", "p");
  double total = 0.0;
  const Eigen::VectorXd w = p.state_probabilities();
  for (int s = 0; s < model.num_states(); ++s) total += w[s] * conditional_prob(y, s, pattern, model);
  return total;
}

/// Precomputed q(y|s,t) for one pattern: rows are outcomes in outcome_space
/// order, columns are states. Independent of p, so it is built once and
/// reused across parameter values.
class PatternChannel {
 public:
  PatternChannel(const TestPattern& pattern, const DiseaseModel& model)
      : pattern_(pattern), outcomes_(outcome_space(pattern)) {
    const int states = model.num_states();
    table_.resize(static_cast<Eigen::Index>(outcomes_.size()), states);
    for (std::size_t y = 0; y < outcomes_.size(); ++y) {
      for (int s = 0; s < states; ++s) {
        table_(static_cast<Eigen::Index>(y), s) = conditional_prob(outcomes_[y], s, pattern, model);
      }
    }
    const int k = states - 1;
    contrasts_ = table_.leftCols(k).colwise() - table_.col(k);
  }

  const TestPattern& pattern() const noexcept { return pattern_; }
  const std::vector<Outcome>& outcomes() const noexcept { return outcomes_; }
  const Eigen::MatrixXd& table() const noexcept { return table_; }
  /// Row y holds q(y|i,t) - q(y|ref,t) for i < k.
  const Eigen::MatrixXd& contrasts() const noexcept { return contrasts_; }

  Eigen::VectorXd outcome_probabilities(const Eigen::VectorXd& p) const {
    return contrasts_ * p + table_.col(table_.cols() - 1);
  }

  Eigen::MatrixXd fisher(const Eigen::VectorXd& p) const {
    const Eigen::VectorXd inv = outcome_probabilities(p).cwiseInverse();
    Eigen::MatrixXd info = contrasts_.transpose() * inv.asDiagonal() * contrasts_;
    return 0.5 * (info + info.transpose());
  }

 private:
  TestPattern pattern_;
  std::vector<Outcome> outcomes_;
  Eigen::MatrixXd table_;
  Eigen::MatrixXd contrasts_;
};

inline std::vector<PatternChannel> make_channels(const std::vector<TestPattern>& patterns,
                                                 const DiseaseModel& model) {
  std::vector<PatternChannel> out;
  out.reserve(patterns.size());
  for (const auto& t : patterns) out.emplace_back(t, model);
  return out;
}

/// Fisher information of a single observation under pattern t.
struct FisherMatrix {
  Eigen::MatrixXd entries;

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(entries, Eigen::EigenvaluesOnly);
    return eig.eigenvalues()[0];
  }
  bool positive_definite(double tol = kDefaultPdTolerance) const { return min_eigenvalue() > tol; }
};

inline FisherMatrix fisher_info(const TestPattern& pattern, const Parameter& p, const DiseaseModel& model) {
  if (p.dimension() != model.dimension()) throw ValidationError("parameter dimension mismatch", "p");
  return {PatternChannel(pattern, model).fisher(p.values())};
}

struct A1Result {
  bool holds = false;
  std::optional<TestPattern> witness;
};

/// Some pattern has a positive definite information matrix at p.
inline A1Result check_a1(const Parameter& p, const std::vector<TestPattern>& patterns,
                         const DiseaseModel& model, double pd_tolerance = kDefaultPdTolerance) {
  for (const auto& t : patterns) {
    if (fisher_info(t, p, model).min_eigenvalue() > pd_tolerance) return {true, t};
  }
  return {};
}

struct A2Result {
  bool holds = false;
  /// Smallest eigenvalue over the grid for the best candidate pattern.
  double worst_min_eigenvalue = 0.0;
  std::optional<Parameter> argmin;
  std::optional<TestPattern> witness;
};

/// Some single pattern stays uniformly positive definite over the feasible
/// grid of the box. Reports the pattern with the largest grid-wide minimum
/// eigenvalue.
inline A2Result check_a2(const ParameterBox& box, const std::vector<TestPattern>& patterns,
                         const DiseaseModel& model, double grid_step,
                         double pd_tolerance = kDefaultPdTolerance) {
  if (box.dimension() != model.dimension()) throw ValidationError("box dimension mismatch", "box");
  const std::vector<Parameter> grid = feasible_grid(box, grid_step);
  A2Result best;
  bool have = false;
  for (const auto& t : patterns) {
    const PatternChannel channel(t, model);
    double worst = std::numeric_limits<double>::infinity();
    std::size_t worst_at = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double lambda = FisherMatrix{channel.fisher(grid[g].values())}.min_eigenvalue();
      if (lambda < worst) {
        worst = lambda;
        worst_at = g;
      }
    }
    if (!have || worst > best.worst_min_eigenvalue) {
      best = {worst > pd_tolerance, worst, grid[worst_at], t};
      have = true;
    }
  }
  return best;
}

}  // namespace serodesign
