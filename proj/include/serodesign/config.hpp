#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "serodesign/errors.hpp"
#include "serodesign/model.hpp"
#include "serodesign/strata.hpp"

namespace serodesign {

using Json = nlohmann::ordered_json;

struct RunOptions {
  double grid_step = 0.01;
  double alpha = 0.05;
  std::optional<double> moe;
  std::uint64_t seed = 1;
  int replications = 200;

  friend bool operator==(const RunOptions&, const RunOptions&) = default;
};

using Scenario = std::variant<Parameter, ParameterBox, std::vector<StratumSpec>, std::vector<GroupSpec>>;

inline const char* scenario_kind(const Scenario& s) {
  static constexpr const char* kNames[] = {"point", "box", "strata", "groups"};
  return kNames[s.index()];
}

/// Everything one CLI run needs.
///
/// Document layout (JSON):
///
///     {
///       "currency": "Rs",                       optional, default "Rs"
///       "model": {
///         "tests": [{"id", "cost", "sensitivity", "specificity"}, ...],
///         "nominal": [[0/1 per test], ...],     k+1 rows, reference state last
///         "u": [...],                           optional, default all ones
///         "patterns": ["(0,0,1)", ...]          optional, default all subsets
///       },
///       "budget": 1e7,
///       "scenario": exactly one of
///         {"point": [p1, ..., pk]}
///         {"box": {"lower": [...], "upper": [...]}}
///         {"strata": [{"name", "fraction", "p": [...]} or
///                     {"name", "fraction", "box": {"lower", "upper"}}, ...]}
///         {"groups": [{"name", "fraction", "p": [...],
///                      "overrides": [{"test", "sensitivity"?, "specificity"?}]}, ...]}
///       "options": {"grid_step", "alpha", "moe", "seed", "replications"}   all optional
///     }
struct RunConfig {
  DiseaseModel model = DiseaseModel::serosurvey_default();
  /// Empty means every nonempty subset of tests.
  std::vector<std::string> pattern_labels;
  std::string currency = "Rs";
  double budget = 0.0;
  Scenario scenario{Parameter{0.0}};
  RunOptions options;

  std::vector<TestPattern> patterns() const {
    if (pattern_labels.empty()) return all_patterns(model);
    std::vector<TestPattern> out;
    for (const auto& label : pattern_labels) out.push_back(parse_pattern(label, model));
    std::sort(out.begin(), out.end());
    return out;
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline const Json& require(const Json& node, const std::string& key, const std::string& path) {
  if (!node.is_object()) throw ValidationError("expected an object", path);
  auto it = node.find(key);
  if (it == node.end()) throw ValidationError("missing required field", path.empty() ? key : path + "." + key);
  return *it;
}

inline double number(const Json& node, const std::string& path) {
  if (!node.is_number()) throw ValidationError("expected a number", path);
  return node.get<double>();
}

inline Eigen::VectorXd vector(const Json& node, const std::string& path) {
  if (!node.is_array() || node.empty()) throw ValidationError("expected a nonempty array of numbers", path);
  Eigen::VectorXd out(static_cast<Eigen::Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = number(node[i], path + "[" + std::to_string(i) + "]");
  }
  return out;
}

inline std::string text(const Json& node, const std::string& path) {
  if (!node.is_string()) throw ValidationError("expected a string", path);
  return node.get<std::string>();
}

/// Re-raises validation errors from domain constructors under a config path.
template <typename Make>
auto at_path(const std::string& path, Make&& make) {
  try {
    return make();
  } catch (const ValidationError& e) {
    const std::string inner = e.path();
    std::string message = e.what();
    if (!inner.empty() && message.rfind(inner + ": ", 0) == 0) message = message.substr(inner.size() + 2);
    std::string full = path;
    if (!inner.empty() && inner != "p" && inner != "box" && inner != "pattern") full += "." + inner;
    throw ValidationError(message, full);
  }
}

inline Parameter parameter(const Json& node, const std::string& path, int k) {
  const Eigen::VectorXd v = vector(node, path);
  if (v.size() != k) throw ValidationError("expected " + std::to_string(k) + " entries", path);
  return at_path(path, [&] { return Parameter(v); });
}

inline ParameterBox box(const Json& node, const std::string& path, int k) {
  const Eigen::VectorXd lo = vector(require(node, "lower", path), path + ".lower");
  const Eigen::VectorXd hi = vector(require(node, "upper", path), path + ".upper");
  if (lo.size() != k || hi.size() != k) throw ValidationError("bounds need " + std::to_string(k) + " entries", path);
  return at_path(path, [&] { return ParameterBox(lo, hi); });
}

inline DiseaseModel model(const Json& node) {
  const Json& tests_node = require(node, "tests", "model");
  if (!tests_node.is_array() || tests_node.empty()) {
    throw ValidationError("expected a nonempty list of tests", "tests");
  }
  std::vector<TestSpec> tests;
  for (std::size_t j = 0; j < tests_node.size(); ++j) {
    const std::string path = "tests[" + std::to_string(j) + "]";
    const Json& t = tests_node[j];
    tests.push_back({text(require(t, "id", path), path + ".id"), number(require(t, "cost", path), path + ".cost"),
                     number(require(t, "sensitivity", path), path + ".sensitivity"),
                     number(require(t, "specificity", path), path + ".specificity")});
  }
  const Json& rows = require(node, "nominal", "model");
  if (!rows.is_array() || rows.size() < 2) throw ValidationError("expected at least two rows", "nominal");
  Eigen::MatrixXi nominal(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(tests.size()));
  for (std::size_t s = 0; s < rows.size(); ++s) {
    const std::string path = "nominal[" + std::to_string(s) + "]";
    if (!rows[s].is_array() || rows[s].size() != tests.size()) {
      throw ValidationError("row must have one entry per test", path);
    }
    for (std::size_t j = 0; j < tests.size(); ++j) {
      const Json& e = rows[s][j];
      if (!e.is_number_integer() || (e.get<int>() != 0 && e.get<int>() != 1)) {
        throw ValidationError("entries must be 0 or 1", path + "[" + std::to_string(j) + "]");
      }
      nominal(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = e.get<int>();
    }
  }
  Eigen::VectorXd u = Eigen::VectorXd::Ones(nominal.rows() - 1);
  if (auto it = node.find("u"); it != node.end()) u = vector(*it, "u");
  return DiseaseModel(std::move(tests), std::move(nominal), std::move(u));
}

}  // namespace detail

inline RunConfig parse_config(const Json& doc) {
  if (!doc.is_object()) throw ValidationError("configuration must be an object", "");
  RunConfig config;
  config.model = detail::model(detail::require(doc, "model", ""));
  const int k = config.model.dimension();
  const Json& model_node = doc.at("model");
  if (auto it = model_node.find("patterns"); it != model_node.end()) {
    if (!it->is_array() || it->empty()) throw ValidationError("expected a nonempty list of patterns", "patterns");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string path = "patterns[" + std::to_string(i) + "]";
      const std::string label = detail::text((*it)[i], path);
      const TestPattern t = detail::at_path(path, [&] { return parse_pattern(label, config.model); });
      config.pattern_labels.push_back(t.label());
    }
  }
  if (auto it = doc.find("currency"); it != doc.end()) config.currency = detail::text(*it, "currency");
  config.budget = detail::number(detail::require(doc, "budget", ""), "budget");
  if (!(config.budget > 0.0)) throw ValidationError("budget must be positive", "budget");

  const Json& scenario = detail::require(doc, "scenario", "");
  if (!scenario.is_object() || scenario.size() != 1) {
    throw ValidationError("exactly one of point, box, strata, groups is required", "scenario");
  }
  const std::string kind = scenario.begin().key();
  const Json& body = scenario.begin().value();
  if (kind == "point") {
    config.scenario = detail::parameter(body, "scenario.point", k);
  } else if (kind == "box") {
    config.scenario = detail::box(body, "scenario.box", k);
  } else if (kind == "strata") {
    if (!body.is_array() || body.empty()) throw ValidationError("expected a nonempty list", "scenario.strata");
    std::vector<StratumSpec> strata;
    for (std::size_t d = 0; d < body.size(); ++d) {
      const std::string path = "scenario.strata[" + std::to_string(d) + "]";
      const Json& s = body[d];
      StratumSpec spec{detail::text(detail::require(s, "name", path), path + ".name"),
                       detail::number(detail::require(s, "fraction", path), path + ".fraction"), Parameter{0.0}};
      const bool has_p = s.contains("p");
      if (has_p == s.contains("box")) throw ValidationError("exactly one of p or box is required", path);
      if (has_p) {
        spec.parameter = detail::parameter(s.at("p"), path + ".p", k);
      } else {
        spec.parameter = detail::box(s.at("box"), path + ".box", k);
      }
      strata.push_back(std::move(spec));
    }
    std::vector<double> w;
    for (const auto& s : strata) w.push_back(s.fraction);
    detail::check_fractions_sum(w, "scenario.strata");
    config.scenario = std::move(strata);
  } else if (kind == "groups") {
    if (!body.is_array() || body.empty()) throw ValidationError("expected a nonempty list", "scenario.groups");
    std::vector<GroupSpec> groups;
    for (std::size_t g = 0; g < body.size(); ++g) {
      const std::string path = "scenario.groups[" + std::to_string(g) + "]";
      const Json& s = body[g];
      GroupSpec spec{detail::text(detail::require(s, "name", path), path + ".name"),
                     detail::number(detail::require(s, "fraction", path), path + ".fraction"),
                     detail::parameter(detail::require(s, "p", path), path + ".p", k), {}};
      if (auto it = s.find("overrides"); it != s.end()) {
        if (!it->is_array()) throw ValidationError("expected a list", path + ".overrides");
        for (std::size_t i = 0; i < it->size(); ++i) {
          const std::string opath = path + ".overrides[" + std::to_string(i) + "]";
          const Json& o = (*it)[i];
          ReliabilityOverride ov{detail::text(detail::require(o, "test", opath), opath + ".test"), {}, {}};
          if (!config.model.find_test(ov.test_id)) throw ValidationError("unknown test id '" + ov.test_id + "'", opath + ".test");
          if (o.contains("sensitivity")) ov.sensitivity = detail::number(o.at("sensitivity"), opath + ".sensitivity");
          if (o.contains("specificity")) ov.specificity = detail::number(o.at("specificity"), opath + ".specificity");
          spec.overrides.push_back(std::move(ov));
        }
      }
      detail::at_path(path, [&] { return group_model(spec, config.model); });
      groups.push_back(std::move(spec));
    }
    std::vector<double> w;
    for (const auto& s : groups) w.push_back(s.fraction);
    detail::check_fractions_sum(w, "scenario.groups");
    config.scenario = std::move(groups);
  } else {
    throw ValidationError("unknown scenario kind '" + kind + "'", "scenario");
  }

  if (auto it = doc.find("options"); it != doc.end()) {
    const Json& o = *it;
    if (!o.is_object()) throw ValidationError("expected an object", "options");
    if (o.contains("grid_step")) config.options.grid_step = detail::number(o.at("grid_step"), "options.grid_step");
    if (o.contains("alpha")) config.options.alpha = detail::number(o.at("alpha"), "options.alpha");
    if (o.contains("moe")) config.options.moe = detail::number(o.at("moe"), "options.moe");
    if (o.contains("seed")) {
      const Json& seed = o.at("seed");
      if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0)) {
        throw ValidationError("expected a nonnegative integer", "options.seed");
      }
      config.options.seed = o.at("seed").get<std::uint64_t>();
    }
    if (o.contains("replications")) {
      if (!o.at("replications").is_number_integer()) throw ValidationError("expected an integer", "options.replications");
      config.options.replications = o.at("replications").get<int>();
    }
  }
  if (!(config.options.grid_step > 0.0)) throw ValidationError("must be positive", "options.grid_step");
  if (!(config.options.alpha > 0.0 && config.options.alpha < 1.0)) throw ValidationError("must lie in (0, 1)", "options.alpha");
  if (config.options.moe && !(*config.options.moe > 0.0)) throw ValidationError("must be positive", "options.moe");
  if (config.options.replications < 100) throw ValidationError("at least 100 replications are required", "options.replications");
  return config;
}

inline RunConfig parse_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("malformed document: ") + e.what(), "");
  }
  return parse_config(doc);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open configuration file '" + path + "'", "config");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

namespace detail {

inline Json to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(x);
  return out;
}

inline Json to_json(const ParameterBox& b) { return Json{{"lower", to_json(b.lower())}, {"upper", to_json(b.upper())}}; }

}  // namespace detail

inline Json serialize_config(const RunConfig& config) {
  Json doc;
  doc["currency"] = config.currency;
  Json tests = Json::array();
  for (const auto& t : config.model.tests()) {
    tests.push_back({{"id", t.id}, {"cost", t.cost}, {"sensitivity", t.sensitivity}, {"specificity", t.specificity}});
  }
  Json nominal = Json::array();
  for (Eigen::Index s = 0; s < config.model.nominal_matrix().rows(); ++s) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < config.model.nominal_matrix().cols(); ++j) row.push_back(config.model.nominal_matrix()(s, j));
    nominal.push_back(std::move(row));
  }
  doc["model"] = {{"tests", tests}, {"nominal", nominal}, {"u", detail::to_json(config.model.u())}};
  if (!config.pattern_labels.empty()) doc["model"]["patterns"] = config.pattern_labels;
  doc["budget"] = config.budget;

  Json scenario;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Parameter>) {
          scenario["point"] = detail::to_json(s.values());
        } else if constexpr (std::is_same_v<T, ParameterBox>) {
          scenario["box"] = detail::to_json(s);
        } else if constexpr (std::is_same_v<T, std::vector<StratumSpec>>) {
          Json list = Json::array();
          for (const auto& d : s) {
            Json e{{"name", d.name}, {"fraction", d.fraction}};
            if (const auto* p = std::get_if<Parameter>(&d.parameter)) {
              e["p"] = detail::to_json(p->values());
            } else {
              e["box"] = detail::to_json(std::get<ParameterBox>(d.parameter));
            }
            list.push_back(std::move(e));
          }
          scenario["strata"] = std::move(list);
        } else {
          Json list = Json::array();
          for (const auto& g : s) {
            Json overrides = Json::array();
            for (const auto& o : g.overrides) {
              Json e{{"test", o.test_id}};
              if (o.sensitivity) e["sensitivity"] = *o.sensitivity;
              if (o.specificity) e["specificity"] = *o.specificity;
              overrides.push_back(std::move(e));
            }
            list.push_back({{"name", g.name}, {"fraction", g.fraction}, {"p", detail::to_json(g.parameter.values())},
                            {"overrides", std::move(overrides)}});
          }
          scenario["groups"] = std::move(list);
        }
      },
      config.scenario);
  doc["scenario"] = std::move(scenario);

  Json options{{"grid_step", config.options.grid_step}, {"alpha", config.options.alpha}};
  if (config.options.moe) options["moe"] = *config.options.moe;
  options["seed"] = config.options.seed;
  options["replications"] = config.options.replications;
  doc["options"] = std::move(options);
  return doc;
}

}  // namespace serodesign
