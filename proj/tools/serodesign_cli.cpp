// Command-line front end: reads a run configuration, solves, prints a report.
//
// Exit codes: 0 success, 1 invalid input, 2 solver or assumption failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "serodesign/serodesign.hpp"

namespace sd = serodesign;

namespace {

struct Flags {
  std::string config;
  std::string output = "json";
  std::optional<double> grid_step;
  std::optional<double> alpha;
  std::optional<double> moe;
  std::optional<std::uint64_t> seed;
  std::optional<int> replications;
  std::string design;
};

class ScenarioMismatch : public sd::ValidationError {
 public:
  ScenarioMismatch(const std::string& command, const sd::Scenario& s)
      : sd::ValidationError(command + " needs a different scenario kind, got '" + sd::scenario_kind(s) + "'",
                            "scenario") {}
};

sd::RunConfig load(const Flags& f) {
  sd::RunConfig config = sd::load_config(f.config);
  if (f.grid_step) config.options.grid_step = *f.grid_step;
  if (f.alpha) config.options.alpha = *f.alpha;
  if (f.moe) config.options.moe = *f.moe;
  if (f.seed) config.options.seed = *f.seed;
  if (f.replications) config.options.replications = *f.replications;
  // Re-validate overrides through the same path as the file.
  return sd::parse_config(sd::serialize_config(config));
}

template <typename T>
const T& expect(const std::string& command, const sd::RunConfig& config) {
  const T* s = std::get_if<T>(&config.scenario);
  if (!s) throw ScenarioMismatch(command, config.scenario);
  return *s;
}

sd::MinimaxOptions minimax_options(const sd::RunConfig& config) {
  sd::MinimaxOptions o;
  o.grid_step = config.options.grid_step;
  return o;
}

Eigen::VectorXd read_design(const std::string& path, const std::vector<sd::TestPattern>& patterns,
                            const sd::DiseaseModel& model) {
  std::ifstream in(path);
  if (!in) throw sd::ValidationError("cannot open design file '" + path + "'", "design");
  sd::Json doc;
  try {
    doc = sd::Json::parse(in);
  } catch (const sd::Json::parse_error& e) {
    throw sd::ValidationError(std::string("malformed design file: ") + e.what(), "design");
  }
  const sd::Json* rows = nullptr;
  if (doc.contains("design") && doc["design"].contains("rows")) rows = &doc["design"]["rows"];
  else if (doc.contains("rows")) rows = &doc["rows"];
  if (!rows || !rows->is_array()) throw sd::ValidationError("expected design.rows", "design");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(patterns.size()));
  for (const auto& row : *rows) {
    const sd::TestPattern t = sd::parse_pattern(row.at("pattern").get<std::string>(), model);
    bool found = false;
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      if (patterns[i] == t) {
        v[static_cast<Eigen::Index>(i)] = row.at("fraction").get<double>();
        found = true;
      }
    }
    if (!found) throw sd::ValidationError("pattern " + t.label() + " is not in the configuration", "design");
  }
  return v;
}

sd::Json run(const std::string& command, const Flags& f) {
  const sd::RunConfig config = load(f);
  const auto patterns = config.patterns();
  const auto& cur = config.currency;
  sd::SolverOptions solver;

  if (command == "c-optimal") {
    const auto& p = expect<sd::Parameter>(command, config);
    return sd::c_optimal_json(sd::solve_c_optimal(p, config.model, patterns, config.budget, solver), p, cur);
  }
  if (command == "worst-case") {
    const auto& box = expect<sd::ParameterBox>(command, config);
    return sd::worst_case_json(sd::worst_case_design(box, config.model, patterns, config.budget, minimax_options(config)),
                               box, cur);
  }
  if (command == "strata") {
    const auto& strata = expect<std::vector<sd::StratumSpec>>(command, config);
    return sd::allocation_json(
        sd::allocate_districts(strata, config.model, patterns, config.budget, minimax_options(config)), command, cur);
  }
  if (command == "groups") {
    const auto& groups = expect<std::vector<sd::GroupSpec>>(command, config);
    return sd::allocation_json(sd::allocate_groups(groups, config.model, patterns, config.budget, solver), command, cur);
  }
  if (command == "budget") {
    const auto& p = expect<sd::Parameter>(command, config);
    if (!config.options.moe) throw sd::ValidationError("a margin of error is required", "options.moe");
    const auto m = sd::budget_for_margin(p, config.model, patterns, *config.options.moe, config.options.alpha, solver);
    const auto r = sd::solve_c_optimal(p, config.model, patterns, m.budget, solver);
    return sd::margin_json(m, *config.options.moe, config.options.alpha, r.design, cur);
  }
  if (command == "simulate") {
    const auto& p = expect<sd::Parameter>(command, config);
    Eigen::VectorXd v;
    if (!f.design.empty()) {
      v = read_design(f.design, patterns, config.model);
    } else {
      v = sd::solve_c_optimal(p, config.model, patterns, config.budget, solver).design.fractions;
    }
    sd::VarianceCheckOptions o;
    o.replications = config.options.replications;
    o.seed = config.options.seed;
    const auto check = sd::variance_check(p, config.model, patterns, v, config.budget, o);
    sd::Json out = sd::variance_json(check, o.replications, o.seed);
    out["design"] = sd::design_json(sd::design_from_fractions(v, config.budget, patterns), cur);
    return out;
  }
  // check-assumptions
  sd::Json out{{"command", command}, {"scenario", sd::scenario_kind(config.scenario)}};
  const auto point = [&](const sd::Parameter& p, const sd::DiseaseModel& m) {
    const auto a1 = sd::check_a1(p, patterns, m);
    sd::Json e{{"holds", a1.holds}};
    e["witness"] = a1.witness ? sd::Json(a1.witness->label()) : sd::Json(nullptr);
    return e;
  };
  const auto box = [&](const sd::ParameterBox& b) {
    const auto a2 = sd::check_a2(b, patterns, config.model, config.options.grid_step);
    sd::Json e{{"holds", a2.holds}, {"worst_min_eigenvalue", a2.worst_min_eigenvalue}};
    e["witness"] = a2.witness ? sd::Json(a2.witness->label()) : sd::Json(nullptr);
    return e;
  };
  bool ok = true;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, sd::Parameter>) {
          out["a1"] = point(s, config.model);
          ok = out["a1"]["holds"].get<bool>();
        } else if constexpr (std::is_same_v<T, sd::ParameterBox>) {
          out["a2"] = box(s);
          ok = out["a2"]["holds"].get<bool>();
        } else if constexpr (std::is_same_v<T, std::vector<sd::StratumSpec>>) {
          sd::Json list = sd::Json::array();
          for (const auto& d : s) {
            sd::Json e = std::holds_alternative<sd::Parameter>(d.parameter)
                             ? point(std::get<sd::Parameter>(d.parameter), config.model)
                             : box(std::get<sd::ParameterBox>(d.parameter));
            ok = ok && e["holds"].get<bool>();
            e["name"] = d.name;
            list.push_back(std::move(e));
          }
          out["strata"] = std::move(list);
        } else {
          sd::Json list = sd::Json::array();
          for (const auto& g : s) {
            sd::Json e = point(g.parameter, sd::group_model(g, config.model));
            ok = ok && e["holds"].get<bool>();
            e["name"] = g.name;
            list.push_back(std::move(e));
          }
          out["groups"] = std::move(list);
        }
      },
      config.scenario);
  out["holds"] = ok;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cost-aware design of multi-test serological surveys"};
  app.require_subcommand(1, 1);
  Flags flags;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"c-optimal", "Optimal design for a point parameter guess"},
      {"worst-case", "Minimax design over a parameter box"},
      {"strata", "Budget split and designs for population strata"},
      {"groups", "Budget split and designs for groups with distinct test reliabilities"},
      {"budget", "Budget needed for a target margin of error"},
      {"simulate", "Monte-Carlo check of the predicted variance"},
      {"check-assumptions", "Identifiability checks for the configured scenario"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--output", flags.output, "Report format")->check(CLI::IsMember({"json", "table"}));
    sub->add_option("--grid-step", flags.grid_step, "Grid spacing for box scenarios");
    sub->add_option("--alpha", flags.alpha, "Significance level");
    sub->add_option("--moe", flags.moe, "Target margin of error");
    sub->add_option("--seed", flags.seed, "Simulation seed");
    sub->add_option("--replications", flags.replications, "Simulation replications");
    if (name == "simulate") sub->add_option("--design", flags.design, "Design report to simulate instead of the optimum");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const sd::Json report = run(command, flags);
    if (flags.output == "table") {
      std::cout << sd::render_table(report);
    } else {
      std::cout << report.dump(2) << "\n";
    }
    if (command == "check-assumptions" && !report.at("holds").get<bool>()) return 2;
    return 0;
  } catch (const sd::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const sd::AssumptionError& e) {
    std::cerr << "assumption failed: " << e.what() << "\n";
    return 2;
  } catch (const sd::SolverError& e) {
    std::cerr << "solver failed: " << e.what() << "\n";
    return 2;
  } catch (const sd::Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
