#include <gtest/gtest.h>

#include <fstream>

#include "serodesign/config.hpp"
#include "serodesign/report.hpp"

namespace sd = serodesign;

namespace {

std::string fixture(const std::string& name) { return std::string(SERODESIGN_FIXTURES) + "/" + name + ".json"; }

sd::Json minimal() {
  return sd::Json::parse(R"({
    "model": {"tests": [{"id": "A", "cost": 10, "sensitivity": 0.9, "specificity": 0.95},
                        {"id": "B", "cost": 20, "sensitivity": 0.8, "specificity": 0.99}],
              "nominal": [[1, 0], [0, 1], [0, 0]]},
    "budget": 1000,
    "scenario": {"point": [0.1, 0.2]}
  })");
}

std::string error_path(const sd::Json& doc) {
  try {
    sd::parse_config(doc);
  } catch (const sd::ValidationError& e) {
    return e.path();
  }
  return "<none>";
}

}  // namespace

TEST(ParseConfig, RowOneFixture) {
  const auto c = sd::load_config(fixture("table1_row1"));
  EXPECT_DOUBLE_EQ(c.model.test(0).cost, 450);
  EXPECT_DOUBLE_EQ(c.model.test(1).cost, 1600);
  EXPECT_DOUBLE_EQ(c.model.test(2).cost, 300);
  EXPECT_EQ(std::get<sd::Parameter>(c.scenario), (sd::Parameter{0.10, 0.30, 0.01}));
  EXPECT_DOUBLE_EQ(c.budget, 1e7);
}

TEST(ParseConfig, Defaults) {
  const auto c = sd::parse_config(minimal());
  EXPECT_EQ(c.model.u(), Eigen::VectorXd::Ones(2));
  EXPECT_EQ(c.patterns().size(), 3u);
  EXPECT_DOUBLE_EQ(c.options.grid_step, 0.01);
  EXPECT_DOUBLE_EQ(c.options.alpha, 0.05);
  EXPECT_FALSE(c.options.moe.has_value());
}

TEST(ParseConfig, ErrorsNameTheirPath) {
  auto doc = minimal();
  doc["model"]["tests"] = sd::Json::array();
  EXPECT_EQ(error_path(doc), "tests");

  doc = minimal();
  doc["scenario"]["point"] = {0.6, 0.6};
  EXPECT_EQ(error_path(doc), "scenario.point");

  doc = minimal();
  doc["model"]["tests"][1]["sensitivity"] = 1.0;
  EXPECT_EQ(error_path(doc), "tests[1].sensitivity");

  doc = minimal();
  doc["scenario"]["box"] = {{"lower", {0, 0}}, {"upper", {0.1, 0.1}}};
  EXPECT_EQ(error_path(doc), "scenario");

  doc = minimal();
  doc["scenario"] = {{"groups", {{{"name", "g"}, {"fraction", 1.0}, {"p", {0.1, 0.1}},
                                  {"overrides", {{{"test", "Z"}, {"sensitivity", 0.5}}}}}}}};
  EXPECT_EQ(error_path(doc), "scenario.groups[0].overrides[0].test");

  doc = minimal();
  doc["model"]["patterns"] = {"(1,1,1)"};
  EXPECT_EQ(error_path(doc), "patterns[0]");

  doc = minimal();
  doc.erase("budget");
  EXPECT_EQ(error_path(doc), "budget");

  EXPECT_THROW(sd::parse_config(std::string("{not json")), sd::ValidationError);
}

TEST(ParseConfig, SensitivityOneExplained) {
  auto doc = minimal();
  doc["model"]["tests"][0]["sensitivity"] = 1.0;
  try {
    sd::parse_config(doc);
    FAIL();
  } catch (const sd::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("(0, 1)"), std::string::npos) << e.what();
  }
}

TEST(SerializeConfig, RoundTripsEveryFixture) {
  for (const char* name : {"table1_row1", "table1_row2", "table1_row3", "table1_row4", "table1_row5",
                           "margin_of_error", "districts"}) {
    const auto c = sd::load_config(fixture(name));
    const auto again = sd::parse_config(sd::serialize_config(c));
    EXPECT_EQ(again, c) << name;
    EXPECT_EQ(sd::serialize_config(again).dump(), sd::serialize_config(c).dump()) << name;
  }
}

TEST(SerializeConfig, RoundTripsPatternsAndBoxStrata) {
  auto doc = minimal();
  doc["model"]["patterns"] = {"(1,1)", "(0,1)"};
  doc["scenario"] = sd::Json::parse(
      R"({"strata": [{"name": "a", "fraction": 0.4, "box": {"lower": [0, 0], "upper": [0.1, 0.2]}},
                     {"name": "b", "fraction": 0.6, "p": [0.1, 0.1]}]})");
  doc["options"] = {{"moe", 0.02}, {"seed", 9}, {"replications", 150}};
  const auto c = sd::parse_config(doc);
  EXPECT_EQ(sd::parse_config(sd::serialize_config(c)), c);
  EXPECT_EQ(c.patterns().front().label(), "(0,1)");
}

TEST(Report, TableRendersDesignRows) {
  const auto m = sd::DiseaseModel::serosurvey_default();
  const auto patterns = sd::all_patterns(m);
  const sd::Parameter p{0.1, 0.3, 0.01};
  const auto r = sd::solve_c_optimal(p, m, patterns, 1e7);
  const std::string table = sd::render_table(sd::c_optimal_json(r, p, "Rs"));
  EXPECT_NE(table.find("(0,0,1)"), std::string::npos);
  EXPECT_NE(table.find("13125"), std::string::npos);
  EXPECT_EQ(table.find("(1,1,1)"), std::string::npos);
  EXPECT_EQ(sd::c_optimal_json(r, p, "Rs").dump(), sd::c_optimal_json(sd::solve_c_optimal(p, m, patterns, 1e7), p, "Rs").dump());
}
