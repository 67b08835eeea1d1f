#include <gtest/gtest.h>

#include "ipprobe/stats.hpp"
#include "ipprobe/verdict.hpp"

using namespace ipprobe;
using namespace ipprobe::verdict;

namespace {

TestResult result(BackgroundPair pair, double p) {
  TestResult r;
  r.method = TestMethod::Permutation;
  r.p_value = p;
  r.statistic = 0.5;
  r.series_mean = 0.5;
  r.background_pair = std::move(pair);
  r.params = {30, 10000, "montecarlo", std::nullopt, std::nullopt};
  r.seed = 99;
  return r;
}

MultiTestReport report(std::vector<double> ps, double threshold) {
  const std::vector<BackgroundPair> pairs{{"a", "b"}, {"a", "c"}, {"b", "c"}};
  MultiTestReport rep;
  rep.alpha = 0.05;
  rep.adjusted_threshold = threshold;
  rep.planned_tests = ps.size();
  for (std::size_t i = 0; i < ps.size(); ++i) rep.results.push_back(result(pairs[i], ps[i]));
  return rep;
}

EthicsConfig ethics(bool ok) { return {"app", ok, "because"}; }

}  // namespace

TEST(Alignment, TruthTable) {
  EXPECT_EQ(alignment_verdict(true, ethics(true)), AlignmentVerdict::Aligned);
  EXPECT_EQ(alignment_verdict(false, ethics(false)), AlignmentVerdict::Aligned);
  EXPECT_EQ(alignment_verdict(false, ethics(true)), AlignmentVerdict::MisalignedMissingIP);
  EXPECT_EQ(alignment_verdict(true, ethics(false)), AlignmentVerdict::MisalignedUnwantedIP);
  for (auto v : {AlignmentVerdict::Aligned, AlignmentVerdict::MisalignedMissingIP,
                 AlignmentVerdict::MisalignedUnwantedIP}) {
    EXPECT_EQ(parse_alignment(to_string(v)), v);
  }
}

TEST(Ethics, RequiresRationale) {
  EXPECT_THROW((EthicsConfig{"app", true, ""}).validate(), Error);
  EXPECT_THROW((EthicsConfig{"", true, "x"}).validate(), Error);
  EXPECT_NO_THROW(ethics(true).validate());
}

TEST(DecideIp, Examples) {
  EXPECT_TRUE(decide_ip(report({0.0001, 0.0002, 0.0}, 0.05 / 3)));
  EXPECT_FALSE(decide_ip(report({0.79}, 0.05)));
  EXPECT_TRUE(decide_ip(report({0.04, 0.42, 0.002}, 0.05 / 3)));
  EXPECT_FALSE(decide_ip(report({0.04, 0.42, 0.02}, 0.05 / 3)));
  EXPECT_FALSE(decide_ip(report({}, 0.05)));
}

// Lowering any p-value never turns a detection into a non-detection.
TEST(DecideIp, MonotoneInPValues) {
  const std::vector<double> grid{0.0, 0.001, 0.0166, 0.0167, 0.02, 0.5, 1.0};
  for (double p0 : grid) {
    for (double p1 : grid) {
      for (double p2 : grid) {
        const bool base = decide_ip(report({p0, p1, p2}, 0.05 / 3));
        for (double lower : grid) {
          if (lower > p1) continue;
          if (base) {
            EXPECT_TRUE(decide_ip(report({p0, lower, p2}, 0.05 / 3)));
          }
        }
      }
    }
  }
}

TEST(DisplayP, RoundsAndFloors) {
  EXPECT_EQ(display_p(0.0031), "∼0");
  EXPECT_EQ(display_p(0.0), "∼0");
  EXPECT_EQ(display_p(0.005), "0.01");
  EXPECT_EQ(display_p(0.79), "0.79");
  EXPECT_EQ(display_p(1.0), "1.00");
}

TEST(Render, JsonLayout) {
  auto rep = report({0.0031, 0.42, 0.02}, 0.05 / 3);
  rep.ip_detected = decide_ip(rep);
  for (const auto& r : rep.results) {
    rep.per_pair_decisions.push_back({r.background_pair, r.p_value <= rep.adjusted_threshold});
  }
  Provenance prov;
  prov.backend = "mock:interval";
  prov.metric = "interval_difference";
  prov.seed = 7;
  prov.permutations = 10000;
  prov.permutation_mode = "montecarlo";
  const auto out = render_report(rep, AlignmentVerdict::Aligned, ethics(true), prov);
  const auto& j = out.json;
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["provenance"]["seed"], 7);
  EXPECT_EQ(j["provenance"]["L"], 10000);
  EXPECT_TRUE(j["provenance"]["M0"].is_null());
  EXPECT_EQ(j["results"][0]["p_display"], "∼0");
  EXPECT_EQ(j["results"][0]["p_value"], 0.0031);
  EXPECT_EQ(j["results"][0]["reject"], true);
  EXPECT_EQ(j["results"][2]["significant_unadjusted"], true);
  EXPECT_EQ(j["results"][2]["reject"], false);
  EXPECT_EQ(j["ip_detected"], true);
  EXPECT_EQ(j["alignment"], "aligned");
  EXPECT_EQ(j["caveats"].size(), 2u);
  EXPECT_NE(out.text.find("[0.42]"), std::string::npos);
  EXPECT_NE(out.text.find("∼0"), std::string::npos);
  EXPECT_NE(out.text.find("insufficient evidence"), std::string::npos);  // caveat text
}

TEST(Render, EmptyResultsWarn) {
  MultiTestReport rep;
  const auto out = render_report(rep, std::nullopt, std::nullopt, {});
  EXPECT_EQ(out.json["ip_detected"], false);
  EXPECT_EQ(out.json["ip_conclusion"], "insufficient evidence");
  EXPECT_EQ(out.json["warnings"][0], "no tests run");
  EXPECT_TRUE(out.json["alignment"].is_null());
  EXPECT_TRUE(out.json["ethics"].is_null());
}

TEST(Render, ReportRoundTrip) {
  auto rep = report({0.04, 0.42, 0.002}, 0.05 / 3);
  rep.ip_detected = true;
  for (const auto& r : rep.results) {
    rep.per_pair_decisions.push_back({r.background_pair, r.p_value <= rep.adjusted_threshold});
  }
  rep.warnings = {"pair (b, c) was not tested"};
  const auto out = render_report(rep, std::nullopt, std::nullopt, {});
  EXPECT_EQ(report_from_json(Json::parse(out.json.dump(2))), rep);

  MultiTestReport empty;
  EXPECT_EQ(report_from_json(render_report(empty, std::nullopt, std::nullopt, {}).json), empty);
}

TEST(Render, AggregatedReportAgreesWithDecideIp) {
  const BackgroundSet set({{"a", ""}, {"b", ""}, {"c", ""}});
  auto rep = stats::bonferroni_aggregate(
      {result({"a", "b"}, 0.04), result({"a", "c"}, 0.42), result({"b", "c"}, 0.002)}, set, 0.05);
  EXPECT_EQ(rep.ip_detected, decide_ip(rep));
  EXPECT_TRUE(rep.ip_detected);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.3f", rep.adjusted_threshold);
  EXPECT_STREQ(buf, "0.017");
}
