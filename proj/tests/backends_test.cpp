#include <gtest/gtest.h>

#include <atomic>

#include "ipprobe/backends.hpp"

using namespace ipprobe;
using namespace ipprobe::backends;

namespace {

std::vector<sampling::PairedInputs> skeletons(std::size_t n) {
  std::vector<sampling::PairedInputs> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = "q" + std::to_string(i);
    out.push_back({id, "b0", "text " + id, "b1", "text " + id, std::nullopt});
  }
  return out;
}

MockEffectConfig interval(double mean, double sd, double delta) {
  MockEffectConfig c;
  c.response_kind = ResponseKind::Interval;
  c.mean = mean;
  c.sd = sd;
  c.effect_delta = delta;
  c.treated = "b1";
  c.seed = 5;
  return c;
}

// Fails every query whose semantic id is listed.
class FlakyBackend final : public Backend {
 public:
  explicit FlakyBackend(std::set<std::string> failing) : failing_(std::move(failing)) {}
  ResponseValue query(const QueryContext& ctx) const override {
    ++calls;
    if (failing_.count(ctx.semantic_id)) throw backend_error("RemoteError", "boom " + ctx.semantic_id);
    return IntervalResponse{static_cast<double>(ctx.semantic_id.size())};
  }
  ResponseKind response_kind() const override { return ResponseKind::Interval; }
  std::string describe() const override { return "flaky"; }
  mutable std::atomic<int> calls{0};

 private:
  std::set<std::string> failing_;
};

double value(const ResponseValue& r) { return std::get<IntervalResponse>(r).value; }

}  // namespace

TEST(MockBackend, DeterministicShift) {
  MockBackend m(interval(5.0, 0.0, 2.0));
  EXPECT_EQ(value(m.query({"q", "b0", "x", {}})), 5.0);
  EXPECT_EQ(value(m.query({"q", "b1", "x", {}})), 7.0);
  EXPECT_EQ(m.describe(), "mock:interval");
}

TEST(MockBackend, ZeroEffectGivesEqualSides) {
  MockBackend m(interval(3.0, 2.0, 0.0));
  for (int i = 0; i < 200; ++i) {
    const auto id = "q" + std::to_string(i);
    EXPECT_EQ(value(m.query({id, "b0", "x", {}})), value(m.query({id, "b1", "y", {}})));
  }
}

TEST(MockBackend, SharedNoisePairsExactlyWithoutOwnNoise) {
  MockBackend m(interval(0.0, 3.0, 1.5));
  for (int i = 0; i < 200; ++i) {
    const auto id = "q" + std::to_string(i);
    EXPECT_NEAR(value(m.query({id, "b1", "", {}})) - value(m.query({id, "b0", "", {}})), 1.5, 1e-12);
  }
}

TEST(MockBackend, OwnNoiseMakesSidesDiffer) {
  auto c = interval(0.0, 1.0, 0.0);
  c.noise_sd = 1.0;
  MockBackend m(c);
  int differ = 0;
  for (int i = 0; i < 100; ++i) {
    const auto id = "q" + std::to_string(i);
    differ += value(m.query({id, "b0", "", {}})) != value(m.query({id, "b1", "", {}}));
  }
  EXPECT_EQ(differ, 100);
}

TEST(MockBackend, SeedControlsOutput) {
  MockBackend a(interval(0.0, 1.0, 0.0));
  MockBackend b(interval(0.0, 1.0, 0.0));
  auto c = interval(0.0, 1.0, 0.0);
  c.seed = 6;
  MockBackend other(c);
  EXPECT_EQ(value(a.query({"q", "b0", "", {}})), value(b.query({"q", "b0", "", {}})));
  EXPECT_NE(value(a.query({"q", "b0", "", {}})), value(other.query({"q", "b0", "", {}})));
}

TEST(MockBackend, BinaryRatesFollowQ0AndDelta) {
  MockEffectConfig c;
  c.response_kind = ResponseKind::Binary;
  c.q0 = 0.8;
  c.effect_delta = -0.2;
  c.treated = "b1";
  c.seed = 0;
  MockBackend m(c);
  const int n = 10000;
  int r0 = 0;
  int r1 = 0;
  for (int i = 0; i < n; ++i) {
    const auto id = "q" + std::to_string(i);
    r0 += std::get<BinaryResponse>(m.query({id, "b0", "", {}})).correct;
    r1 += std::get<BinaryResponse>(m.query({id, "b1", "", {}})).correct;
  }
  EXPECT_NEAR(r0 / double(n), 0.8, 0.01);
  EXPECT_NEAR(r1 / double(n), 0.6, 0.01);
  EXPECT_NEAR((r0 - r1) / double(n), 0.2, 0.01);
}

TEST(MockBackend, ScalarIsClampedAndChoiceInRange) {
  MockEffectConfig s;
  s.response_kind = ResponseKind::Scalar;
  s.mean = 9.5;
  s.sd = 5.0;
  s.lo = 0;
  s.hi = 10;
  MockBackend scalar(s);
  MockEffectConfig ch;
  ch.response_kind = ResponseKind::Choice;
  ch.option_count = 3;
  ch.effect_delta = 0.5;
  ch.treated = "b1";
  MockBackend choice(ch);
  for (int i = 0; i < 500; ++i) {
    const auto id = std::to_string(i);
    EXPECT_FALSE(response_violation(scalar.query({id, "b0", "", {}})));
    EXPECT_FALSE(response_violation(choice.query({id, "b1", "", {}})));
  }
}

TEST(MockBackend, ConfigValidation) {
  auto bad = interval(0.0, -1.0, 0.0);
  EXPECT_THROW(MockBackend{bad}, Error);
  MockEffectConfig b;
  b.response_kind = ResponseKind::Binary;
  b.q0 = 0.9;
  b.effect_delta = 0.2;
  EXPECT_THROW(MockBackend{b}, Error);
  MockEffectConfig c;
  c.response_kind = ResponseKind::Choice;
  c.option_count = 1;
  EXPECT_THROW(MockBackend{c}, Error);
}

TEST(Collect, OneObservationPerSkeleton) {
  MockBackend m(interval(5.0, 0.0, 2.0));
  const auto r = collect_responses(skeletons(3), m);
  ASSERT_TRUE(r.sample);
  EXPECT_EQ(r.sample->n(), 3u);
  EXPECT_EQ(r.dropped(), 0u);
  for (const auto& o : r.sample->observations()) {
    EXPECT_EQ(value(o.left.response), 5.0);
    EXPECT_EQ(value(o.right.response), 7.0);
    EXPECT_EQ(o.left.semantic_id, o.semantic_id);
  }
}

TEST(Collect, EmptyInputFails) {
  MockBackend m(interval(5.0, 0.0, 0.0));
  try {
    collect_responses({}, m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "EmptySample");
  }
}

TEST(Collect, MixedPairsFail) {
  auto s = skeletons(2);
  s[1] = s[1].swapped();
  MockBackend m(interval(5.0, 0.0, 0.0));
  EXPECT_THROW(collect_responses(s, m), Error);
}

TEST(Collect, BackendFailureDropsItem) {
  FlakyBackend b({"q1"});
  const auto r = collect_responses(skeletons(3), b);
  ASSERT_TRUE(r.sample);
  EXPECT_EQ(r.sample->n(), 2u);
  EXPECT_EQ(r.dropped(), 1u);
  EXPECT_FALSE(r.manifest[1].ok);
  EXPECT_NE(r.manifest[1].reason.find("boom q1"), std::string::npos);
  EXPECT_EQ(to_json(r.manifest[1])["status"], "dropped");
  EXPECT_EQ(to_json(r.manifest[0]).dump(), R"({"semantic_id":"q0","status":"ok"})");
}

TEST(Collect, AllDroppedLeavesNoSample) {
  FlakyBackend b({"q0", "q1"});
  const auto r = collect_responses(skeletons(2), b);
  EXPECT_FALSE(r.sample);
  EXPECT_EQ(r.dropped(), 2u);
}

TEST(Collect, FailFastRethrows) {
  FlakyBackend b({"q1"});
  try {
    collect_responses(skeletons(5), b, {true, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::Backend);
  }
  EXPECT_LE(b.calls.load(), 4);
}

TEST(Collect, ConcurrencyDoesNotChangeOutput) {
  auto c = interval(1.0, 1.0, 0.5);
  c.noise_sd = 0.3;
  MockBackend m(c);
  const auto one = collect_responses(skeletons(57), m, {false, 1});
  const auto many = collect_responses(skeletons(57), m, {false, 8});
  ASSERT_TRUE(one.sample && many.sample);
  EXPECT_EQ(*one.sample, *many.sample);
  EXPECT_EQ(one.manifest, many.manifest);
}
