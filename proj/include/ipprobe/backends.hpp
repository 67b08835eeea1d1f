#pragma once

// The model under test, f: x -> y, plus response collection.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ipprobe/core.hpp"
#include "ipprobe/rng.hpp"
#include "ipprobe/sampling.hpp"
#include "ipprobe/serialization.hpp"

namespace ipprobe::backends {

struct QueryContext {
  std::string semantic_id;
  std::string background;  // the background the input was written in
  std::string input_text;
  std::optional<std::string> gold;
};

// Implementations must be safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ResponseValue query(const QueryContext& ctx) const = 0;
  virtual ResponseKind response_kind() const = 0;
  // Short provenance string for reports.
  virtual std::string describe() const = 0;
};

// --- mock ----------------------------------------------------------------------

// A synthetic model whose causal effect of background on the response is
// known exactly. Noise shared by both sides of a pair is keyed on
// (seed, semantic_id); `noise_sd` adds independent per-response noise.
struct MockEffectConfig {
  ResponseKind response_kind = ResponseKind::Interval;
  double mean = 0.0;      // Interval / Scalar
  double sd = 0.0;        // shared (paired) noise
  double noise_sd = 0.0;  // per-response noise, Interval / Scalar only
  double lo = 0.0;        // Scalar range
  double hi = 1.0;
  double q0 = 0.5;        // Binary base correct-probability
  int option_count = 4;   // Choice
  std::string text = "ok";          // FreeText base reply
  std::string treated_text = "ok";  // FreeText reply under the effect
  double effect_delta = 0.0;
  std::string treated;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& why) { throw config_error("mock backend: " + why); };
    if (!(sd >= 0.0) || !(noise_sd >= 0.0)) fail("sd and noise_sd must be >= 0");
    if (!std::isfinite(mean) || !std::isfinite(effect_delta)) fail("non-finite parameter");
    switch (response_kind) {
      case ResponseKind::Interval:
        break;
      case ResponseKind::Scalar:
        if (!(lo < hi)) fail("scalar range requires lo < hi");
        if (!(lo <= mean && mean <= hi)) fail("scalar mean outside [lo, hi]");
        break;
      case ResponseKind::Binary:
        if (!(q0 >= 0.0 && q0 <= 1.0) || !(q0 + effect_delta >= 0.0 && q0 + effect_delta <= 1.0)) {
          fail("binary q0 and q0 + effect_delta must lie in [0, 1]");
        }
        break;
      case ResponseKind::Choice:
        if (option_count < 2) fail("option_count must be >= 2");
        [[fallthrough]];
      case ResponseKind::FreeText:
        if (!(effect_delta >= 0.0 && effect_delta <= 1.0)) {
          fail("effect_delta is a switching probability here and must lie in [0, 1]");
        }
        if (response_kind == ResponseKind::FreeText && text.empty()) fail("empty canned text");
        break;
    }
  }
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockEffectConfig config) : config_(std::move(config)) { config_.validate(); }

  ResponseValue query(const QueryContext& ctx) const override {
    const bool treated = !config_.treated.empty() && ctx.background == config_.treated;
    auto shared = rng::make_engine(rng::derive(config_.seed, "item\x1f" + ctx.semantic_id));
    auto own = rng::make_engine(
        rng::derive(config_.seed, "resp\x1f" + ctx.semantic_id + "\x1f" + ctx.background));
    // One distribution per engine: normal_distribution caches a spare draw.
    std::normal_distribution<double> z_shared(0.0, 1.0);
    std::normal_distribution<double> z_own(0.0, 1.0);
    const double delta = treated ? config_.effect_delta : 0.0;

    switch (config_.response_kind) {
      case ResponseKind::Interval:
      case ResponseKind::Scalar: {
        double v = config_.mean;
        if (config_.sd > 0.0) v += config_.sd * z_shared(shared);
        if (config_.noise_sd > 0.0) v += config_.noise_sd * z_own(own);
        v += delta;
        if (config_.response_kind == ResponseKind::Interval) return IntervalResponse{v};
        return ScalarResponse{std::clamp(v, config_.lo, config_.hi), config_.lo, config_.hi};
      }
      case ResponseKind::Binary:
        return BinaryResponse{rng::uniform01(shared) < config_.q0 + delta ? 1 : 0};
      case ResponseKind::Choice: {
        const double u = rng::uniform01(shared);
        const double flip = rng::uniform01(shared);
        auto index = static_cast<int>(u * config_.option_count);
        if (flip < delta) index = (index + 1) % config_.option_count;
        return ChoiceResponse{std::to_string(index + 1), config_.option_count};
      }
      case ResponseKind::FreeText: {
        rng::uniform01(shared);
        const double flip = rng::uniform01(shared);
        return FreeTextResponse{flip < delta ? config_.treated_text : config_.text};
      }
    }
    throw config_error("mock backend: unhandled response kind");
  }

  ResponseKind response_kind() const override { return config_.response_kind; }

  std::string describe() const override {
    return std::string("mock:") + to_string(config_.response_kind);
  }

  const MockEffectConfig& config() const { return config_; }

 private:
  MockEffectConfig config_;
};

// --- collection --------------------------------------------------------------------

struct ManifestEntry {
  std::string semantic_id;
  bool ok = true;
  std::string reason;
  bool operator==(const ManifestEntry&) const = default;
};

inline Json to_json(const ManifestEntry& e) {
  Json j{{"semantic_id", e.semantic_id}, {"status", e.ok ? "ok" : "dropped"}};
  if (!e.ok) j["reason"] = e.reason;
  return j;
}

struct CollectOptions {
  bool fail_fast = false;
  std::size_t concurrency = 1;
};

struct CollectResult {
  std::optional<PairedSample> sample;  // empty when every item was dropped
  std::vector<ManifestEntry> manifest;
  std::size_t dropped() const {
    return static_cast<std::size_t>(
        std::count_if(manifest.begin(), manifest.end(), [](const auto& e) { return !e.ok; }));
  }
};

// Queries both sides of every skeleton. Output order equals input order
// whatever the concurrency. Backend-category errors drop the item unless
// `fail_fast`, in which case the earliest failing item's error is rethrown.
inline CollectResult collect_responses(const std::vector<sampling::PairedInputs>& skeletons,
                                       const Backend& backend, const CollectOptions& options = {}) {
  if (skeletons.empty()) {
    throw validation_error("EmptySample", "no paired inputs to collect responses for");
  }
  const auto pair = skeletons.front().background_pair();
  for (const auto& s : skeletons) {
    if (s.background_pair() != pair) {
      throw validation_error("OrientationMismatch",
                             "skeleton '" + s.semantic_id + "' has a different background pair");
    }
  }

  const std::size_t n = skeletons.size();
  std::vector<std::optional<PairedObservation>> filled(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto work = [&] {
    for (std::size_t i = next++; i < n && !stop.load(); i = next++) {
      const auto& s = skeletons[i];
      try {
        auto left = backend.query({s.semantic_id, s.left_background, s.left_text, s.gold});
        auto right = backend.query({s.semantic_id, s.right_background, s.right_text, s.gold});
        filled[i] = PairedObservation{
            s.semantic_id,
            Observation{s.semantic_id, s.left_background, s.left_text, std::move(left)},
            Observation{s.semantic_id, s.right_background, s.right_text, std::move(right)}};
      } catch (const Error& e) {
        if (e.category() != ErrorCategory::Backend) throw;
        errors[i] = std::current_exception();
        if (options.fail_fast) stop = true;
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(options.concurrency, 1, n);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::exception_ptr> crashes(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work();
        } catch (...) {
          crashes[w] = std::current_exception();
          stop = true;
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& c : crashes) {
      if (c) std::rethrow_exception(c);
    }
  }

  if (options.fail_fast) {
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  CollectResult result;
  std::vector<PairedObservation> kept;
  kept.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (filled[i]) {
      kept.push_back(std::move(*filled[i]));
      result.manifest.push_back({skeletons[i].semantic_id, true, {}});
      continue;
    }
    std::string reason = "not attempted";
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const Error& e) {
        reason = e.what();
      }
    }
    result.manifest.push_back({skeletons[i].semantic_id, false, std::move(reason)});
  }
  if (!kept.empty()) result.sample.emplace(pair, std::move(kept));
  return result;
}

}  // namespace ipprobe::backends
