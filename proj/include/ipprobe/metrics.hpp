#pragma once

// Paired responses -> ScoreSeries. Interval-type responses give differences
// (left minus right); everything else gives similarities in [0, 1].

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <memory>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ipprobe/core.hpp"

namespace ipprobe::metrics {

enum class MetricKind {
  IntervalDifference,
  ChoiceSimilarity,
  ScalarSimilarity,
  JudgedTextSimilarity,
  BinaryDifference,
};

inline const char* to_string(MetricKind k) {
  switch (k) {
    case MetricKind::IntervalDifference: return "interval_difference";
    case MetricKind::ChoiceSimilarity: return "choice_similarity";
    case MetricKind::ScalarSimilarity: return "scalar_similarity";
    case MetricKind::JudgedTextSimilarity: return "judged_text_similarity";
    case MetricKind::BinaryDifference: return "binary_difference";
  }
  return "?";
}

inline MetricKind parse_metric_kind(const std::string& s) {
  for (auto k : {MetricKind::IntervalDifference, MetricKind::ChoiceSimilarity,
                 MetricKind::ScalarSimilarity, MetricKind::JudgedTextSimilarity,
                 MetricKind::BinaryDifference}) {
    if (s == to_string(k)) return k;
  }
  throw config_error("unknown metric kind '" + s + "'");
}

inline ResponseKind expected_response(MetricKind k) {
  switch (k) {
    case MetricKind::IntervalDifference: return ResponseKind::Interval;
    case MetricKind::ChoiceSimilarity: return ResponseKind::Choice;
    case MetricKind::ScalarSimilarity: return ResponseKind::Scalar;
    case MetricKind::JudgedTextSimilarity: return ResponseKind::FreeText;
    case MetricKind::BinaryDifference: return ResponseKind::Binary;
  }
  return ResponseKind::Interval;
}

inline Track track_of(MetricKind k) {
  return k == MetricKind::IntervalDifference || k == MetricKind::BinaryDifference
             ? Track::Difference
             : Track::Similarity;
}

// --- judges ---------------------------------------------------------------------

struct JudgeScore {
  double raw = 0.0;
  double native_lo = 0.0;
  double native_hi = 1.0;
  double tolerance = 0.0;  // slack allowed outside the native range before RangeError
};

// Scores the similarity of two texts. Must be safe to call concurrently.
class SimilarityJudge {
 public:
  virtual ~SimilarityJudge() = default;
  virtual JudgeScore judge(const std::string& a, const std::string& b) const = 0;
  virtual std::string describe() const = 0;
};

// Lexical-overlap fallback: Jaccard index of lower-cased word sets.
class JaccardJudge final : public SimilarityJudge {
 public:
  static std::set<std::string> tokens(const std::string& text) {
    std::set<std::string> out;
    std::string cur;
    for (char c : text) {
      const auto u = static_cast<unsigned char>(c);
      if (u >= 0x80 || std::isalnum(u)) {
        cur.push_back(static_cast<char>(std::tolower(u)));
      } else if (!cur.empty()) {
        out.insert(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) out.insert(std::move(cur));
    return out;
  }

  JudgeScore judge(const std::string& a, const std::string& b) const override {
    const auto ta = tokens(a);
    const auto tb = tokens(b);
    if (ta.empty() && tb.empty()) return {a == b ? 1.0 : 0.0, 0.0, 1.0, 0.0};
    std::size_t common = 0;
    for (const auto& t : ta) common += tb.count(t);
    const auto uni = ta.size() + tb.size() - common;
    return {static_cast<double>(common) / static_cast<double>(uni), 0.0, 1.0, 0.0};
  }

  std::string describe() const override { return "jaccard"; }
};

struct MetricSpec {
  MetricKind kind = MetricKind::IntervalDifference;
  std::shared_ptr<const SimilarityJudge> judge;  // JudgedTextSimilarity only
};

// --- per-pair metrics ---------------------------------------------------------------

namespace detail {

template <typename T>
std::pair<const T*, const T*> both(const PairedObservation& p, const char* expected) {
  const auto* a = std::get_if<T>(&p.left.response);
  const auto* b = std::get_if<T>(&p.right.response);
  if (a == nullptr || b == nullptr) {
    throw validation_error("VariantMismatch", "pair '" + p.semantic_id + "' is " +
                                                  to_string(kind_of(p.left.response)) + "/" +
                                                  to_string(kind_of(p.right.response)) +
                                                  ", expected " + expected);
  }
  return {a, b};
}

}  // namespace detail

inline double interval_difference(const PairedObservation& p) {
  auto [a, b] = detail::both<IntervalResponse>(p, "interval");
  return a->value - b->value;
}

// Percentage points: 100 * (r(left) - r(right)).
inline double binary_difference(const PairedObservation& p) {
  auto [a, b] = detail::both<BinaryResponse>(p, "binary");
  return 100.0 * static_cast<double>(a->correct - b->correct);
}

inline double choice_similarity(const PairedObservation& p) {
  auto [a, b] = detail::both<ChoiceResponse>(p, "choice");
  if (a->option_count != b->option_count) {
    throw validation_error("OptionCountMismatch",
                           "pair '" + p.semantic_id + "' has " + std::to_string(a->option_count) +
                               " vs " + std::to_string(b->option_count) + " options");
  }
  return a->option_id == b->option_id ? 1.0 : 0.0;
}

inline double scalar_similarity(const PairedObservation& p) {
  auto [a, b] = detail::both<ScalarResponse>(p, "scalar");
  if (a->lo != b->lo || a->hi != b->hi) {
    throw validation_error("RangeMismatch", "pair '" + p.semantic_id + "' uses different scales");
  }
  return std::clamp(1.0 - std::abs(a->value - b->value) / (a->hi - a->lo), 0.0, 1.0);
}

// Affine rescale of the judge's native range onto [0, 1], then clamp.
inline double rescale_judge_score(const JudgeScore& s) {
  if (!(s.native_lo < s.native_hi)) {
    throw validation_error("RangeError", "judge native range is empty");
  }
  if (!std::isfinite(s.raw) || s.raw < s.native_lo - s.tolerance ||
      s.raw > s.native_hi + s.tolerance) {
    throw validation_error("RangeError", "judge score " + std::to_string(s.raw) +
                                             " outside its declared range");
  }
  return std::clamp((s.raw - s.native_lo) / (s.native_hi - s.native_lo), 0.0, 1.0);
}

inline double judged_text_similarity(const PairedObservation& p, const SimilarityJudge& judge) {
  auto [a, b] = detail::both<FreeTextResponse>(p, "free_text");
  return rescale_judge_score(judge.judge(a->text, b->text));
}

inline double score_pair(const PairedObservation& p, const MetricSpec& spec) {
  switch (spec.kind) {
    case MetricKind::IntervalDifference: return interval_difference(p);
    case MetricKind::BinaryDifference: return binary_difference(p);
    case MetricKind::ChoiceSimilarity: return choice_similarity(p);
    case MetricKind::ScalarSimilarity: return scalar_similarity(p);
    case MetricKind::JudgedTextSimilarity:
      if (!spec.judge) throw config_error("judged_text_similarity requires a judge");
      return judged_text_similarity(p, *spec.judge);
  }
  throw config_error("unhandled metric kind");
}

// One score per pair, in sample order. `concurrency` > 1 only pays off for
// remote judges; results are identical either way.
inline ScoreSeries score_sample(const PairedSample& sample, const MetricSpec& spec,
                                std::size_t concurrency = 1) {
  if (spec.kind == MetricKind::JudgedTextSimilarity && !spec.judge) {
    throw config_error("judged_text_similarity requires a judge");
  }
  const auto expected = expected_response(spec.kind);
  for (const auto& obs : sample.observations()) {
    if (kind_of(obs.left.response) != expected || kind_of(obs.right.response) != expected) {
      throw validation_error("VariantMismatch",
                             "pair '" + obs.semantic_id + "' does not match metric " +
                                 to_string(spec.kind));
    }
  }

  const auto& obs = sample.observations();
  std::vector<double> values(obs.size());
  const std::size_t workers = std::clamp<std::size_t>(concurrency, 1, obs.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < obs.size(); ++i) values[i] = score_pair(obs[i], spec);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(obs.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < obs.size(); i = next++) {
          try {
            values[i] = score_pair(obs[i], spec);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  ScoreSeries series{track_of(spec.kind), std::move(values), sample.background_pair()};
  series.validate();
  return series;
}

}  // namespace ipprobe::metrics
