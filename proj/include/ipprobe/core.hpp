#pragma once

// Domain types shared by every stage of the audit pipeline.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ipprobe/error.hpp"

namespace ipprobe {

struct BackgroundLabel {
  std::string id;
  std::string description;

  bool operator==(const BackgroundLabel&) const = default;
};

// Ordered pair of background ids. `left` is always the background that
// appears first in the owning BackgroundSet.
struct BackgroundPair {
  std::string left;
  std::string right;

  bool operator==(const BackgroundPair&) const = default;

  bool same_unordered(const BackgroundPair& other) const {
    return (left == other.left && right == other.right) ||
           (left == other.right && right == other.left);
  }
  std::string key() const { return left + "|" + right; }
};

class BackgroundSet {
 public:
  explicit BackgroundSet(std::vector<BackgroundLabel> labels)
      : labels_(std::move(labels)) {
    if (labels_.size() < 2) {
      throw validation_error("InvalidBackgroundSet",
                             "at least two backgrounds are required");
    }
    std::set<std::string> seen;
    for (const auto& label : labels_) {
      if (label.id.empty()) {
        throw validation_error("InvalidBackgroundSet", "empty background id");
      }
      if (!seen.insert(label.id).second) {
        throw validation_error("InvalidBackgroundSet",
                               "duplicate background id '" + label.id + "'");
      }
    }
  }

  const std::vector<BackgroundLabel>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }

  std::optional<std::size_t> index_of(const std::string& id) const {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i].id == id) return i;
    }
    return std::nullopt;
  }
  bool contains(const std::string& id) const { return index_of(id).has_value(); }

  // C(|B|, 2)
  std::size_t pair_count() const { return labels_.size() * (labels_.size() - 1) / 2; }

  // All unordered pairs, oriented by set order.
  std::vector<BackgroundPair> pairs() const {
    std::vector<BackgroundPair> out;
    out.reserve(pair_count());
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      for (std::size_t j = i + 1; j < labels_.size(); ++j) {
        out.push_back({labels_[i].id, labels_[j].id});
      }
    }
    return out;
  }

  // Orients an arbitrary pair of distinct members by set order.
  BackgroundPair oriented(const std::string& a, const std::string& b) const {
    auto ia = index_of(a);
    auto ib = index_of(b);
    if (!ia || !ib) {
      throw validation_error("UnknownBackground",
                             "background pair (" + a + ", " + b + ") not in set");
    }
    return *ia <= *ib ? BackgroundPair{a, b} : BackgroundPair{b, a};
  }

  bool operator==(const BackgroundSet&) const = default;

 private:
  std::vector<BackgroundLabel> labels_;
};

// --- responses -------------------------------------------------------------

struct IntervalResponse {
  double value = 0.0;
  bool operator==(const IntervalResponse&) const = default;
};

struct ChoiceResponse {
  std::string option_id;
  int option_count = 0;
  bool operator==(const ChoiceResponse&) const = default;
};

struct ScalarResponse {
  double value = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const ScalarResponse&) const = default;
};

struct FreeTextResponse {
  std::string text;
  bool operator==(const FreeTextResponse&) const = default;
};

struct BinaryResponse {
  int correct = 0;
  bool operator==(const BinaryResponse&) const = default;
};

using ResponseValue = std::variant<IntervalResponse, ChoiceResponse, ScalarResponse,
                                   FreeTextResponse, BinaryResponse>;

enum class ResponseKind { Interval, Choice, Scalar, FreeText, Binary };

inline ResponseKind kind_of(const ResponseValue& v) {
  return static_cast<ResponseKind>(v.index());
}

inline const char* to_string(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::Interval: return "interval";
    case ResponseKind::Choice: return "choice";
    case ResponseKind::Scalar: return "scalar";
    case ResponseKind::FreeText: return "free_text";
    case ResponseKind::Binary: return "binary";
  }
  return "?";
}

inline ResponseKind parse_response_kind(const std::string& s) {
  if (s == "interval") return ResponseKind::Interval;
  if (s == "choice") return ResponseKind::Choice;
  if (s == "scalar") return ResponseKind::Scalar;
  if (s == "free_text") return ResponseKind::FreeText;
  if (s == "binary") return ResponseKind::Binary;
  throw config_error("unknown response kind '" + s + "'");
}

// Option ids are either 1-based integers ("3") or letters ("C").
inline bool option_id_in_range(const std::string& id, int option_count) {
  if (id.empty()) return false;
  if (id.size() == 1 && id[0] >= 'A' && id[0] <= 'Z') {
    return id[0] - 'A' < option_count;
  }
  if (id.find_first_not_of("0123456789") != std::string::npos || id.size() > 6) return false;
  const int k = std::stoi(id);
  return k >= 1 && k <= option_count;
}

// Returns the first invariant violation, if any.
inline std::optional<std::string> response_violation(const ResponseValue& v) {
  return std::visit(
      [](const auto& r) -> std::optional<std::string> {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, IntervalResponse>) {
          if (!std::isfinite(r.value)) return "interval value is not finite";
        } else if constexpr (std::is_same_v<T, ChoiceResponse>) {
          if (r.option_count < 2) return "choice option_count < 2";
          if (!option_id_in_range(r.option_id, r.option_count)) {
            return "choice option_id '" + r.option_id + "' outside declared options";
          }
        } else if constexpr (std::is_same_v<T, ScalarResponse>) {
          if (!(r.lo < r.hi)) return "scalar range requires lo < hi";
          if (!(r.lo <= r.value && r.value <= r.hi)) return "scalar value outside [lo, hi]";
        } else if constexpr (std::is_same_v<T, BinaryResponse>) {
          if (r.correct != 0 && r.correct != 1) return "binary value must be 0 or 1";
        }
        return std::nullopt;
      },
      v);
}

// --- observations ------------------------------------------------------------

struct Observation {
  std::string semantic_id;
  std::string background;
  std::string input_text;
  ResponseValue response;

  bool operator==(const Observation&) const = default;
};

struct PairedObservation {
  std::string semantic_id;
  Observation left;
  Observation right;

  bool operator==(const PairedObservation&) const = default;

  PairedObservation swapped() const { return {semantic_id, right, left}; }
};

// n >= 1 observations sharing one background orientation. Deeper pairing
// checks (semantic ids, variants) live in sampling::validate_pairing.
class PairedSample {
 public:
  PairedSample(BackgroundPair pair, std::vector<PairedObservation> observations)
      : pair_(std::move(pair)), observations_(std::move(observations)) {
    if (observations_.empty()) {
      throw validation_error("EmptySample", "paired sample for (" + pair_.left + ", " +
                                                pair_.right + ") has no observations");
    }
    for (const auto& obs : observations_) {
      if (obs.left.background != pair_.left || obs.right.background != pair_.right) {
        throw validation_error(
            "OrientationMismatch",
            "observation '" + obs.semantic_id + "' has backgrounds (" + obs.left.background +
                ", " + obs.right.background + "), expected (" + pair_.left + ", " +
                pair_.right + ")");
      }
    }
  }

  const BackgroundPair& background_pair() const { return pair_; }
  const std::vector<PairedObservation>& observations() const { return observations_; }
  std::size_t n() const { return observations_.size(); }

  bool operator==(const PairedSample&) const = default;

 private:
  BackgroundPair pair_;
  std::vector<PairedObservation> observations_;
};

// --- scores and tests --------------------------------------------------------

enum class Track { Difference, Similarity };

inline const char* to_string(Track t) {
  return t == Track::Difference ? "difference" : "similarity";
}

struct ScoreSeries {
  Track track = Track::Difference;
  std::vector<double> values;
  BackgroundPair background_pair;

  bool operator==(const ScoreSeries&) const = default;

  void validate() const {
    for (double v : values) {
      if (!std::isfinite(v)) {
        throw validation_error("InvalidSeries", "non-finite score value");
      }
      if (track == Track::Similarity && (v < 0.0 || v > 1.0)) {
        throw validation_error("InvalidSeries", "similarity value outside [0, 1]");
      }
    }
  }
};

enum class TestMethod { Permutation, Sign };

inline const char* to_string(TestMethod m) {
  return m == TestMethod::Permutation ? "permutation" : "sign";
}

struct TestParams {
  std::size_t n = 0;                       // effective sample size
  std::optional<std::size_t> permutations;  // L (montecarlo) or 2^n (exhaustive)
  std::optional<std::string> mode;          // "montecarlo" | "exhaustive"
  std::optional<double> m0;
  std::optional<std::string> tail;  // "inclusive" | "strict"

  bool operator==(const TestParams&) const = default;
};

struct TestResult {
  TestMethod method = TestMethod::Permutation;
  double statistic = 0.0;  // mean difference, or n_- for the sign test
  double p_value = 1.0;
  TestParams params;
  BackgroundPair background_pair;
  std::optional<std::uint64_t> seed;
  double series_mean = 0.0;  // mean difference or mean similarity

  bool operator==(const TestResult&) const = default;
};

struct PairDecision {
  BackgroundPair background_pair;
  bool reject = false;

  bool operator==(const PairDecision&) const = default;
};

struct MultiTestReport {
  double alpha = 0.05;
  double adjusted_threshold = 0.05;
  std::size_t planned_tests = 1;
  std::vector<TestResult> results;
  bool ip_detected = false;
  std::vector<PairDecision> per_pair_decisions;
  std::vector<std::string> warnings;

  bool operator==(const MultiTestReport&) const = default;
};

}  // namespace ipprobe
