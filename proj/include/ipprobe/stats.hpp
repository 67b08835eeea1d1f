#pragma once

// Paired hypothesis tests: a sign-flip permutation test on differences, an
// exact one-sided sign test on similarities, and Bonferroni aggregation
// over all background pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ipprobe/core.hpp"
#include "ipprobe/rng.hpp"

namespace ipprobe::stats {

enum class PermutationMode { MonteCarlo, Exhaustive };

inline const char* to_string(PermutationMode m) {
  return m == PermutationMode::MonteCarlo ? "montecarlo" : "exhaustive";
}

inline PermutationMode parse_permutation_mode(const std::string& s) {
  if (s == "montecarlo") return PermutationMode::MonteCarlo;
  if (s == "exhaustive") return PermutationMode::Exhaustive;
  throw config_error("unknown permutation mode '" + s + "'");
}

inline constexpr std::size_t kMinPermutations = 1000;
inline constexpr std::size_t kMaxExhaustiveN = 20;

struct PermutationParams {
  std::size_t permutations = 10000;  // L
  std::uint64_t seed = 0;
  PermutationMode mode = PermutationMode::MonteCarlo;
  std::size_t threads = 1;  // does not affect the result

  void validate(std::size_t n) const {
    if (mode == PermutationMode::MonteCarlo && permutations < kMinPermutations) {
      throw config_error("montecarlo mode needs at least " + std::to_string(kMinPermutations) +
                         " permutations, got " + std::to_string(permutations));
    }
    if (mode == PermutationMode::Exhaustive && n > kMaxExhaustiveN) {
      throw config_error("exhaustive mode supports n <= " + std::to_string(kMaxExhaustiveN) +
                         ", got " + std::to_string(n));
    }
  }
};

enum class Tail { Inclusive, Strict };

inline const char* to_string(Tail t) { return t == Tail::Inclusive ? "inclusive" : "strict"; }

inline Tail parse_tail(const std::string& s) {
  if (s == "inclusive") return Tail::Inclusive;
  if (s == "strict") return Tail::Strict;
  throw config_error("unknown tail '" + s + "' (expected inclusive|strict)");
}

struct SignTestParams {
  double m0 = 0.0;  // no default on purpose; callers must set it
  Tail tail = Tail::Inclusive;

  void validate() const {
    if (!(m0 > 0.0 && m0 <= 1.0)) {
      throw config_error("sign test threshold M0 must lie in (0, 1], got " + std::to_string(m0));
    }
  }
};

// --- binomial tail ------------------------------------------------------------------

// P(X >= k) for X ~ Bin(n, p). Terms are generated by ratio recurrences
// outward from the mode (scaled so the mode term is 1) and normalised by
// their total, which avoids both overflow and lgamma round-off.
inline double binomial_upper_tail(std::int64_t k, std::int64_t n, double p) {
  if (n < 0 || k < 0 || k > n || !(p >= 0.0 && p <= 1.0)) {
    throw validation_error("DomainError", "binomial_upper_tail requires 0 <= k <= n and p in [0, 1]");
  }
  if (k == 0) return 1.0;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;

  const double q = 1.0 - p;
  const double up = p / q;
  const double down = q / p;
  const auto mode = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::floor(static_cast<double>(n + 1) * p)), 0, n);

  // Neumaier summation.
  struct Sum {
    double s = 0.0, c = 0.0;
    void add(double x) {
      const double t = s + x;
      c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
      s = t;
    }
    double value() const { return s + c; }
  };

  Sum total;
  Sum tail;
  constexpr double kTiny = std::numeric_limits<double>::min();

  double term = 1.0;
  for (std::int64_t j = mode; j <= n; ++j) {
    if (j > mode) {
      term *= static_cast<double>(n - j + 1) / static_cast<double>(j) * up;
      if (term < kTiny) break;
    }
    total.add(term);
    if (j >= k) tail.add(term);
  }
  term = 1.0;
  for (std::int64_t j = mode - 1; j >= 0; --j) {
    term *= static_cast<double>(j + 1) / static_cast<double>(n - j) * down;
    if (term < kTiny) break;
    total.add(term);
    if (j >= k) tail.add(term);
  }
  return std::clamp(tail.value() / total.value(), 0.0, 1.0);
}

// --- permutation test --------------------------------------------------------------------

namespace detail {

inline constexpr std::size_t kBatch = 1024;

// Signed sum with bit i of `bits` flipping element i.
inline double flipped_sum(std::span<const double> d, const std::uint64_t* bits) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool flip = (bits[i / 64] >> (i % 64)) & 1U;
    s += flip ? -d[i] : d[i];
  }
  return s;
}

// Number of Monte-Carlo sign vectors in batch `b` whose |sum| reaches `threshold`.
// Each batch owns an engine seeded from (seed, b), so the count is
// independent of how batches are scheduled.
inline std::size_t count_batch(std::span<const double> d, std::uint64_t seed, std::size_t b,
                               std::size_t size, double threshold) {
  auto engine = rng::make_engine(rng::derive(seed, static_cast<std::uint64_t>(b)));
  const std::size_t words = (d.size() + 63) / 64;
  std::vector<std::uint64_t> bits(words);
  std::size_t hits = 0;
  for (std::size_t l = 0; l < size; ++l) {
    for (auto& w : bits) w = engine();
    if (std::abs(flipped_sum(d, bits.data())) >= threshold) ++hits;
  }
  return hits;
}

}  // namespace detail

// Two-sided sign-flip test of mean difference == 0. The observed and
// permuted sums are compared with a tolerance of a few ulps of sum|d|, so
// sign vectors whose sums tie the observed one in exact arithmetic count
// as ties regardless of rounding.
inline TestResult permutation_test(std::span<const double> differences,
                                   const PermutationParams& params) {
  const std::size_t n = differences.size();
  if (n < 2) {
    throw stats_error("DegenerateSample", "permutation test needs at least 2 differences, got " +
                                              std::to_string(n));
  }
  for (double v : differences) {
    if (!std::isfinite(v)) throw validation_error("DomainError", "non-finite difference");
  }
  params.validate(n);

  double observed = 0.0;
  double magnitude = 0.0;
  for (double v : differences) {
    observed += v;
    magnitude += std::abs(v);
  }
  const double tol = 4.0 * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * magnitude;
  const double threshold = std::abs(observed) - tol;

  TestResult result;
  result.method = TestMethod::Permutation;
  result.statistic = observed / static_cast<double>(n);
  result.series_mean = result.statistic;
  result.params.n = n;
  result.params.mode = to_string(params.mode);

  if (params.mode == PermutationMode::Exhaustive) {
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t hits = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      if (std::abs(detail::flipped_sum(differences, &mask)) >= threshold) ++hits;
    }
    result.p_value = static_cast<double>(hits) / static_cast<double>(total);
    result.params.permutations = static_cast<std::size_t>(total);
    return result;
  }

  const std::size_t L = params.permutations;
  const std::size_t batches = (L + detail::kBatch - 1) / detail::kBatch;
  auto batch_size = [&](std::size_t b) { return std::min(detail::kBatch, L - b * detail::kBatch); };
  const std::size_t workers = std::clamp<std::size_t>(params.threads, 1, batches);
  std::vector<std::size_t> hits(workers, 0);
  auto run = [&](std::size_t w) {
    for (std::size_t b = w; b < batches; b += workers) {
      hits[w] += detail::count_batch(differences, params.seed, b, batch_size(b), threshold);
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  std::size_t count = 0;
  for (auto h : hits) count += h;
  result.p_value = static_cast<double>(1 + count) / static_cast<double>(L + 1);
  result.params.permutations = L;
  result.seed = params.seed;
  return result;
}

// --- sign test ----------------------------------------------------------------------------

// One-sided test of median similarity == M0 against median < M0. Ties at
// M0 are dropped; the statistic is n_- = #{s < M0}.
inline TestResult sign_test(std::span<const double> similarities, const SignTestParams& params) {
  params.validate();
  if (similarities.empty()) throw stats_error("DegenerateSample", "sign test on an empty series");
  std::int64_t below = 0;
  std::int64_t informative = 0;
  double sum = 0.0;
  for (double v : similarities) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw validation_error("DomainError", "similarity values must lie in [0, 1]");
    }
    sum += v;
    if (v < params.m0) ++below;
    if (v != params.m0) ++informative;
  }
  if (informative == 0) {
    throw stats_error("AllTies", "every similarity equals M0 = " + std::to_string(params.m0));
  }

  TestResult result;
  result.method = TestMethod::Sign;
  result.statistic = static_cast<double>(below);
  result.series_mean = sum / static_cast<double>(similarities.size());
  if (params.tail == Tail::Inclusive) {
    result.p_value = binomial_upper_tail(below, informative, 0.5);
  } else {
    result.p_value = below + 1 <= informative ? binomial_upper_tail(below + 1, informative, 0.5) : 0.0;
  }
  result.params.n = static_cast<std::size_t>(informative);
  result.params.m0 = params.m0;
  result.params.tail = to_string(params.tail);
  return result;
}

// Difference track -> permutation test; similarity track -> sign test.
inline TestResult run_pair_test(const ScoreSeries& series, const PermutationParams& perm,
                                const std::optional<SignTestParams>& sign) {
  series.validate();
  TestResult result;
  if (series.track == Track::Difference) {
    result = permutation_test(series.values, perm);
  } else {
    if (!sign) throw config_error("M0 is required for similarity series");
    result = sign_test(series.values, *sign);
  }
  result.background_pair = series.background_pair;
  return result;
}

// --- multiple testing --------------------------------------------------------------------------

inline double bonferroni_threshold(double alpha, std::size_t tests) {
  return alpha / static_cast<double>(tests);
}

inline MultiTestReport bonferroni_aggregate(const std::vector<TestResult>& results,
                                            const BackgroundSet& backgrounds, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw config_error("alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
  MultiTestReport report;
  report.alpha = alpha;
  report.planned_tests = backgrounds.pair_count();
  report.adjusted_threshold = bonferroni_threshold(alpha, report.planned_tests);

  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& pair = results[i].background_pair;
    if (!backgrounds.contains(pair.left) || !backgrounds.contains(pair.right) ||
        pair.left == pair.right) {
      throw validation_error("UnknownPair", "result for (" + pair.left + ", " + pair.right +
                                                ") is not a pair of distinct configured backgrounds");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (results[j].background_pair.same_unordered(pair)) {
        throw validation_error("DuplicatePair",
                               "pair (" + pair.left + ", " + pair.right + ") tested twice");
      }
    }
    if (!(results[i].p_value >= 0.0 && results[i].p_value <= 1.0)) {
      throw validation_error("DomainError", "p-value outside [0, 1]");
    }
  }

  for (const auto& expected : backgrounds.pairs()) {
    const bool covered = std::any_of(results.begin(), results.end(), [&](const auto& r) {
      return r.background_pair.same_unordered(expected);
    });
    if (!covered) {
      report.warnings.push_back("missing test for pair (" + expected.left + ", " +
                                expected.right + ")");
    }
  }

  report.results = results;
  for (const auto& r : results) {
    const bool reject = r.p_value <= report.adjusted_threshold;
    report.per_pair_decisions.push_back({r.background_pair, reject});
    report.ip_detected = report.ip_detected || reject;
  }
  return report;
}

}  // namespace ipprobe::stats
