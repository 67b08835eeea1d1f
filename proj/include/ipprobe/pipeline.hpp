#pragma once

// Staged audit commands over flat files:
//   pair      -> pairs.jsonl
//   collect   -> sample.jsonl + manifest.jsonl
//   score     -> series.jsonl
//   test      -> report.json + report.txt
// `audit` runs all four in sequence through the same files.

#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ipprobe/backends.hpp"
#include "ipprobe/config.hpp"
#include "ipprobe/io.hpp"
#include "ipprobe/metrics.hpp"
#include "ipprobe/sampling.hpp"
#include "ipprobe/stats.hpp"
#include "ipprobe/verdict.hpp"

namespace ipprobe::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kPairsFile = "pairs.jsonl";
inline constexpr const char* kSampleFile = "sample.jsonl";
inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kSeriesFile = "series.jsonl";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kReportTextFile = "report.txt";
inline constexpr const char* kCalibrationFile = "calibration.json";

// Diagnostics sink; the CLI points it at stderr.
using Log = std::function<void(const std::string&)>;

inline void ignore_log(const std::string&) {}

// --- pair --------------------------------------------------------------------------

namespace detail {

inline sampling::SourcePool maybe_subsample(const config::RunConfig& c, sampling::SourcePool pool) {
  if (!c.subsample) return pool;
  return sampling::subsample(pool, *c.subsample, c.stage_seed("pair"));
}

// Paired inputs for one oriented pair (left precedes right in the set).
inline std::vector<sampling::PairedInputs> inputs_for_pair(
    const config::RunConfig& c, const BackgroundPair& pair,
    std::map<std::string, sampling::SourcePool>& pools) {
  auto pool_for = [&](const std::string& id) -> const sampling::SourcePool* {
    auto it = c.pools.find(id);
    if (it == c.pools.end()) return nullptr;
    if (!pools.count(id)) pools.emplace(id, sampling::SourcePool::load(it->second, id));
    return &pools.at(id);
  };

  const auto* left = pool_for(pair.left);
  const auto* right = pool_for(pair.right);
  if (left && right) {
    return sampling::build_paired_inputs(maybe_subsample(c, *left),
                                         sampling::counterpart_transformer(*right), pair.right);
  }
  if (c.lexicon && (left || right)) {
    const auto& lex = *c.lexicon;
    const bool covers = (lex.side_a == pair.left && lex.side_b == pair.right) ||
                        (lex.side_a == pair.right && lex.side_b == pair.left);
    if (covers) {
      const auto lexicon = sampling::MarkerLexicon::load(lex.path, lex.side_a, lex.side_b);
      const auto& source = left ? *left : *right;
      const auto target = left ? pair.right : pair.left;
      const auto direction = source.background() == lex.side_a ? sampling::Direction::AToB
                                                               : sampling::Direction::BToA;
      auto inputs = sampling::build_paired_inputs(
          maybe_subsample(c, source), sampling::marker_transformer(lexicon, direction), target);
      if (!left) {
        for (auto& p : inputs) p = p.swapped();
      }
      return inputs;
    }
  }
  throw config_error("no pools or lexicon to build inputs for pair (" + pair.left + ", " +
                     pair.right + ")");
}

inline std::vector<sampling::PairedInputs> read_pairs(const fs::path& path) {
  std::vector<sampling::PairedInputs> out;
  io::for_each_jsonl(path, [&](const Json& j, std::size_t) {
    out.push_back(sampling::paired_inputs_from_json(j));
  });
  return out;
}

template <typename T, typename Key>
std::vector<std::pair<BackgroundPair, std::vector<T>>> group_by_pair(std::vector<T> items, Key key) {
  std::vector<std::pair<BackgroundPair, std::vector<T>>> groups;
  for (auto& item : items) {
    const auto pair = key(item);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == pair; });
    if (it == groups.end()) {
      groups.push_back({pair, {}});
      it = std::prev(groups.end());
    }
    it->second.push_back(std::move(item));
  }
  return groups;
}

inline void check_oriented(const config::RunConfig& c, const BackgroundPair& pair) {
  const auto expected = c.background_set().oriented(pair.left, pair.right);
  if (expected != pair || pair.left == pair.right) {
    throw validation_error("OrientationMismatch", "pair (" + pair.left + ", " + pair.right +
                                                      ") is not oriented by background order");
  }
}

inline std::string pool_hash(const config::RunConfig& c) {
  if (c.pools.empty()) return {};
  std::string all;
  for (const auto& label : c.background_set().labels()) {
    if (auto it = c.pools.find(label.id); it != c.pools.end()) {
      all += label.id + "\n" + io::read_file(it->second);
    }
  }
  return "fnv1a64:" + io::hash_hex(all);
}

}  // namespace detail

inline fs::path cmd_pair(const config::RunConfig& c, const Log& log = ignore_log) {
  std::map<std::string, sampling::SourcePool> pools;
  std::string out;
  std::size_t total = 0;
  for (const auto& pair : c.background_set().pairs()) {
    const auto inputs = detail::inputs_for_pair(c, pair, pools);
    for (const auto& p : inputs) out += io::to_jsonl_line(sampling::to_json(p));
    total += inputs.size();
    log("pair (" + pair.left + ", " + pair.right + "): " + std::to_string(inputs.size()) +
        " paired input(s)");
  }
  if (total == 0) throw validation_error("EmptySample", "no paired inputs were generated");
  const auto path = c.output_dir / kPairsFile;
  io::write_file(path, out);
  return path;
}

// --- collect -------------------------------------------------------------------------

inline fs::path cmd_collect(const config::RunConfig& c, const fs::path& pairs_file,
                            const Log& log = ignore_log) {
  auto skeletons = detail::read_pairs(pairs_file);
  if (skeletons.empty()) {
    throw validation_error("EmptySample", "'" + pairs_file.string() + "' has no paired inputs");
  }
  const auto backend = config::make_backend(c);
  backends::CollectOptions options{c.fail_fast, c.backend.concurrency};

  std::string sample_out;
  std::string manifest_out;
  std::vector<std::string> empty_pairs;
  auto groups = detail::group_by_pair(std::move(skeletons),
                                      [](const auto& s) { return s.background_pair(); });
  for (auto& [pair, group] : groups) {
    detail::check_oriented(c, pair);
    auto result = backends::collect_responses(group, *backend, options);
    for (const auto& e : result.manifest) manifest_out += io::to_jsonl_line(backends::to_json(e));
    if (result.dropped() > 0) {
      log("pair (" + pair.left + ", " + pair.right + "): dropped " +
          std::to_string(result.dropped()) + " of " + std::to_string(group.size()) + " item(s)");
    }
    if (!result.sample) {
      empty_pairs.push_back(pair.left + "/" + pair.right);
      continue;
    }
    const auto report = sampling::validate_pairing(*result.sample);
    if (!report.ok()) {
      const auto& v = report.violations.front();
      throw validation_error(v.kind, "pair '" + v.semantic_id + "': " + v.message + " (" +
                                         std::to_string(report.violations.size()) +
                                         " violation(s))");
    }
    for (const auto& obs : result.sample->observations()) {
      sample_out += io::to_jsonl_line(to_json(obs));
    }
  }
  io::write_file(c.output_dir / kManifestFile, manifest_out);
  if (!empty_pairs.empty()) {
    std::string names;
    for (const auto& p : empty_pairs) names += " " + p;
    throw backend_error("AllDropped", "every item was dropped for pair(s)" + names +
                                          "; see " + (c.output_dir / kManifestFile).string());
  }
  const auto path = c.output_dir / kSampleFile;
  io::write_file(path, sample_out);
  return path;
}

// --- score ----------------------------------------------------------------------------

inline std::vector<PairedSample> read_samples(const fs::path& path) {
  std::vector<PairedObservation> observations;
  io::for_each_jsonl(path, [&](const Json& j, std::size_t) {
    observations.push_back(paired_observation_from_json(j));
  });
  if (observations.empty()) throw validation_error("EmptySample", "'" + path.string() + "' is empty");
  std::vector<PairedSample> samples;
  auto groups = detail::group_by_pair(std::move(observations), [](const auto& o) {
    return BackgroundPair{o.left.background, o.right.background};
  });
  for (auto& [pair, obs] : groups) samples.emplace_back(pair, std::move(obs));
  return samples;
}

inline fs::path cmd_score(const config::RunConfig& c, const fs::path& sample_file,
                          const Log& log = ignore_log) {
  const auto spec = config::make_metric(c);
  std::string out;
  for (const auto& sample : read_samples(sample_file)) {
    detail::check_oriented(c, sample.background_pair());
    const auto report = sampling::validate_pairing(sample);
    if (!report.ok()) {
      const auto& v = report.violations.front();
      throw validation_error(v.kind, "pair '" + v.semantic_id + "': " + v.message);
    }
    const auto series = metrics::score_sample(sample, spec, c.backend.concurrency);
    out += io::to_jsonl_line(to_json(series));
    log("scored (" + sample.background_pair().left + ", " + sample.background_pair().right +
        "): n = " + std::to_string(series.values.size()));
  }
  const auto path = c.output_dir / kSeriesFile;
  io::write_file(path, out);
  return path;
}

// --- test -----------------------------------------------------------------------------

inline verdict::Provenance provenance(const config::RunConfig& c) {
  verdict::Provenance p;
  p.backend = config::make_backend(c)->describe();
  p.model = c.backend.model;
  p.metric = metrics::to_string(c.metric);
  if (c.metric == metrics::MetricKind::JudgedTextSimilarity) {
    p.metric += c.judge.kind == config::JudgeSettings::Kind::Jaccard
                    ? std::string(" (jaccard)")
                    : " (remote-judge:" + c.judge.client.endpoint + ")";
  }
  p.seed = c.seed;
  if (metrics::track_of(c.metric) == Track::Difference) {
    p.permutations = c.permutations;
    p.permutation_mode = stats::to_string(c.permutation_mode);
  } else {
    p.m0 = c.m0;
    p.tail = stats::to_string(c.tail);
  }
  if (c.lexicon) p.lexicon_hash = io::file_hash(c.lexicon->path);
  if (auto h = detail::pool_hash(c); !h.empty()) p.pool_hash = h;
  return p;
}

struct TestOutcome {
  MultiTestReport report;
  std::optional<verdict::AlignmentVerdict> alignment;
  fs::path report_path;
};

inline TestOutcome cmd_test(const config::RunConfig& c, const std::vector<fs::path>& series_files,
                            const Log& log = ignore_log) {
  std::vector<ScoreSeries> all;
  for (const auto& f : series_files) {
    io::for_each_jsonl(f, [&](const Json& j, std::size_t) { all.push_back(score_series_from_json(j)); });
  }
  std::optional<stats::SignTestParams> sign;
  if (c.m0) sign = stats::SignTestParams{*c.m0, c.tail};

  std::vector<TestResult> results;
  for (const auto& series : all) {
    detail::check_oriented(c, series.background_pair);
    stats::PermutationParams perm{c.permutations, c.stage_seed("test\x1f" + series.background_pair.key()),
                                  c.permutation_mode, 1};
    results.push_back(stats::run_pair_test(series, perm, sign));
  }
  auto report = stats::bonferroni_aggregate(results, c.background_set(), c.alpha);
  for (const auto& w : report.warnings) log("warning: " + w);

  TestOutcome outcome;
  const bool ip = verdict::decide_ip(report);
  if (c.ethics) outcome.alignment = verdict::alignment_verdict(ip, *c.ethics);
  if (!c.ethics) report.warnings.push_back("no ethics configuration; alignment not assessed");
  const auto rendered = verdict::render_report(report, outcome.alignment, c.ethics, provenance(c));
  outcome.report_path = c.output_dir / kReportFile;
  io::write_file(outcome.report_path, rendered.json.dump(2) + "\n");
  io::write_file(c.output_dir / kReportTextFile, rendered.text);
  outcome.report = std::move(report);
  return outcome;
}

inline TestOutcome cmd_audit(const config::RunConfig& c, const Log& log = ignore_log) {
  const auto pairs = cmd_pair(c, log);
  const auto sample = cmd_collect(c, pairs, log);
  const auto series = cmd_score(c, sample, log);
  return cmd_test(c, {series}, log);
}

// --- calibrate ------------------------------------------------------------------------------

struct RateEstimate {
  std::size_t rejections = 0;
  std::size_t replications = 0;
  double rate() const {
    return replications == 0 ? 0.0 : static_cast<double>(rejections) / static_cast<double>(replications);
  }
  // 95% Wilson score interval.
  std::pair<double, double> wilson95() const {
    if (replications == 0) return {0.0, 1.0};
    const double z = 1.959963984540054;
    const double nn = static_cast<double>(replications);
    const double p = rate();
    const double centre = (p + z * z / (2 * nn)) / (1 + z * z / nn);
    const double half = z / (1 + z * z / nn) * std::sqrt(p * (1 - p) / nn + z * z / (4 * nn * nn));
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
  }
};

inline Json to_json(const RateEstimate& r) {
  const auto [lo, hi] = r.wilson95();
  return Json{{"rejections", r.rejections}, {"replications", r.replications}, {"rate", r.rate()},
              {"wilson95", Json::array({lo, hi})}};
}

struct CalibrationSummary {
  RateEstimate permutation_type1;
  RateEstimate permutation_power;
  RateEstimate sign_type1;
};

namespace detail {

// One synthetic world: n paired interval observations through the mock
// backend, scored and tested exactly as an audit would.
inline bool permutation_world_rejects(const config::RunConfig& c, std::uint64_t world_seed,
                                      double effect) {
  const auto& cal = c.calibration;
  std::vector<sampling::PairedInputs> skeletons;
  skeletons.reserve(cal.n);
  for (std::size_t k = 0; k < cal.n; ++k) {
    const auto id = "cal-" + std::to_string(k);
    skeletons.push_back({id, "b0", "item " + std::to_string(k), "b1", "item " + std::to_string(k), {}});
  }
  backends::MockEffectConfig mock;
  mock.response_kind = ResponseKind::Interval;
  mock.sd = cal.sd;
  mock.noise_sd = cal.sd;
  mock.effect_delta = effect * cal.sd;
  mock.treated = "b1";
  mock.seed = rng::derive(world_seed, "mock");
  const auto collected = backends::collect_responses(skeletons, backends::MockBackend(mock));
  const auto series = metrics::score_sample(*collected.sample, {metrics::MetricKind::IntervalDifference, nullptr});
  stats::PermutationParams perm{c.permutations, rng::derive(world_seed, "perm"), c.permutation_mode, 1};
  return stats::permutation_test(series.values, perm).p_value <= c.alpha;
}

// Null similarity world: uniform on [M0 - w, M0 + w], median exactly M0.
inline bool sign_world_rejects(const config::RunConfig& c, std::uint64_t world_seed) {
  const auto& cal = c.calibration;
  const double w = std::min(cal.m0, 1.0 - cal.m0);
  auto engine = rng::make_engine(world_seed);
  std::vector<double> s(cal.n);
  for (auto& v : s) v = cal.m0 - w + 2.0 * w * rng::uniform01(engine);
  return stats::sign_test(s, {cal.m0, c.tail}).p_value <= c.alpha;
}

}  // namespace detail

inline CalibrationSummary run_calibration(const config::RunConfig& c) {
  const auto& cal = c.calibration;
  if (cal.replications == 0 || cal.power_replications == 0) {
    throw config_error("calibration replications must be >= 1");
  }
  if (cal.n < 2) throw config_error("calibration n must be >= 2");
  if (!(cal.sd > 0.0)) throw config_error("calibration sd must be > 0");
  if (!(cal.m0 > 0.0 && cal.m0 < 1.0)) throw config_error("calibration m0 must lie in (0, 1)");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw config_error("alpha must lie in (0, 1)");

  CalibrationSummary s;
  const auto null_seed = c.stage_seed("calibrate\x1fnull");
  const auto power_seed = c.stage_seed("calibrate\x1fpower");
  const auto sign_seed = c.stage_seed("calibrate\x1fsign");
  for (std::size_t r = 0; r < cal.replications; ++r) {
    s.permutation_type1.rejections += detail::permutation_world_rejects(c, rng::derive(null_seed, r), 0.0);
    s.sign_type1.rejections += detail::sign_world_rejects(c, rng::derive(sign_seed, r));
  }
  s.permutation_type1.replications = cal.replications;
  s.sign_type1.replications = cal.replications;
  for (std::size_t r = 0; r < cal.power_replications; ++r) {
    s.permutation_power.rejections +=
        detail::permutation_world_rejects(c, rng::derive(power_seed, r), cal.effect);
  }
  s.permutation_power.replications = cal.power_replications;
  return s;
}

inline fs::path cmd_calibrate(const config::RunConfig& c, const Log& log = ignore_log) {
  const auto s = run_calibration(c);
  const auto& cal = c.calibration;
  Json j{{"seed", c.seed},
         {"alpha", c.alpha},
         {"L", c.permutations},
         {"n", cal.n},
         {"sd", cal.sd},
         {"effect_in_sd", cal.effect},
         {"m0", cal.m0},
         {"permutation_type1", to_json(s.permutation_type1)},
         {"permutation_power", to_json(s.permutation_power)},
         {"sign_type1", to_json(s.sign_type1)}};
  const auto path = c.output_dir / kCalibrationFile;
  io::write_file(path, j.dump(2) + "\n");
  log("permutation type-I rate " + std::to_string(s.permutation_type1.rate()) + ", power " +
      std::to_string(s.permutation_power.rate()) + ", sign type-I rate " +
      std::to_string(s.sign_type1.rate()));
  return path;
}

}  // namespace ipprobe::pipeline
