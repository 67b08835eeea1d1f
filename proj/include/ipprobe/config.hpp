#pragma once

// Run configuration: one declarative JSON file plus flag overrides.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "ipprobe/backends.hpp"
#include "ipprobe/io.hpp"
#include "ipprobe/metrics.hpp"
#include "ipprobe/remote.hpp"
#include "ipprobe/rng.hpp"
#include "ipprobe/serialization.hpp"
#include "ipprobe/stats.hpp"
#include "ipprobe/verdict.hpp"

namespace ipprobe::config {

struct LexiconRef {
  std::filesystem::path path;
  std::string side_a;
  std::string side_b;
};

struct RemoteBackendSettings {
  remote::ClientConfig client;
  std::string request_template = "{input_text}";
  double lo = 0.0;
  double hi = 1.0;
  int option_count = 4;
};

struct BackendSettings {
  enum class Kind { Mock, Remote } kind = Kind::Mock;
  backends::MockEffectConfig mock;  // seed is filled in from the root seed
  RemoteBackendSettings remote;
  ResponseKind response_kind = ResponseKind::Interval;
  std::size_t concurrency = 1;
  std::string model;
};

struct JudgeSettings {
  enum class Kind { Jaccard, Remote } kind = Kind::Jaccard;
  remote::ClientConfig client;
  std::string request_template;
  double native_lo = 0.0;
  double native_hi = 1.0;
  double tolerance = 0.0;
};

struct CalibrationSettings {
  std::size_t replications = 500;        // null world, each track
  std::size_t power_replications = 200;  // effect world
  std::size_t n = 100;
  double sd = 1.0;
  double effect = 1.0;  // in units of sd
  double m0 = 0.9;
};

struct RunConfig {
  std::filesystem::path base_dir;
  std::optional<BackgroundSet> backgrounds;
  std::map<std::string, std::filesystem::path> pools;  // background id -> pool file
  std::optional<LexiconRef> lexicon;
  BackendSettings backend;
  metrics::MetricKind metric = metrics::MetricKind::IntervalDifference;
  JudgeSettings judge;
  double alpha = 0.05;
  std::size_t permutations = 10000;
  stats::PermutationMode permutation_mode = stats::PermutationMode::MonteCarlo;
  std::optional<double> m0;
  stats::Tail tail = stats::Tail::Inclusive;
  std::uint64_t seed = 0;
  std::optional<std::size_t> subsample;
  bool fail_fast = false;
  std::filesystem::path output_dir = "out";
  std::optional<verdict::EthicsConfig> ethics;
  CalibrationSettings calibration;

  const BackgroundSet& background_set() const {
    if (!backgrounds) throw config_error("config has no backgrounds");
    return *backgrounds;
  }

  // Per-stage seed: stage name hashed with the root seed.
  std::uint64_t stage_seed(std::string_view stage) const { return rng::derive(seed, stage); }

  void validate() const {
    const auto& set = background_set();
    if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("alpha must lie in (0, 1)");
    if (permutation_mode == stats::PermutationMode::MonteCarlo &&
        permutations < stats::kMinPermutations) {
      throw config_error("permutations must be >= 1000 in montecarlo mode");
    }
    if (m0) stats::SignTestParams{*m0, tail}.validate();
    if (metrics::track_of(metric) == Track::Similarity && !m0) {
      throw config_error("metric " + std::string(metrics::to_string(metric)) +
                         " is similarity-track; M0 is required (config m0 or --m0)");
    }
    if (metrics::expected_response(metric) != backend.response_kind) {
      throw config_error(std::string("metric ") + metrics::to_string(metric) +
                         " does not match backend response kind " +
                         to_string(backend.response_kind));
    }
    for (const auto& [id, path] : pools) {
      if (!set.contains(id)) throw config_error("pool for unknown background '" + id + "'");
    }
    if (lexicon && (!set.contains(lexicon->side_a) || !set.contains(lexicon->side_b))) {
      throw config_error("lexicon sides must be configured backgrounds");
    }
    if (backend.kind == BackendSettings::Kind::Mock && !backend.mock.treated.empty() &&
        !set.contains(backend.mock.treated)) {
      throw config_error("mock treated background '" + backend.mock.treated + "' is not configured");
    }
    if (backend.kind == BackendSettings::Kind::Mock) backend.mock.validate();
    if (ethics) ethics->validate();
  }
};

namespace detail {

inline std::filesystem::path existing_path(const std::filesystem::path& base, const std::string& p,
                                           const std::string& what) {
  std::filesystem::path path(p);
  if (path.is_relative()) path = base / path;
  if (!std::filesystem::exists(path)) {
    throw config_error(what + " '" + path.string() + "' does not exist");
  }
  return path;
}

inline remote::ClientConfig client_from_json(const Json& j, std::string_view ctx) {
  using namespace json_detail;
  remote::ClientConfig c;
  c.endpoint = required<std::string>(j, "endpoint", ctx);
  c.token_env = optional<std::string>(j, "token_env", ctx).value_or(c.token_env);
  c.timeout_s = optional<double>(j, "timeout_s", ctx).value_or(c.timeout_s);
  c.max_retries = optional<int>(j, "max_retries", ctx).value_or(c.max_retries);
  c.backoff_ms = optional<int>(j, "backoff_ms", ctx).value_or(c.backoff_ms);
  c.validate();
  return c;
}

inline BackendSettings backend_from_json(const Json& j) {
  using namespace json_detail;
  constexpr std::string_view ctx = "backend";
  BackendSettings b;
  const auto kind = required<std::string>(j, "kind", ctx);
  b.response_kind = parse_response_kind(required<std::string>(j, "response_kind", ctx));
  b.concurrency = optional<std::size_t>(j, "concurrency", ctx).value_or(1);
  b.model = optional<std::string>(j, "model", ctx).value_or("");
  if (kind == "mock") {
    check_keys(j, {"kind", "response_kind", "concurrency", "model", "mean", "sd", "noise_sd", "lo",
                   "hi", "q0", "option_count", "text", "treated_text", "effect_delta", "treated"},
               ctx);
    b.kind = BackendSettings::Kind::Mock;
    auto& m = b.mock;
    m.response_kind = b.response_kind;
    m.mean = optional<double>(j, "mean", ctx).value_or(m.mean);
    m.sd = optional<double>(j, "sd", ctx).value_or(m.sd);
    m.noise_sd = optional<double>(j, "noise_sd", ctx).value_or(m.noise_sd);
    m.lo = optional<double>(j, "lo", ctx).value_or(m.lo);
    m.hi = optional<double>(j, "hi", ctx).value_or(m.hi);
    m.q0 = optional<double>(j, "q0", ctx).value_or(m.q0);
    m.option_count = optional<int>(j, "option_count", ctx).value_or(m.option_count);
    m.text = optional<std::string>(j, "text", ctx).value_or(m.text);
    m.treated_text = optional<std::string>(j, "treated_text", ctx).value_or(m.treated_text);
    m.effect_delta = optional<double>(j, "effect_delta", ctx).value_or(m.effect_delta);
    m.treated = optional<std::string>(j, "treated", ctx).value_or("");
  } else if (kind == "remote") {
    check_keys(j, {"kind", "response_kind", "concurrency", "model", "endpoint", "token_env",
                   "timeout_s", "max_retries", "backoff_ms", "template", "lo", "hi",
                   "option_count"},
               ctx);
    b.kind = BackendSettings::Kind::Remote;
    b.remote.client = client_from_json(j, ctx);
    b.remote.request_template =
        optional<std::string>(j, "template", ctx).value_or(b.remote.request_template);
    b.remote.lo = optional<double>(j, "lo", ctx).value_or(b.remote.lo);
    b.remote.hi = optional<double>(j, "hi", ctx).value_or(b.remote.hi);
    b.remote.option_count = optional<int>(j, "option_count", ctx).value_or(b.remote.option_count);
  } else {
    throw config_error("backend.kind must be 'mock' or 'remote'");
  }
  if (b.concurrency == 0) throw config_error("backend.concurrency must be >= 1");
  return b;
}

inline JudgeSettings judge_from_json(const Json& j) {
  using namespace json_detail;
  constexpr std::string_view ctx = "metric.judge";
  JudgeSettings s;
  const auto kind = required<std::string>(j, "kind", ctx);
  if (kind == "jaccard") {
    check_keys(j, {"kind"}, ctx);
    s.kind = JudgeSettings::Kind::Jaccard;
  } else if (kind == "remote") {
    check_keys(j, {"kind", "endpoint", "token_env", "timeout_s", "max_retries", "backoff_ms",
                   "template", "native_lo", "native_hi", "tolerance"},
               ctx);
    s.kind = JudgeSettings::Kind::Remote;
    s.client = client_from_json(j, ctx);
    s.request_template = required<std::string>(j, "template", ctx);
    s.native_lo = required<double>(j, "native_lo", ctx);
    s.native_hi = required<double>(j, "native_hi", ctx);
    s.tolerance = optional<double>(j, "tolerance", ctx).value_or(0.0);
  } else {
    throw config_error("metric.judge.kind must be 'jaccard' or 'remote'");
  }
  return s;
}

}  // namespace detail

// Parses a config document. Unknown keys are rejected; relative paths
// resolve against `base_dir` and must exist.
inline RunConfig parse(const Json& j, const std::filesystem::path& base_dir) {
  using namespace json_detail;
  constexpr std::string_view ctx = "config";
  try {
    check_keys(j, {"backgrounds", "pools", "lexicon", "backend", "metric", "alpha", "permutations",
                   "permutation_mode", "m0", "tail", "seed", "subsample", "fail_fast",
                   "output_dir", "ethics", "calibration"},
               ctx);
    RunConfig c;
    c.base_dir = base_dir;
    c.backgrounds = background_set_from_json(required<Json>(j, "backgrounds", ctx));
    if (auto pools = optional<Json>(j, "pools", ctx)) {
      if (!pools->is_object()) throw config_error("pools must map background ids to files");
      for (const auto& item : pools->items()) {
        c.pools[item.key()] = detail::existing_path(base_dir, item.value().get<std::string>(), "pool");
      }
    }
    if (auto lex = optional<Json>(j, "lexicon", ctx)) {
      check_keys(*lex, {"path", "side_a", "side_b"}, "lexicon");
      c.lexicon = LexiconRef{
          detail::existing_path(base_dir, required<std::string>(*lex, "path", "lexicon"), "lexicon"),
          required<std::string>(*lex, "side_a", "lexicon"),
          required<std::string>(*lex, "side_b", "lexicon")};
    }
    c.backend = detail::backend_from_json(required<Json>(j, "backend", ctx));
    const auto metric = required<Json>(j, "metric", ctx);
    check_keys(metric, {"kind", "judge"}, "metric");
    c.metric = metrics::parse_metric_kind(required<std::string>(metric, "kind", "metric"));
    if (auto judge = optional<Json>(metric, "judge", "metric")) c.judge = detail::judge_from_json(*judge);
    c.alpha = optional<double>(j, "alpha", ctx).value_or(c.alpha);
    c.permutations = optional<std::size_t>(j, "permutations", ctx).value_or(c.permutations);
    if (auto mode = optional<std::string>(j, "permutation_mode", ctx)) {
      c.permutation_mode = stats::parse_permutation_mode(*mode);
    }
    c.m0 = optional<double>(j, "m0", ctx);
    if (auto tail = optional<std::string>(j, "tail", ctx)) c.tail = stats::parse_tail(*tail);
    c.seed = optional<std::uint64_t>(j, "seed", ctx).value_or(0);
    c.subsample = optional<std::size_t>(j, "subsample", ctx);
    c.fail_fast = optional<bool>(j, "fail_fast", ctx).value_or(false);
    if (auto out = optional<std::string>(j, "output_dir", ctx)) {
      const std::filesystem::path out_path(*out);
      c.output_dir = out_path.is_relative() ? base_dir / out_path : out_path;
    } else {
      c.output_dir = base_dir / "out";
    }
    if (auto ethics = optional<Json>(j, "ethics", ctx)) {
      check_keys(*ethics, {"application_id", "ip_is_ethical", "rationale"}, "ethics");
      c.ethics = verdict::EthicsConfig{required<std::string>(*ethics, "application_id", "ethics"),
                                       required<bool>(*ethics, "ip_is_ethical", "ethics"),
                                       required<std::string>(*ethics, "rationale", "ethics")};
    }
    if (auto cal = optional<Json>(j, "calibration", ctx)) {
      check_keys(*cal, {"replications", "power_replications", "n", "sd", "effect", "m0"},
                 "calibration");
      auto& s = c.calibration;
      s.replications = optional<std::size_t>(*cal, "replications", "calibration").value_or(s.replications);
      s.power_replications =
          optional<std::size_t>(*cal, "power_replications", "calibration").value_or(s.power_replications);
      s.n = optional<std::size_t>(*cal, "n", "calibration").value_or(s.n);
      s.sd = optional<double>(*cal, "sd", "calibration").value_or(s.sd);
      s.effect = optional<double>(*cal, "effect", "calibration").value_or(s.effect);
      s.m0 = optional<double>(*cal, "m0", "calibration").value_or(s.m0);
    }
    return c;
  } catch (const Error& e) {
    // Every load problem is a configuration error.
    throw config_error(e.message());
  }
}

inline RunConfig load(const std::filesystem::path& path) {
  const auto text = io::read_file(path);
  const auto j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw config_error("'" + path.string() + "' is not valid JSON");
  return parse(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

// --- factories ----------------------------------------------------------------------

inline std::unique_ptr<backends::Backend> make_backend(const RunConfig& c) {
  if (c.backend.kind == BackendSettings::Kind::Mock) {
    auto mock = c.backend.mock;
    mock.seed = c.stage_seed("collect");
    return std::make_unique<backends::MockBackend>(mock);
  }
  remote::ResponseParser parser;
  parser.kind = c.backend.response_kind;
  parser.lo = c.backend.remote.lo;
  parser.hi = c.backend.remote.hi;
  parser.option_count = c.backend.remote.option_count;
  return std::make_unique<remote::RemoteBackend>(c.backend.remote.client,
                                                 c.backend.remote.request_template, parser);
}

inline metrics::MetricSpec make_metric(const RunConfig& c) {
  metrics::MetricSpec spec{c.metric, nullptr};
  if (c.metric == metrics::MetricKind::JudgedTextSimilarity) {
    if (c.judge.kind == JudgeSettings::Kind::Jaccard) {
      spec.judge = std::make_shared<metrics::JaccardJudge>();
    } else {
      spec.judge = std::make_shared<remote::RemoteJudge>(c.judge.client, c.judge.request_template,
                                                         c.judge.native_lo, c.judge.native_hi,
                                                         c.judge.tolerance);
    }
  }
  return spec;
}

}  // namespace ipprobe::config
