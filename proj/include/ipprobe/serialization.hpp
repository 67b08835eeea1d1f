#pragma once

// JSON encodings for the core types. Field order is fixed (ordered_json)
// so that every artifact is byte-stable across runs.

#include <initializer_list>
#include <string>
#include <string_view>

#include "ipprobe/core.hpp"
#include "json.hpp"

namespace ipprobe {

using Json = nlohmann::ordered_json;

namespace json_detail {

inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view context) {
  if (!j.is_object()) {
    throw validation_error("ParseError", std::string(context) + ": expected a JSON object");
  }
  for (const auto& item : j.items()) {
    bool ok = false;
    for (auto key : allowed) ok = ok || item.key() == key;
    if (!ok) {
      throw validation_error("ParseError", std::string(context) + ": unknown key '" +
                                               item.key() + "'");
    }
  }
}

template <typename T>
T required(const Json& j, const char* key, std::string_view context) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw validation_error("ParseError",
                           std::string(context) + ": missing key '" + key + "'");
  }
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("ParseError", std::string(context) + ": key '" + key +
                                             "' has the wrong type (" + e.what() + ")");
  }
}

template <typename T>
std::optional<T> optional(const Json& j, const char* key, std::string_view context) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return required<T>(j, key, context);
}

}  // namespace json_detail

// --- BackgroundPair / labels -----------------------------------------------------

inline Json to_json(const BackgroundPair& p) { return Json::array({p.left, p.right}); }

inline BackgroundPair background_pair_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_string() || !j[1].is_string()) {
    throw validation_error("ParseError", "background_pair must be a two-element string array");
  }
  return {j[0].get<std::string>(), j[1].get<std::string>()};
}

inline Json to_json(const BackgroundSet& set) {
  Json arr = Json::array();
  for (const auto& l : set.labels()) {
    arr.push_back(Json{{"id", l.id}, {"description", l.description}});
  }
  return arr;
}

inline BackgroundSet background_set_from_json(const Json& j) {
  if (!j.is_array()) throw validation_error("ParseError", "backgrounds must be an array");
  std::vector<BackgroundLabel> labels;
  for (const auto& item : j) {
    json_detail::check_keys(item, {"id", "description"}, "background");
    labels.push_back({json_detail::required<std::string>(item, "id", "background"),
                      json_detail::optional<std::string>(item, "description", "background")
                          .value_or("")});
  }
  return BackgroundSet(std::move(labels));
}

// --- ResponseValue ---------------------------------------------------------------

inline Json to_json(const ResponseValue& v) {
  return std::visit(
      [](const auto& r) -> Json {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, IntervalResponse>) {
          return Json{{"kind", "interval"}, {"value", r.value}};
        } else if constexpr (std::is_same_v<T, ChoiceResponse>) {
          return Json{{"kind", "choice"}, {"option_id", r.option_id},
                      {"option_count", r.option_count}};
        } else if constexpr (std::is_same_v<T, ScalarResponse>) {
          return Json{{"kind", "scalar"}, {"value", r.value}, {"lo", r.lo}, {"hi", r.hi}};
        } else if constexpr (std::is_same_v<T, FreeTextResponse>) {
          return Json{{"kind", "free_text"}, {"text", r.text}};
        } else {
          return Json{{"kind", "binary"}, {"correct", r.correct}};
        }
      },
      v);
}

inline ResponseValue response_from_json(const Json& j) {
  using namespace json_detail;
  constexpr std::string_view ctx = "response";
  const auto kind = parse_response_kind(required<std::string>(j, "kind", ctx));
  ResponseValue out;
  switch (kind) {
    case ResponseKind::Interval:
      check_keys(j, {"kind", "value"}, ctx);
      out = IntervalResponse{required<double>(j, "value", ctx)};
      break;
    case ResponseKind::Choice:
      check_keys(j, {"kind", "option_id", "option_count"}, ctx);
      out = ChoiceResponse{required<std::string>(j, "option_id", ctx),
                           required<int>(j, "option_count", ctx)};
      break;
    case ResponseKind::Scalar:
      check_keys(j, {"kind", "value", "lo", "hi"}, ctx);
      out = ScalarResponse{required<double>(j, "value", ctx), required<double>(j, "lo", ctx),
                           required<double>(j, "hi", ctx)};
      break;
    case ResponseKind::FreeText:
      check_keys(j, {"kind", "text"}, ctx);
      out = FreeTextResponse{required<std::string>(j, "text", ctx)};
      break;
    case ResponseKind::Binary:
      check_keys(j, {"kind", "correct"}, ctx);
      out = BinaryResponse{required<int>(j, "correct", ctx)};
      break;
  }
  if (auto why = response_violation(out)) throw validation_error("InvalidResponse", *why);
  return out;
}

// --- observations ------------------------------------------------------------------

inline Json to_json(const Observation& o) {
  return Json{{"semantic_id", o.semantic_id},
              {"background", o.background},
              {"input_text", o.input_text},
              {"response", to_json(o.response)}};
}

inline Observation observation_from_json(const Json& j) {
  using namespace json_detail;
  constexpr std::string_view ctx = "observation";
  check_keys(j, {"semantic_id", "background", "input_text", "response"}, ctx);
  Observation o{required<std::string>(j, "semantic_id", ctx),
                required<std::string>(j, "background", ctx),
                required<std::string>(j, "input_text", ctx),
                response_from_json(required<Json>(j, "response", ctx))};
  if (o.semantic_id.empty() || o.input_text.empty()) {
    throw validation_error("ParseError", "observation requires semantic_id and input_text");
  }
  return o;
}

inline Json to_json(const PairedObservation& p) {
  return Json{{"semantic_id", p.semantic_id}, {"left", to_json(p.left)},
              {"right", to_json(p.right)}};
}

inline PairedObservation paired_observation_from_json(const Json& j) {
  using namespace json_detail;
  constexpr std::string_view ctx = "paired observation";
  check_keys(j, {"semantic_id", "left", "right"}, ctx);
  return {required<std::string>(j, "semantic_id", ctx),
          observation_from_json(required<Json>(j, "left", ctx)),
          observation_from_json(required<Json>(j, "right", ctx))};
}

// --- series / results ------------------------------------------------------------

inline Json to_json(const ScoreSeries& s) {
  return Json{{"track", to_string(s.track)},
              {"background_pair", to_json(s.background_pair)},
              {"values", s.values}};
}

inline ScoreSeries score_series_from_json(const Json& j) {
  using namespace json_detail;
  constexpr std::string_view ctx = "score series";
  check_keys(j, {"track", "background_pair", "values"}, ctx);
  const auto track = required<std::string>(j, "track", ctx);
  ScoreSeries s;
  if (track == "difference") {
    s.track = Track::Difference;
  } else if (track == "similarity") {
    s.track = Track::Similarity;
  } else {
    throw validation_error("ParseError", "unknown track '" + track + "'");
  }
  s.background_pair = background_pair_from_json(required<Json>(j, "background_pair", ctx));
  s.values = required<std::vector<double>>(j, "values", ctx);
  s.validate();
  return s;
}

inline Json to_json(const TestParams& p) {
  Json j{{"n", p.n}};
  if (p.permutations) j["permutations"] = *p.permutations;
  if (p.mode) j["mode"] = *p.mode;
  if (p.m0) j["m0"] = *p.m0;
  if (p.tail) j["tail"] = *p.tail;
  return j;
}

inline TestParams test_params_from_json(const Json& j) {
  using namespace json_detail;
  constexpr std::string_view ctx = "test params";
  check_keys(j, {"n", "permutations", "mode", "m0", "tail"}, ctx);
  return {required<std::size_t>(j, "n", ctx), optional<std::size_t>(j, "permutations", ctx),
          optional<std::string>(j, "mode", ctx), optional<double>(j, "m0", ctx),
          optional<std::string>(j, "tail", ctx)};
}

inline Json to_json(const TestResult& r) {
  Json j{{"background_pair", to_json(r.background_pair)},
         {"method", to_string(r.method)},
         {"statistic", r.statistic},
         {"p_value", r.p_value},
         {"series_mean", r.series_mean},
         {"params", to_json(r.params)}};
  j["seed"] = r.seed ? Json(*r.seed) : Json(nullptr);
  return j;
}

inline TestResult test_result_from_json(const Json& j) {
  using namespace json_detail;
  constexpr std::string_view ctx = "test result";
  TestResult r;
  r.background_pair = background_pair_from_json(required<Json>(j, "background_pair", ctx));
  const auto method = required<std::string>(j, "method", ctx);
  if (method == "permutation") {
    r.method = TestMethod::Permutation;
  } else if (method == "sign") {
    r.method = TestMethod::Sign;
  } else {
    throw validation_error("ParseError", "unknown test method '" + method + "'");
  }
  r.statistic = required<double>(j, "statistic", ctx);
  r.p_value = required<double>(j, "p_value", ctx);
  if (!(r.p_value >= 0.0 && r.p_value <= 1.0)) {
    throw validation_error("ParseError", "p_value outside [0, 1]");
  }
  r.series_mean = required<double>(j, "series_mean", ctx);
  r.params = test_params_from_json(required<Json>(j, "params", ctx));
  r.seed = optional<std::uint64_t>(j, "seed", ctx);
  return r;
}

}  // namespace ipprobe
