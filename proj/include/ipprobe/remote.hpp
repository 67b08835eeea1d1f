#pragma once

// Generic remote text-generation service client. Requests are a POST of
// {"input": <rendered template>}; the reply body is either a JSON object
// with a string "text" field or plain text.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <thread>

#include "httplib.h"
#include "ipprobe/backends.hpp"
#include "ipprobe/core.hpp"
#include "ipprobe/metrics.hpp"
#include "ipprobe/serialization.hpp"

namespace ipprobe::remote {

class RemoteError : public Error {
 public:
  RemoteError(int status, std::string body, const std::string& what)
      : Error(ErrorCategory::Backend, "RemoteError", what), status_(status), body_(std::move(body)) {}
  // HTTP status, or -1 when no response was received.
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

inline Error parse_error(const std::string& what) {
  return backend_error("ParseError", what);
}

struct Endpoint {
  std::string scheme_host_port;  // "http://host:port"
  std::string path;              // "/v1/generate"
};

inline Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw config_error("endpoint '" + url + "' has no scheme");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw config_error("endpoint scheme must be http or https");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

// Replaces every `{name}` slot. Unknown slots are left untouched.
inline std::string render_template(std::string tmpl,
                                   std::initializer_list<std::pair<std::string, std::string>> slots) {
  for (const auto& [name, value] : slots) {
    const std::string key = "{" + name + "}";
    for (auto pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key, pos + value.size())) {
      tmpl.replace(pos, key.size(), value);
    }
  }
  return tmpl;
}

struct ClientConfig {
  std::string endpoint;
  std::string token_env = "IP_PROBE_API_TOKEN";
  double timeout_s = 60.0;
  int max_retries = 3;
  int backoff_ms = 500;  // doubled after every failed attempt

  void validate() const {
    split_url(endpoint);
    if (!(timeout_s > 0.0)) throw config_error("remote timeout must be > 0");
    if (max_retries < 0) throw config_error("remote max_retries must be >= 0");
    if (backoff_ms < 0) throw config_error("remote backoff_ms must be >= 0");
  }
};

class Client {
 public:
  explicit Client(ClientConfig config) : config_(std::move(config)) {
    config_.validate();
    endpoint_ = split_url(config_.endpoint);
  }

  // POSTs the payload and returns the reply text, retrying non-2xx replies
  // and transport failures with exponential backoff.
  std::string post(const std::string& input) const {
    const std::string body = Json{{"input", input}}.dump();
    int status = -1;
    std::string last_body;
    int delay_ms = config_.backoff_ms;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0 && delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        delay_ms *= 2;
      }
      httplib::Client cli(endpoint_.scheme_host_port);
      const auto usec = static_cast<long>(config_.timeout_s * 1e6);
      cli.set_connection_timeout(std::chrono::microseconds(usec));
      cli.set_read_timeout(std::chrono::microseconds(usec));
      cli.set_write_timeout(std::chrono::microseconds(usec));
      httplib::Headers headers;
      if (const char* token = std::getenv(config_.token_env.c_str()); token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
      }
      auto res = cli.Post(endpoint_.path, headers, body, "application/json");
      if (!res) {
        status = -1;
        last_body = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 200 && res->status < 300) return extract_text(res->body);
      status = res->status;
      last_body = res->body;
    }
    throw RemoteError(status, last_body,
                      "request to " + config_.endpoint + " failed after " +
                          std::to_string(config_.max_retries + 1) + " attempt(s) (status " +
                          std::to_string(status) + "): " + last_body.substr(0, 200));
  }

  const ClientConfig& config() const { return config_; }

  static std::string extract_text(const std::string& body) {
    const auto j = Json::parse(body, nullptr, false);
    if (j.is_object()) {
      if (auto it = j.find("text"); it != j.end() && it->is_string()) return it->get<std::string>();
    }
    return body;
  }

 private:
  ClientConfig config_;
  Endpoint endpoint_;
};

// --- reply parsing -------------------------------------------------------------------

inline std::optional<double> first_number(const std::string& text) {
  static const std::regex number(R"([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)");
  std::smatch m;
  if (!std::regex_search(text, m, number)) return std::nullopt;
  return std::stod(m.str());
}

// First "Option N" (or "Option C"); letters are upper-cased.
inline std::optional<std::string> first_option(const std::string& text) {
  static const std::regex option(R"(\boption(?![A-Za-z])\s*[:#]?\s*([A-Za-z]\b|\d+))", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(text, m, option)) return std::nullopt;
  auto id = m[1].str();
  for (auto& c : id) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return id;
}

// Correctness rating r: reply -> {0, 1}.
using RatingFunction = std::function<int(const std::string& reply, const backends::QueryContext&)>;

// Grades an "Option N" reply against the item's gold answer.
inline int gold_option_rating(const std::string& reply, const backends::QueryContext& ctx) {
  if (!ctx.gold) throw parse_error("item '" + ctx.semantic_id + "' has no gold answer to rate against");
  const auto picked = first_option(reply);
  if (!picked) throw parse_error("no 'Option N' in reply for '" + ctx.semantic_id + "'");
  std::string gold = *ctx.gold;
  for (auto& c : gold) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return *picked == gold ? 1 : 0;
}

struct ResponseParser {
  ResponseKind kind = ResponseKind::FreeText;
  double lo = 0.0;
  double hi = 1.0;
  int option_count = 4;
  RatingFunction rating = gold_option_rating;

  ResponseValue parse(const std::string& reply, const backends::QueryContext& ctx) const {
    switch (kind) {
      case ResponseKind::Interval:
      case ResponseKind::Scalar: {
        const auto v = first_number(reply);
        if (!v || !std::isfinite(*v)) throw parse_error("no number in reply for '" + ctx.semantic_id + "'");
        if (kind == ResponseKind::Interval) return IntervalResponse{*v};
        if (*v < lo || *v > hi) {
          throw parse_error("scalar reply " + std::to_string(*v) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        return ScalarResponse{*v, lo, hi};
      }
      case ResponseKind::Choice: {
        const auto id = first_option(reply);
        if (!id || !option_id_in_range(*id, option_count)) {
          throw parse_error("no valid 'Option N' in reply for '" + ctx.semantic_id + "'");
        }
        return ChoiceResponse{*id, option_count};
      }
      case ResponseKind::FreeText:
        return FreeTextResponse{reply};
      case ResponseKind::Binary:
        return BinaryResponse{rating(reply, ctx) != 0 ? 1 : 0};
    }
    throw parse_error("unhandled response kind");
  }
};

class RemoteBackend final : public backends::Backend {
 public:
  // `request_template` must contain the `{input_text}` slot.
  RemoteBackend(ClientConfig client, std::string request_template, ResponseParser parser)
      : client_(std::move(client)), template_(std::move(request_template)), parser_(std::move(parser)) {
    if (template_.find("{input_text}") == std::string::npos) {
      throw config_error("request template lacks the {input_text} slot");
    }
  }

  ResponseValue query(const backends::QueryContext& ctx) const override {
    const auto reply = client_.post(render_template(template_, {{"input_text", ctx.input_text}}));
    return parser_.parse(reply, ctx);
  }

  ResponseKind response_kind() const override { return parser_.kind; }

  std::string describe() const override {
    return std::string("remote:") + client_.config().endpoint + ":" + to_string(parser_.kind);
  }

 private:
  Client client_;
  std::string template_;
  ResponseParser parser_;
};

// LLM-style similarity judge behind the same client; the template has
// `{text_a}` and `{text_b}` slots and the first number in the reply is the
// raw score on [native_lo, native_hi].
class RemoteJudge final : public metrics::SimilarityJudge {
 public:
  RemoteJudge(ClientConfig client, std::string request_template, double native_lo, double native_hi,
              double tolerance)
      : client_(std::move(client)),
        template_(std::move(request_template)),
        lo_(native_lo),
        hi_(native_hi),
        tolerance_(tolerance) {
    if (template_.find("{text_a}") == std::string::npos ||
        template_.find("{text_b}") == std::string::npos) {
      throw config_error("judge template needs both {text_a} and {text_b} slots");
    }
    if (!(lo_ < hi_)) throw config_error("judge native range requires native_lo < native_hi");
    if (!(tolerance_ >= 0.0)) throw config_error("judge tolerance must be >= 0");
  }

  metrics::JudgeScore judge(const std::string& a, const std::string& b) const override {
    const auto reply = client_.post(render_template(template_, {{"text_a", a}, {"text_b", b}}));
    const auto raw = first_number(reply);
    if (!raw) throw backend_error("JudgeError", "judge reply has no score: " + reply.substr(0, 200));
    return {*raw, lo_, hi_, tolerance_};
  }

  std::string describe() const override { return "remote-judge:" + client_.config().endpoint; }

 private:
  Client client_;
  std::string template_;
  double lo_;
  double hi_;
  double tolerance_;
};

}  // namespace ipprobe::remote
