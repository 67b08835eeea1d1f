#pragma once

// Paired-input generation: source pools, culture-marker style transfer,
// and the structural checks a collected sample must pass.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ipprobe/core.hpp"
#include "ipprobe/io.hpp"
#include "ipprobe/rng.hpp"
#include "ipprobe/serialization.hpp"

namespace ipprobe::sampling {

namespace detail {

inline char lower(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}
inline char upper(char c) {
  return static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
}
inline std::string lowered(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = lower(c);
  return out;
}
// Non-ASCII bytes count as word characters so UTF-8 letters never split a word.
inline bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}
inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Carries the case pattern of `source` over to `target`: ALL CAPS stays
// all caps, a leading capital stays a leading capital, otherwise the
// lexicon spelling is used verbatim.
inline std::string adapt_case(std::string_view source, std::string_view target) {
  int letters = 0;
  int uppers = 0;
  for (char c : source) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      ++letters;
      if (std::isupper(static_cast<unsigned char>(c))) ++uppers;
    }
  }
  std::string out(target);
  if (letters >= 2 && uppers == letters) {
    for (auto& c : out) c = upper(c);
  } else if (!source.empty() && std::isupper(static_cast<unsigned char>(source.front()))) {
    for (auto& c : out) {
      if (std::isalpha(static_cast<unsigned char>(c))) {
        c = upper(c);
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

// --- lexicon -------------------------------------------------------------------

struct MarkerEntry {
  std::string form_a;
  std::string form_b;
  bool operator==(const MarkerEntry&) const = default;
};

enum class Direction { AToB, BToA };

class MarkerLexicon {
 public:
  MarkerLexicon(std::vector<MarkerEntry> entries, std::string side_a, std::string side_b)
      : entries_(std::move(entries)), side_a_(std::move(side_a)), side_b_(std::move(side_b)) {
    if (entries_.empty()) throw validation_error("InvalidLexicon", "lexicon has no entries");
    if (side_a_.empty() || side_b_.empty() || side_a_ == side_b_) {
      throw validation_error("InvalidLexicon", "lexicon sides must be two distinct backgrounds");
    }
    std::set<std::string> a_forms;
    std::set<std::string> b_forms;
    for (const auto& e : entries_) {
      if (e.form_a.empty() || e.form_b.empty()) {
        throw validation_error("InvalidLexicon", "empty marker form");
      }
      const auto a = detail::lowered(e.form_a);
      const auto b = detail::lowered(e.form_b);
      if (!a_forms.insert(a).second) {
        throw validation_error("InvalidLexicon", "form '" + e.form_a + "' listed twice on side a");
      }
      if (!b_forms.insert(b).second) {
        throw validation_error("InvalidLexicon", "form '" + e.form_b + "' listed twice on side b");
      }
    }
    for (const auto& a : a_forms) {
      if (b_forms.count(a) != 0) {
        throw validation_error("InvalidLexicon", "form '" + a + "' appears on both sides");
      }
    }
  }

  // Two-column TSV, `form_a<TAB>form_b`; '#' lines and blank lines skipped.
  static MarkerLexicon from_tsv(std::istream& in, std::string side_a, std::string side_b,
                                std::string_view source_name = "lexicon") {
    std::vector<MarkerEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto trimmed = detail::trim(line);
      if (trimmed.empty() || trimmed.front() == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
        throw validation_error("InvalidLexicon", std::string(source_name) + ":" +
                                                     std::to_string(line_no) +
                                                     ": expected exactly two tab-separated columns");
      }
      entries.push_back(
          {detail::trim(line.substr(0, tab)), detail::trim(line.substr(tab + 1))});
    }
    return MarkerLexicon(std::move(entries), std::move(side_a), std::move(side_b));
  }

  static MarkerLexicon load(const std::filesystem::path& path, std::string side_a,
                            std::string side_b) {
    std::istringstream in(io::read_file(path));
    return from_tsv(in, std::move(side_a), std::move(side_b), path.string());
  }

  const std::vector<MarkerEntry>& entries() const { return entries_; }
  const std::string& side_a() const { return side_a_; }
  const std::string& side_b() const { return side_b_; }

 private:
  std::vector<MarkerEntry> entries_;
  std::string side_a_;
  std::string side_b_;
};

// --- style transfer ---------------------------------------------------------------

struct Substitution {
  std::size_t position = 0;  // byte offset in the original text
  std::string from;
  std::string to;
  bool operator==(const Substitution&) const = default;
};

struct TransferRecord {
  std::string original;
  std::string transferred;
  std::vector<Substitution> substitutions;
};

// Replays a substitution list; positions must be ascending and non-overlapping.
inline std::string apply_substitutions(std::string_view original,
                                       const std::vector<Substitution>& subs) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto& s : subs) {
    if (s.position < cursor || original.substr(s.position, s.from.size()) != s.from) {
      throw validation_error("InvalidTransferRecord",
                             "substitution at " + std::to_string(s.position) +
                                 " does not match the original text");
    }
    out.append(original.substr(cursor, s.position - cursor));
    out.append(s.to);
    cursor = s.position + s.from.size();
  }
  out.append(original.substr(cursor));
  return out;
}

inline TransferRecord marker_style_transfer(std::string_view text, const MarkerLexicon& lexicon,
                                            Direction direction) {
  struct Candidate {
    std::string source;  // lowercased
    const std::string* target;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(lexicon.entries().size());
  for (const auto& e : lexicon.entries()) {
    const bool forward = direction == Direction::AToB;
    candidates.push_back({detail::lowered(forward ? e.form_a : e.form_b),
                          forward ? &e.form_b : &e.form_a});
  }
  // Longest match first, so "football field" wins over "football".
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& x, const auto& y) {
    return x.source.size() > y.source.size();
  });

  TransferRecord record{std::string(text), {}, {}};
  std::string& out = record.transferred;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const bool at_word_start = i == 0 || !detail::is_word_byte(text[i - 1]);
    const Candidate* hit = nullptr;
    if (at_word_start) {
      for (const auto& c : candidates) {
        const auto len = c.source.size();
        if (i + len > text.size()) continue;
        if (i + len < text.size() && detail::is_word_byte(text[i + len])) continue;
        bool equal = true;
        for (std::size_t k = 0; k < len && equal; ++k) {
          equal = detail::lower(text[i + k]) == c.source[k];
        }
        if (equal) {
          hit = &c;
          break;
        }
      }
    }
    if (hit == nullptr) {
      out.push_back(text[i]);
      ++i;
      continue;
    }
    const auto matched = text.substr(i, hit->source.size());
    auto replacement = detail::adapt_case(matched, *hit->target);
    record.substitutions.push_back({i, std::string(matched), replacement});
    out.append(replacement);
    i += hit->source.size();
  }
  return record;
}

// --- pools and paired inputs ---------------------------------------------------------

struct PoolItem {
  std::string semantic_id;
  std::string background;
  std::string input_text;
  std::optional<std::string> gold;  // reference answer for correctness rating
  bool operator==(const PoolItem&) const = default;
};

class SourcePool {
 public:
  SourcePool(std::string background, std::vector<PoolItem> items)
      : background_(std::move(background)), items_(std::move(items)) {
    if (background_.empty()) throw validation_error("InvalidPool", "pool background is empty");
    std::set<std::string> ids;
    for (const auto& item : items_) {
      if (item.semantic_id.empty() || item.input_text.empty()) {
        throw validation_error("InvalidPool", "pool items need semantic_id and input_text");
      }
      if (item.background != background_) {
        throw validation_error("InvalidPool", "item '" + item.semantic_id + "' has background '" +
                                                  item.background + "', pool is '" +
                                                  background_ + "'");
      }
      if (!ids.insert(item.semantic_id).second) {
        throw validation_error("DuplicateSemanticId",
                               "duplicate semantic_id '" + item.semantic_id + "' in pool");
      }
    }
  }

  // JSONL: {"semantic_id", "background", "input_text", "gold"?}. The pool
  // background is taken from the first line unless `expected` is given.
  static SourcePool load(const std::filesystem::path& path,
                         std::optional<std::string> expected = std::nullopt) {
    std::vector<PoolItem> items;
    std::set<std::string> ids;
    std::optional<std::string> background = std::move(expected);
    io::for_each_jsonl(path, [&](const Json& j, std::size_t) {
      using namespace json_detail;
      constexpr std::string_view ctx = "pool item";
      check_keys(j, {"semantic_id", "background", "input_text", "gold"}, ctx);
      PoolItem item{required<std::string>(j, "semantic_id", ctx),
                    required<std::string>(j, "background", ctx),
                    required<std::string>(j, "input_text", ctx),
                    optional<std::string>(j, "gold", ctx)};
      if (!background) background = item.background;
      if (item.background != *background) {
        throw validation_error("InvalidPool", "background '" + item.background +
                                                  "' differs from pool background '" +
                                                  *background + "'");
      }
      if (!ids.insert(item.semantic_id).second) {
        throw validation_error("DuplicateSemanticId",
                               "duplicate semantic_id '" + item.semantic_id + "'");
      }
      items.push_back(std::move(item));
    });
    if (!background) {
      throw validation_error("InvalidPool", path.string() + ": pool file is empty");
    }
    return SourcePool(*background, std::move(items));
  }

  const std::string& background() const { return background_; }
  const std::vector<PoolItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  const PoolItem* find(const std::string& semantic_id) const {
    for (const auto& item : items_) {
      if (item.semantic_id == semantic_id) return &item;
    }
    return nullptr;
  }

 private:
  std::string background_;
  std::vector<PoolItem> items_;
};

// Seeded subsample of `count` items; relative order is preserved.
inline SourcePool subsample(const SourcePool& pool, std::size_t count, std::uint64_t seed) {
  if (count >= pool.size()) return pool;
  std::vector<PoolItem> picked;
  picked.reserve(count);
  auto engine = rng::make_engine(seed);
  std::sample(pool.items().begin(), pool.items().end(), std::back_inserter(picked), count,
              engine);
  return SourcePool(pool.background(), std::move(picked));
}

// One paired input awaiting responses.
struct PairedInputs {
  std::string semantic_id;
  std::string left_background;
  std::string left_text;
  std::string right_background;
  std::string right_text;
  std::optional<std::string> gold;

  bool operator==(const PairedInputs&) const = default;

  PairedInputs swapped() const {
    return {semantic_id, right_background, right_text, left_background, left_text, gold};
  }
  BackgroundPair background_pair() const { return {left_background, right_background}; }
};

inline Json to_json(const PairedInputs& p) {
  Json j{{"semantic_id", p.semantic_id},
         {"left", Json{{"background", p.left_background}, {"input_text", p.left_text}}},
         {"right", Json{{"background", p.right_background}, {"input_text", p.right_text}}}};
  if (p.gold) j["gold"] = *p.gold;
  return j;
}

inline PairedInputs paired_inputs_from_json(const Json& j) {
  using namespace json_detail;
  constexpr std::string_view ctx = "paired inputs";
  check_keys(j, {"semantic_id", "left", "right", "gold"}, ctx);
  const auto left = required<Json>(j, "left", ctx);
  const auto right = required<Json>(j, "right", ctx);
  check_keys(left, {"background", "input_text"}, ctx);
  check_keys(right, {"background", "input_text"}, ctx);
  return {required<std::string>(j, "semantic_id", ctx),
          required<std::string>(left, "background", ctx),
          required<std::string>(left, "input_text", ctx),
          required<std::string>(right, "background", ctx),
          required<std::string>(right, "input_text", ctx),
          optional<std::string>(j, "gold", ctx)};
}

struct TransferOutcome {
  std::string text;
  std::optional<std::string> failure;  // set when semantics cannot be preserved

  static TransferOutcome ok(std::string text) { return {std::move(text), std::nullopt}; }
  static TransferOutcome failed(std::string reason) { return {{}, std::move(reason)}; }
};

// Must be pure: the same item always yields the same outcome.
using Transformer = std::function<TransferOutcome(const PoolItem&)>;

struct TransferFailure {
  std::string semantic_id;
  std::string reason;
};

class TransferError : public Error {
 public:
  TransferError(std::vector<TransferFailure> failures, std::vector<PairedInputs> partial)
      : Error(ErrorCategory::Validation, "TransferFailure", describe(failures)),
        failures_(std::move(failures)),
        partial_(std::move(partial)) {}

  const std::vector<TransferFailure>& failures() const { return failures_; }
  // Skeletons for the items that did transfer, in pool order.
  const std::vector<PairedInputs>& partial() const { return partial_; }

 private:
  static std::string describe(const std::vector<TransferFailure>& failures) {
    std::string msg = std::to_string(failures.size()) + " item(s) could not be transferred:";
    for (const auto& f : failures) msg += " " + f.semantic_id + " (" + f.reason + ")";
    return msg;
  }

  std::vector<TransferFailure> failures_;
  std::vector<PairedInputs> partial_;
};

inline Transformer marker_transformer(MarkerLexicon lexicon, Direction direction) {
  return [lexicon = std::move(lexicon), direction](const PoolItem& item) {
    return TransferOutcome::ok(
        marker_style_transfer(item.input_text, lexicon, direction).transferred);
  };
}

// Pairs each item with its externally authored counterpart (same semantic_id).
inline Transformer counterpart_transformer(SourcePool target) {
  return [target = std::move(target)](const PoolItem& item) {
    if (const auto* match = target.find(item.semantic_id)) {
      return TransferOutcome::ok(match->input_text);
    }
    return TransferOutcome::failed("no counterpart with background '" + target.background() +
                                   "'");
  };
}

// Left side is the pool text, right side its transfer; pool order is kept.
inline std::vector<PairedInputs> build_paired_inputs(const SourcePool& pool,
                                                     const Transformer& transfer,
                                                     const std::string& target_background) {
  if (target_background == pool.background()) {
    throw validation_error("InvalidPairing",
                           "target background equals pool background '" + target_background + "'");
  }
  std::vector<PairedInputs> out;
  std::vector<TransferFailure> failures;
  out.reserve(pool.size());
  for (const auto& item : pool.items()) {
    auto outcome = transfer(item);
    if (outcome.failure) {
      failures.push_back({item.semantic_id, *outcome.failure});
      continue;
    }
    out.push_back({item.semantic_id, pool.background(), item.input_text, target_background,
                   std::move(outcome.text), item.gold});
  }
  if (!failures.empty()) throw TransferError(std::move(failures), std::move(out));
  return out;
}

// --- validation -------------------------------------------------------------------------

struct Violation {
  std::string semantic_id;
  std::string kind;  // SemanticMismatch | SameBackground | VariantMismatch | InvalidResponse
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_pairing(const PairedSample& sample) {
  ValidationReport report;
  for (const auto& obs : sample.observations()) {
    auto add = [&](std::string kind, std::string msg) {
      report.violations.push_back({obs.semantic_id, std::move(kind), std::move(msg)});
    };
    if (obs.semantic_id.empty() || obs.left.semantic_id != obs.semantic_id ||
        obs.right.semantic_id != obs.semantic_id) {
      add("SemanticMismatch", "semantic ids differ: '" + obs.left.semantic_id + "' vs '" +
                                  obs.right.semantic_id + "'");
    }
    if (obs.left.background == obs.right.background) {
      add("SameBackground", "both sides have background '" + obs.left.background + "'");
    }
    if (obs.left.response.index() != obs.right.response.index()) {
      add("VariantMismatch", std::string("response kinds differ: ") +
                                 to_string(kind_of(obs.left.response)) + " vs " +
                                 to_string(kind_of(obs.right.response)));
    }
    for (const auto* side : {&obs.left, &obs.right}) {
      if (auto why = response_violation(side->response)) add("InvalidResponse", *why);
      if (side->input_text.empty()) add("InvalidResponse", "empty input text");
    }
  }
  return report;
}

}  // namespace ipprobe::sampling
