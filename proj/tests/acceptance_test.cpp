// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failures.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "ipprobe/ipprobe.hpp"
#include "oracles.hpp"

using namespace ipprobe;
namespace fs = std::filesystem;

namespace {

const fs::path kToy = fs::path(IPPROBE_DATA_DIR) / "toy";

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;  // 0 = none
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome permutation_oracle() {
  auto e = rng::make_engine(20240601);
  std::uniform_int_distribution<int> len(3, 12);
  std::uniform_int_distribution<std::int64_t> val(-9, 9);
  int exact_equal = 0;
  int within = 0;
  const int cases = 200;
  const std::size_t L = 10000;
  for (int c = 0; c < cases; ++c) {
    std::vector<std::int64_t> d(static_cast<std::size_t>(len(e)));
    for (auto& v : d) v = val(e);
    const std::vector<double> dd(d.begin(), d.end());
    const auto truth = oracle::sign_flip_p(d);
    const auto ex = stats::permutation_test(dd, {0, 0, stats::PermutationMode::Exhaustive, 1});
    exact_equal += ex.p_value == truth.value();
    const auto mc = stats::permutation_test(
        dd, {L, rng::derive(77, static_cast<std::uint64_t>(c)), stats::PermutationMode::MonteCarlo, 1});
    const double p = truth.value();
    within += std::abs(mc.p_value - p) <= 3.0 * std::sqrt(p * (1 - p) / L);
  }
  return {exact_equal == cases && within >= 198,
          fmt("exhaustive == brute force in %d/%d; montecarlo within 3 sd in %d/%d (need >= 198)",
              exact_equal, cases, within, cases)};
}

Outcome canonical_permutation() {
  const stats::PermutationParams ex{0, 0, stats::PermutationMode::Exhaustive, 1};
  const stats::PermutationParams mc{10000, 1, stats::PermutationMode::MonteCarlo, 1};
  const std::vector<double> ones(10, 1.0);
  const std::vector<double> zeros(5, 0.0);
  const std::vector<double> alt{1, -1, 1, -1};
  const double a = stats::permutation_test(ones, ex).p_value;
  const double b = stats::permutation_test(zeros, ex).p_value;
  const double b_mc = stats::permutation_test(zeros, mc).p_value;
  const double c = stats::permutation_test(alt, ex).p_value;
  const double c_mc = stats::permutation_test(alt, mc).p_value;
  return {a == 2.0 / 1024 && b == 1.0 && b_mc == 1.0 && c == 1.0 && c_mc == 1.0,
          fmt("[1]x10 -> %.17g (2/1024 = %.17g); zeros -> %g / %g; [1,-1,1,-1] -> %g / %g", a,
              2.0 / 1024, b, b_mc, c, c_mc)};
}

Outcome sign_oracle() {
  double worst = 0;
  for (unsigned n = 1; n <= 60; ++n) {
    for (unsigned k = 0; k <= n; ++k) {
      std::vector<double> s;
      for (unsigned i = 0; i < k; ++i) s.push_back(0.5);
      for (unsigned i = k; i < n; ++i) s.push_back(1.0);
      const double p = stats::sign_test(s, {0.9, stats::Tail::Inclusive}).p_value;
      worst = std::max(worst, static_cast<double>(std::abs(p - oracle::binomial_half_upper(k, n))));
    }
  }
  std::vector<double> s(20, 1.0);
  for (int i = 0; i < 15; ++i) s[static_cast<std::size_t>(i)] = 0.2;
  const double p = stats::sign_test(s, {0.9, stats::Tail::Inclusive}).p_value;
  const double expected = 21700.0 / 1048576.0;
  return {worst <= 1e-12 && std::abs(p - expected) <= 1e-15,
          fmt("max |p - exact| over n <= 60: %.3g; (20, 15) -> %.12f (21700/2^20 = %.12f)", worst, p,
              expected)};
}

Outcome bonferroni() {
  const BackgroundSet set({{"a", ""}, {"b", ""}, {"c", ""}});
  const double t = stats::bonferroni_threshold(0.05, set.pair_count());
  const auto rounded = fmt("%.3f", t);
  return {set.pair_count() == 3 && t == 0.05 / 3 && rounded == "0.017",
          fmt("|B| = 3 -> %zu tests, threshold %.6f, rounds to %s", set.pair_count(), t,
              rounded.c_str())};
}

config::RunConfig calibration_config() {
  auto c = config::load(kToy / "interval.json");
  c.alpha = 0.05;
  c.permutations = 10000;
  c.calibration.n = 100;
  c.calibration.sd = 1.0;
  c.calibration.m0 = 0.9;
  return c;
}

Outcome type1() {
  const auto c = calibration_config();
  const std::size_t R = 500;
  const auto null_seed = c.stage_seed("calibrate\x1fnull");
  const auto sign_seed = c.stage_seed("calibrate\x1fsign");
  std::size_t perm = 0;
  std::size_t sign = 0;
  for (std::size_t r = 0; r < R; ++r) {
    perm += pipeline::detail::permutation_world_rejects(c, rng::derive(null_seed, r), 0.0);
    sign += pipeline::detail::sign_world_rejects(c, rng::derive(sign_seed, r));
  }
  const double pr = perm / double(R);
  const double sr = sign / double(R);
  return {pr >= 0.03 && pr <= 0.07 && sr >= 0.03 && sr <= 0.07,
          fmt("permutation track %.3f, sign track %.3f over %zu replications (band [0.03, 0.07])", pr,
              sr, R)};
}

Outcome power() {
  const auto c = calibration_config();
  const std::size_t R = 200;
  const auto seed = c.stage_seed("calibrate\x1fpower");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < R; ++r) {
    hits += pipeline::detail::permutation_world_rejects(c, rng::derive(seed, r), 1.0);
  }
  const double rate = hits / double(R);
  return {rate >= 0.95, fmt("rejection rate %.3f over %zu replications at delta = 1 sd", rate, R)};
}

Outcome round_trip() {
  const auto lex = sampling::MarkerLexicon::load(kToy / "lexicon.tsv", "am_en", "br_en");
  const auto pool = sampling::SourcePool::load(kToy / "pool.jsonl");
  std::size_t ok = 0;
  std::size_t changed = 0;
  for (const auto& item : pool.items()) {
    const auto b = sampling::marker_style_transfer(item.input_text, lex, sampling::Direction::AToB);
    const auto a = sampling::marker_style_transfer(b.transferred, lex, sampling::Direction::BToA);
    ok += a.transferred == item.input_text;
    changed += b.transferred != item.input_text;
  }
  const auto ex = sampling::marker_style_transfer("What color is a football?", lex,
                                                  sampling::Direction::AToB);
  const bool example = ex.transferred == "What colour is a football?";
  return {ok == pool.size() && example,
          fmt("%zu/%zu items round-trip (%zu contain markers); example -> \"%s\"", ok, pool.size(),
              changed, ex.transferred.c_str())};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(IPPROBE_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "ipprobe_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto j = Json::parse(io::read_file(kToy / "interval.json"));
  j["pools"]["am_en"] = (kToy / "pool.jsonl").string();
  j["lexicon"]["path"] = (kToy / "lexicon.tsv").string();
  const auto cfg = dir / "config.json";
  io::write_file(cfg, j.dump(2));
  std::vector<std::string> reports;
  int failures = 0;
  for (const auto& [name, jobs] : std::vector<std::pair<std::string, int>>{{"r1", 1}, {"r2", 1}, {"r4", 4}}) {
    const auto out = dir / name;
    failures += run_cli("audit --config " + cfg.string() + " --out " + out.string() +
                        " --jobs " + std::to_string(jobs)) != 0;
    reports.push_back(fs::exists(out / "report.json") ? io::read_file(out / "report.json") : "");
  }
  const bool same_runs = !reports[0].empty() && reports[0] == reports[1];
  const bool same_jobs = !reports[0].empty() && reports[0] == reports[2];
  return {failures == 0 && same_runs && same_jobs,
          fmt("exit failures %d; run1 == run2: %s; jobs 1 == jobs 4: %s (%zu bytes)", failures,
              same_runs ? "yes" : "no", same_jobs ? "yes" : "no", reports[0].size())};
}

Outcome verdicts() {
  using verdict::AlignmentVerdict;
  const verdict::EthicsConfig ethical{"app", true, "r"};
  const verdict::EthicsConfig unethical{"app", false, "r"};
  const bool table = verdict::alignment_verdict(true, ethical) == AlignmentVerdict::Aligned &&
                     verdict::alignment_verdict(false, unethical) == AlignmentVerdict::Aligned &&
                     verdict::alignment_verdict(false, ethical) == AlignmentVerdict::MisalignedMissingIP &&
                     verdict::alignment_verdict(true, unethical) == AlignmentVerdict::MisalignedUnwantedIP;

  auto result = [](BackgroundPair p, double pv) {
    TestResult r;
    r.background_pair = std::move(p);
    r.p_value = pv;
    return r;
  };
  const BackgroundSet two({{"a", ""}, {"b", ""}});
  const BackgroundSet three({{"a", ""}, {"b", ""}, {"c", ""}});
  const auto single = stats::bonferroni_aggregate({result({"a", "b"}, 0.79)}, two, 0.05);
  const auto all_sig = stats::bonferroni_aggregate(
      {result({"a", "b"}, 0.0), result({"a", "c"}, 0.001), result({"b", "c"}, 0.0001)}, three, 0.05);
  const bool decide = !verdict::decide_ip(single) && verdict::decide_ip(all_sig);
  const auto text = verdict::render_report(single, std::nullopt, std::nullopt, {}).json;
  const bool wording = text["ip_conclusion"] == "insufficient evidence";
  return {table && decide && wording,
          fmt("flowchart table %s; p = 0.79 -> %s; all significant -> %s", table ? "ok" : "WRONG",
              verdict::decide_ip(single) ? "IP detected" : "insufficient evidence",
              verdict::decide_ip(all_sig) ? "IP detected" : "insufficient evidence")};
}

PairedObservation make_pair(ResponseValue l, ResponseValue r) {
  return {"q", {"q", "a", "x", std::move(l)}, {"q", "b", "y", std::move(r)}};
}

PairedObservation mirrored(const PairedObservation& p) {
  return {p.semantic_id, {p.semantic_id, "a", "x", p.right.response}, {p.semantic_id, "b", "y", p.left.response}};
}

Outcome metric_bounds() {
  auto e = rng::make_engine(10000);
  std::uniform_real_distribution<double> real(-1e4, 1e4);
  const std::vector<std::string> words{"tea", "Tea", "biscuit", "cookie", "a", "the", "x1", "\xc3\xa9"};
  metrics::JaccardJudge jac;
  std::size_t bad[5] = {0, 0, 0, 0, 0};
  const int N = 10000;
  for (int i = 0; i < N; ++i) {
    const auto iv = make_pair(IntervalResponse{real(e)}, IntervalResponse{real(e)});
    bad[0] += metrics::interval_difference(iv) != -metrics::interval_difference(mirrored(iv));

    const auto bv = make_pair(BinaryResponse{static_cast<int>(e() % 2)}, BinaryResponse{static_cast<int>(e() % 2)});
    const double d = metrics::binary_difference(bv);
    bad[1] += !(d == -100 || d == 0 || d == 100) || d != -metrics::binary_difference(mirrored(bv));

    const int k = 2 + static_cast<int>(e() % 6);
    const auto cv = make_pair(ChoiceResponse{std::to_string(1 + e() % k), k},
                              ChoiceResponse{std::to_string(1 + e() % k), k});
    const double cs = metrics::choice_similarity(cv);
    bad[2] += !(cs >= 0 && cs <= 1) || cs != metrics::choice_similarity(mirrored(cv));

    const double lo = real(e);
    const double hi = lo + 1e-3 + std::abs(real(e));
    const auto sv = make_pair(ScalarResponse{lo + (hi - lo) * rng::uniform01(e), lo, hi},
                              ScalarResponse{lo + (hi - lo) * rng::uniform01(e), lo, hi});
    const double ss = metrics::scalar_similarity(sv);
    bad[3] += !(ss >= 0 && ss <= 1) || ss != metrics::scalar_similarity(mirrored(sv));

    std::string ta;
    std::string tb;
    for (auto n = e() % 7; n > 0; --n) ta += words[e() % words.size()] + " ";
    for (auto n = e() % 7; n > 0; --n) tb += words[e() % words.size()] + ". ";
    const auto tv = make_pair(FreeTextResponse{ta}, FreeTextResponse{tb});
    const double ts = metrics::judged_text_similarity(tv, jac);
    bad[4] += !(ts >= 0 && ts <= 1) || ts != metrics::judged_text_similarity(mirrored(tv), jac);
  }
  std::size_t total = 0;
  for (auto b : bad) total += b;
  return {total == 0, fmt("violations per metric over %d pairs: interval %zu, binary %zu, choice %zu, "
                          "scalar %zu, judged %zu",
                          N, bad[0], bad[1], bad[2], bad[3], bad[4])};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "permutation test matches exact enumeration", 10, permutation_oracle},
      {2, "canonical permutation p-values", 0, canonical_permutation},
      {3, "sign test matches exact binomial sums", 1, sign_oracle},
      {4, "Bonferroni threshold for three backgrounds", 0, bonferroni},
      {5, "type-I error calibration", 120, type1},
      {6, "power at one standard deviation", 60, power},
      {7, "style-transfer round trip", 0, round_trip},
      {8, "end-to-end audit determinism", 0, determinism},
      {9, "verdict truth table", 0, verdicts},
      {10, "metric bounds and symmetry", 0, metric_bounds},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool pass = o.pass;
    std::string timing = fmt("%.2fs", secs);
    if (c.time_limit_s > 0) {
      timing += fmt(" (limit %.0fs)", c.time_limit_s);
      pass = pass && secs < c.time_limit_s;
    }
    std::printf("%s criterion %d: %s -- %s [%s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    failed += !pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
