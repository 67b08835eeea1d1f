// ip-probe: command-line driver for implicit-personalization audits.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ipprobe/ipprobe.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ipprobe;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<double> m0;
  std::optional<std::size_t> permutations;
  std::optional<std::string> tail;
  std::optional<std::size_t> subsample;
  std::optional<std::size_t> jobs;
  bool fail_fast = false;
  std::optional<std::string> out;
  std::vector<std::string> inputs;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->required();
  cmd->add_option("--seed", o.seed, "Root seed");
  cmd->add_option("--alpha", o.alpha, "Family-wise significance level");
  cmd->add_option("--m0", o.m0, "Sign-test similarity threshold M0");
  cmd->add_option("--permutations", o.permutations, "Monte-Carlo permutation count L");
  cmd->add_option("--tail", o.tail, "Sign-test tail: inclusive|strict")
      ->check(CLI::IsMember({"inclusive", "strict"}));
  cmd->add_option("--subsample", o.subsample, "Seeded subsample size per source pool");
  cmd->add_flag("--fail-fast", o.fail_fast, "Abort collection on the first backend error");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--jobs", o.jobs, "Concurrent backend requests");
}

config::RunConfig resolve(const Overrides& o) {
  auto c = config::load(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.m0) c.m0 = *o.m0;
  if (o.permutations) c.permutations = *o.permutations;
  if (o.tail) c.tail = stats::parse_tail(*o.tail);
  if (o.subsample) c.subsample = *o.subsample;
  if (o.jobs) c.backend.concurrency = std::max<std::size_t>(1, *o.jobs);
  if (o.fail_fast) c.fail_fast = true;
  if (o.out) c.output_dir = *o.out;
  c.validate();
  return c;
}

fs::path input_or(const Overrides& o, const config::RunConfig& c, const char* fallback) {
  return o.inputs.empty() ? c.output_dir / fallback : fs::path(o.inputs.front());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect implicit personalization in black-box text generators"};
  app.require_subcommand(1);

  Overrides o;
  auto* pair = app.add_subcommand("pair", "Build paired inputs from source pools");
  auto* collect = app.add_subcommand("collect", "Query the backend for every paired input");
  auto* score = app.add_subcommand("score", "Score paired responses");
  auto* test = app.add_subcommand("test", "Run the paired tests and write the report");
  auto* audit = app.add_subcommand("audit", "pair -> collect -> score -> test");
  auto* calibrate = app.add_subcommand("calibrate", "Check type-I error and power on mock worlds");
  for (auto* cmd : {pair, collect, score, test, audit, calibrate}) add_common(cmd, o);
  collect->add_option("pairs", o.inputs, "Paired-inputs file (default <out>/pairs.jsonl)");
  score->add_option("sample", o.inputs, "Sample file (default <out>/sample.jsonl)");
  test->add_option("series", o.inputs, "Series file(s) (default <out>/series.jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const pipeline::Log log = [](const std::string& msg) { std::cerr << msg << "\n"; };
  try {
    const auto c = resolve(o);
    if (pair->parsed()) {
      std::cout << pipeline::cmd_pair(c, log).string() << "\n";
    } else if (collect->parsed()) {
      std::cout << pipeline::cmd_collect(c, input_or(o, c, pipeline::kPairsFile), log).string() << "\n";
    } else if (score->parsed()) {
      std::cout << pipeline::cmd_score(c, input_or(o, c, pipeline::kSampleFile), log).string() << "\n";
    } else if (test->parsed() || audit->parsed()) {
      pipeline::TestOutcome outcome;
      if (audit->parsed()) {
        outcome = pipeline::cmd_audit(c, log);
      } else {
        std::vector<fs::path> files(o.inputs.begin(), o.inputs.end());
        if (files.empty()) files.push_back(c.output_dir / pipeline::kSeriesFile);
        outcome = pipeline::cmd_test(c, files, log);
      }
      std::cout << io::read_file(c.output_dir / pipeline::kReportTextFile);
    } else if (calibrate->parsed()) {
      std::cout << io::read_file(pipeline::cmd_calibrate(c, log));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
