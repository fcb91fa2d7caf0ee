#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "tripletsearch/checkpoint.hpp"
#include "tripletsearch/commands.hpp"
#include "tripletsearch/errors.hpp"

using namespace tripletsearch;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

SynthConfig tiny_synth(bool two_domain = false) {
  SynthConfig s = synth_preset(two_domain ? "df-like" : "sop-like");
  s.n_classes = 3;
  s.items_per_class = 10;
  s.seed = 3;
  return s;
}

RunConfig tiny_run(const fs::path& out) {
  RunConfig cfg;
  cfg.data.synth = tiny_synth();
  cfg.holdout_fraction = 0.3;
  cfg.train.steps = 30;
  cfg.train.eval_every = 10;
  cfg.train.sampler.batch_pairs = 6;
  cfg.train.seed = cfg.train.sampler.seed = 2;
  cfg.output_dir = out;
  return cfg;
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(TSEARCH_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes the expected rows and is repeatable") {
  const auto dir = scratch_dir("cli_synth");
  SynthConfig s;
  s.n_classes = 2;
  s.items_per_class = 3;
  s.images_per_item = 2;
  s.dim = 4;
  s.seed = 42;
  std::ostringstream log;
  const auto summary = cmd_synth(s, dir / "a.csv", log);
  cmd_synth(s, dir / "b.csv", log);
  CHECK(summary.records == 12);
  CHECK(summary.items == 6);
  CHECK(summary.classes == 2);
  CHECK(lines_of(dir / "a.csv").size() == 13);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(load_dataset(dir / "a.csv").size() == 12);
}

TEST_CASE("synth refuses one image per item") {
  const auto dir = scratch_dir("cli_synth_bad");
  SynthConfig s;
  s.images_per_item = 1;
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_synth(s, dir / "x.csv", log), ConfigError);
  CHECK_FALSE(fs::exists(dir / "x.csv"));
}

TEST_CASE("train writes its artifacts and records the margin") {
  const auto dir = scratch_dir("cli_train");
  std::ostringstream log;
  const auto outcome = cmd_train(tiny_run(dir), log);
  for (const char* f : {"config.json", "checkpoint.json", "metrics.jsonl", "report.json"})
    CHECK(fs::exists(dir / f));
  const auto ckpt = load_checkpoint(dir / "checkpoint.json");
  CHECK(ckpt.metadata.at("margin").get<double>() == 0.1);
  CHECK(ckpt.model == outcome.result.model);
  const auto report = eval_report_from_json(nlohmann::json::parse(slurp(dir / "report.json")));
  CHECK(report == outcome.result.evals.back().report);
  // 30 step lines and evals at 0, 10, 20, 30
  CHECK(lines_of(dir / "metrics.jsonl").size() == 34);
  const auto cfg = load_run_config(dir / "config.json");
  CHECK(cfg == outcome.resolved);
}

TEST_CASE("cross pair mode needs domain labels") {
  const auto dir = scratch_dir("cli_cross");
  auto cfg = tiny_run(dir);
  cfg.train.pair_mode = PairMode::CrossDomainOnly;
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_train(cfg, log), ConfigError);
}

TEST_CASE("within-class fraction shows up in the step log") {
  const auto dir = scratch_dir("cli_within");
  auto cfg = tiny_run(dir);
  cfg.train.steps = 1000;
  cfg.train.eval_every = 1000;
  cfg.train.sampler.within_class_fraction = 0.8;
  std::ostringstream log;
  cmd_train(cfg, log);
  std::size_t steps = 0, in_class = 0;
  for (const auto& line : lines_of(dir / "metrics.jsonl")) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("eval")) continue;
    ++steps;
    if (j.at("in_class").get<bool>()) ++in_class;
  }
  CHECK(steps == 1000);
  const double frac = static_cast<double>(in_class) / static_cast<double>(steps);
  CHECK(frac > 0.75);
  CHECK(frac < 0.85);
}

TEST_CASE("eval of an identity checkpoint") {
  const auto dir = scratch_dir("cli_eval");
  std::ostringstream log;
  cmd_synth(tiny_synth(true), dir / "data.csv", log);
  save_checkpoint(Checkpoint{EmbeddingModel::identity(tiny_synth().dim + tiny_synth().nuisance_dim),
                             nlohmann::json::object()},
                  dir / "id.json");
  EvalArgs args;
  args.checkpoint = dir / "id.json";
  args.data.path = dir / "data.csv";
  args.output_dir = dir / "e1";
  const auto r = cmd_eval(args, log);
  CHECK(r.recall(1) > 0.0);
  CHECK(lines_of(dir / "e1" / "recall.csv").size() == 8);
  args.output_dir = dir / "e2";
  cmd_eval(args, log);
  for (const char* f : {"report.json", "recall.csv", "confusion.csv"})
    CHECK(slurp(dir / "e1" / f) == slurp(dir / "e2" / f));

  args.data.path = dir / "missing.csv";
  CHECK_THROWS(cmd_eval(args, log));
}

TEST_CASE("sweep rows and determinism") {
  const auto dir = scratch_dir("cli_sweep");
  SweepArgs args;
  args.kind = SweepKind::BatchSize;
  args.values = {2, 4, 6};
  args.base = tiny_run(dir / "a");
  std::ostringstream log;
  const auto rows = cmd_sweep(args, log);
  REQUIRE(rows.size() == 3);
  const auto csv = lines_of(dir / "a" / "sweep.csv");
  REQUIRE(csv.size() == 4);
  CHECK(csv[0] == "value,recall_at_1,mean_nonzero_fraction");
  CHECK(csv[1].rfind("2,", 0) == 0);
  for (const auto& r : rows) {
    CHECK(r.recall_at_1 >= 0.0);
    CHECK(r.recall_at_1 <= 1.0);
    CHECK(r.mean_nonzero_fraction >= 0.0);
    CHECK(r.mean_nonzero_fraction <= 1.0);
  }
  CHECK(fs::exists(dir / "a" / "run_000" / "checkpoint.json"));
  args.base.output_dir = dir / "b";
  cmd_sweep(args, log);
  CHECK(slurp(dir / "a" / "sweep.csv") == slurp(dir / "b" / "sweep.csv"));

  args.kind = SweepKind::WithinClass;
  args.values = {1.5};
  CHECK_THROWS_AS(cmd_sweep(args, log), ConfigError);
  CHECK(nonzero_fraction_window(2000) == std::pair<std::size_t, std::size_t>{501, 2000});
}

TEST_CASE("run config round trip") {
  auto cfg = tiny_run("somewhere");
  cfg.protocol = EvalProtocol::SinglePool;
  cfg.train.model.arch = Architecture::MLP1;
  cfg.train.model.hidden_dim = 7;
  cfg.train.sampler.negatives = NegativeStrategy::UniformRandom;
  const auto doc = nlohmann::json::parse(to_json(cfg).dump());
  CHECK(run_config_from_json(doc) == cfg);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json::parse(R"({"data": {"preset": "nope"}})")),
                  ConfigError);
  CHECK_THROWS_AS(
      run_config_from_json(nlohmann::json::parse(R"({"data": {"synth": {"preset": "nope"}}})")),
      ConfigError);
}

TEST_CASE("binary exit codes") {
  const auto dir = scratch_dir("cli_binary");
  CHECK(run_binary("--help") == 0);
  CHECK(run_binary("synth --preset sop-like --items-per-class 5 --seed 1 -o " +
                   (dir / "d.csv").string()) == 0);
  CHECK(fs::exists(dir / "d.csv"));
  CHECK(run_binary("synth --images-per-item 1 --seed 1 -o " + (dir / "bad.csv").string()) == 1);
  CHECK(run_binary("train --data " + (dir / "d.csv").string() + " --steps 0 --seed 1 -o " +
                   (dir / "r").string()) == 1);
  CHECK(run_binary("train --data " + (dir / "d.csv").string() + " -o " + (dir / "r").string()) !=
        0);
  CHECK(run_binary("frobnicate") != 0);
}

}  // TEST_SUITE
