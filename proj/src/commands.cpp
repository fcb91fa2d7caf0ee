#include "tripletsearch/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "tripletsearch/checkpoint.hpp"
#include "tripletsearch/errors.hpp"

namespace tripletsearch {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << contents;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void make_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ConfigError("output directory '" + dir.string() + "' is not writable");
}

std::string format_value(SweepKind kind, double v) {
  if (kind == SweepKind::BatchSize) return std::to_string(static_cast<long long>(v));
  return nlohmann::json(v).dump();
}

std::vector<std::size_t> with_rank_one(std::vector<std::size_t> ks) {
  if (std::find(ks.begin(), ks.end(), std::size_t{1}) == ks.end()) ks.insert(ks.begin(), 1);
  return ks;
}

}  // namespace

SynthSummary cmd_synth(const SynthConfig& cfg, const fs::path& out, std::ostream& log) {
  validate(cfg, true);
  const Dataset ds = generate_synthetic(cfg);
  if (out.has_parent_path()) make_output_dir(out.parent_path());
  save_dataset(ds, out);
  SynthSummary s{ds.size(), ds.item_count(), ds.class_count()};
  log << "wrote " << out.string() << ": " << s.records << " records, " << s.items << " items, "
      << s.classes << " classes, dim " << ds.input_dim() << '\n';
  return s;
}

TrainOutcome cmd_train(RunConfig cfg, std::ostream& log) {
  cfg.train.k_list = with_rank_one(cfg.train.k_list);
  RunData data = prepare(cfg);
  make_output_dir(cfg.output_dir);
  write_file(cfg.output_dir / "config.json", to_json(cfg).dump(2) + "\n");

  TrainResult result = train(data.train, cfg.train, &data.eval);

  Checkpoint ckpt{result.model, nlohmann::json(to_json(cfg.train))};
  save_checkpoint(ckpt, cfg.output_dir / "checkpoint.json");
  std::ostringstream metrics;
  write_metrics_log(result, metrics);
  write_file(cfg.output_dir / "metrics.jsonl", metrics.str());
  const EvalReport& final_report = result.evals.back().report;
  write_file(cfg.output_dir / "report.json", to_json(final_report).dump(2) + "\n");

  log << "trained " << cfg.train.steps << " steps on " << data.train.size() << " records; recall@1 "
      << result.evals.front().report.recall(1) << " -> " << final_report.recall(1) << " ("
      << to_string(*cfg.protocol) << " protocol, " << final_report.n_queries << " queries)\n";
  if (result.within_class_fallbacks > 0)
    log << "warning: " << result.within_class_fallbacks
        << " within-class batches fell back to sampling items with replacement\n";
  return {std::move(result), std::move(cfg)};
}

EvalReport cmd_eval(EvalArgs args, std::ostream& log) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const Dataset ds = load(args.data);
  if (ds.input_dim() != ckpt.model.input_dim())
    throw ConfigError("dataset dim " + std::to_string(ds.input_dim()) + " does not match model input_dim " +
                      std::to_string(ckpt.model.input_dim()));
  if (!args.protocol)
    args.protocol = ds.has_domain(Domain::Query) && ds.has_domain(Domain::Catalog)
                        ? EvalProtocol::CrossDomain
                        : EvalProtocol::SinglePool;
  validate_protocol(ds, *args.protocol);
  make_output_dir(args.output_dir);

  nlohmann::ordered_json resolved;
  resolved["checkpoint"] = args.checkpoint.string();
  resolved["data"] = to_json(args.data);
  resolved["protocol"] = to_string(*args.protocol);
  resolved["k_list"] = args.k_list;
  resolved["output_dir"] = args.output_dir.string();
  write_file(args.output_dir / "config.json", resolved.dump(2) + "\n");

  const EvalReport report = evaluate(ckpt.model, ds, *args.protocol, args.k_list);
  write_file(args.output_dir / "report.json", to_json(report).dump(2) + "\n");
  std::ostringstream recall, confusion;
  write_recall_csv(report, recall);
  write_confusion_csv(report, confusion);
  write_file(args.output_dir / "recall.csv", recall.str());
  write_file(args.output_dir / "confusion.csv", confusion.str());

  log << report.n_queries << " queries (" << report.excluded_queries << " excluded)";
  for (const auto& [k, r] : report.recall_at_k) log << ", R@" << k << '=' << r;
  log << ", first-retrieval class accuracy " << report.overall_first_retrieval_accuracy << '\n';
  return report;
}

std::string to_string(SweepKind kind) {
  return kind == SweepKind::BatchSize ? "batch-size" : "within-class";
}

SweepKind parse_sweep_kind(const std::string& s) {
  if (s == "batch-size") return SweepKind::BatchSize;
  if (s == "within-class") return SweepKind::WithinClass;
  throw UsageError("unknown sweep kind '" + s + "' (expected batch-size or within-class)");
}

std::pair<std::size_t, std::size_t> nonzero_fraction_window(std::size_t steps) {
  return {steps / 4 + 1, steps};
}

std::vector<SweepRow> cmd_sweep(const SweepArgs& args, std::ostream& log) {
  if (args.values.empty()) throw ConfigError("sweep needs at least one value");
  for (double v : args.values) {
    if (args.kind == SweepKind::BatchSize && !(v >= 2 && v == std::floor(v)))
      throw ConfigError("batch-size sweep values must be integers >= 2");
    if (args.kind == SweepKind::WithinClass && !(v >= 0.0 && v <= 1.0))
      throw ConfigError("within-class sweep values must lie in [0, 1]");
  }
  make_output_dir(args.base.output_dir);

  nlohmann::ordered_json doc;
  doc["kind"] = to_string(args.kind);
  doc["values"] = args.values;
  doc["base"] = to_json(args.base);
  write_file(args.base.output_dir / "config.json", doc.dump(2) + "\n");

  std::vector<SweepRow> rows;
  std::string csv = "value,recall_at_1,mean_nonzero_fraction\n";
  for (std::size_t i = 0; i < args.values.size(); ++i) {
    RunConfig run = args.base;
    const double v = args.values[i];
    if (args.kind == SweepKind::BatchSize)
      run.train.sampler.batch_pairs = static_cast<std::size_t>(v);
    else
      run.train.sampler.within_class_fraction = v;
    run.train.seed = args.base.train.seed + i;
    run.train.sampler.seed = args.base.train.sampler.seed + i;
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    run.output_dir = args.base.output_dir / name;

    std::ostringstream run_log;
    const TrainOutcome outcome = cmd_train(run, run_log);
    const auto [first, last] = nonzero_fraction_window(run.train.steps);
    SweepRow row{v, outcome.result.evals.back().report.recall(1),
                 mean_nonzero_fraction(outcome.result.steps, first, last)};
    rows.push_back(row);
    csv += format_value(args.kind, v) + ',' + nlohmann::json(row.recall_at_1).dump() + ',' +
           nlohmann::json(row.mean_nonzero_fraction).dump() + '\n';
    log << to_string(args.kind) << '=' << format_value(args.kind, v) << ": recall@1 " << row.recall_at_1
        << ", mean nonzero fraction " << row.mean_nonzero_fraction << '\n';
  }
  write_file(args.base.output_dir / "sweep.csv", csv);
  return rows;
}

}  // namespace tripletsearch
