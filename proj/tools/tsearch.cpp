// tsearch: synthetic data, triplet training, retrieval evaluation and sweeps.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tripletsearch/commands.hpp"
#include "tripletsearch/errors.hpp"

namespace ts = tripletsearch;

namespace {

struct SynthFlags {
  std::string preset;
  ts::SynthConfig cfg;
  std::vector<CLI::Option*> overrides;
  CLI::Option* preset_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* two_domain_opt = nullptr;

  void add(CLI::App& app, const std::string& prefix) {
    preset_opt = app.add_option("--" + prefix + "preset", preset, "Synthetic preset: sop-like | df-like");
    overrides = {
        app.add_option("--" + prefix + "n-classes", cfg.n_classes, "Number of classes"),
        app.add_option("--" + prefix + "items-per-class", cfg.items_per_class, "Items per class"),
        app.add_option("--" + prefix + "images-per-item", cfg.images_per_item, "Images per item"),
        app.add_option("--" + prefix + "dim", cfg.dim, "Informative feature dimensions"),
        app.add_option("--" + prefix + "class-spread", cfg.class_spread, "Class centre spread"),
        app.add_option("--" + prefix + "item-spread", cfg.item_spread, "Item centre spread"),
        app.add_option("--" + prefix + "image-noise", cfg.image_noise, "Per-image noise"),
        app.add_option("--" + prefix + "nuisance-dim", cfg.nuisance_dim, "Pure-noise feature dimensions"),
        app.add_option("--" + prefix + "nuisance-noise", cfg.nuisance_noise, "Scale of nuisance features"),
    };
    two_domain_opt = app.add_flag("--" + prefix + "two-domain,!--" + prefix + "single-domain", cfg.two_domain,
                                  "Alternate catalog/query domains within each item");
  }

  bool given() const {
    if (preset_opt->count() || two_domain_opt->count()) return true;
    for (auto* o : overrides)
      if (o->count()) return true;
    return false;
  }

  /// Preset (or defaults) with explicit flags layered on top.
  ts::SynthConfig resolve(std::uint64_t seed) const {
    ts::SynthConfig out = preset.empty() ? ts::SynthConfig{} : ts::synth_preset(preset);
    const ts::SynthConfig& f = cfg;
    if (overrides[0]->count()) out.n_classes = f.n_classes;
    if (overrides[1]->count()) out.items_per_class = f.items_per_class;
    if (overrides[2]->count()) out.images_per_item = f.images_per_item;
    if (overrides[3]->count()) out.dim = f.dim;
    if (overrides[4]->count()) out.class_spread = f.class_spread;
    if (overrides[5]->count()) out.item_spread = f.item_spread;
    if (overrides[6]->count()) out.image_noise = f.image_noise;
    if (overrides[7]->count()) out.nuisance_dim = f.nuisance_dim;
    if (overrides[8]->count()) out.nuisance_noise = f.nuisance_noise;
    if (two_domain_opt->count()) out.two_domain = f.two_domain;
    out.seed = seed;
    return out;
  }
};

struct RunFlags {
  std::string config_path;
  std::string data_path;
  std::string eval_data_path;
  SynthFlags synth;
  std::uint64_t synth_seed = 0;
  double holdout = 0.0;
  std::uint64_t split_seed = 0;
  double margin = 0.1;
  std::size_t batch_pairs = 48;
  double within_class = 0.0;
  std::string pair_mode = "all";
  std::string negatives = "batch-hard";
  bool negatives_from_anchors = false;
  std::size_t steps = 2000;
  double lr = 1e-3;
  double momentum = 0.9;
  std::string arch = "linear";
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  std::size_t eval_every = 500;
  std::string protocol;
  std::vector<std::size_t> k_list;
  std::uint64_t seed = 0;
  std::string output_dir;

  CLI::App* app = nullptr;

  void add(CLI::App& a) {
    app = &a;
    a.add_option("--config", config_path, "Run config JSON (flags override its values)")->check(CLI::ExistingFile);
    a.add_option("--data", data_path, "Training dataset CSV")->check(CLI::ExistingFile);
    synth.add(a, "");
    a.add_option("--synth-seed", synth_seed, "Seed for the synthetic dataset");
    a.add_option("--eval-data", eval_data_path, "Separate evaluation dataset CSV")->check(CLI::ExistingFile);
    a.add_option("--holdout", holdout, "Fraction of items per class held out for evaluation");
    a.add_option("--split-seed", split_seed, "Seed for the held-out item split");
    a.add_option("--margin", margin, "Triplet margin")->capture_default_str();
    a.add_option("--batch-pairs", batch_pairs, "Anchor-positive pairs per minibatch")->capture_default_str();
    a.add_option("--within-class-frac", within_class, "Fraction of within-class minibatches")->capture_default_str();
    a.add_option("--pair-mode", pair_mode, "all | cross")->capture_default_str();
    a.add_option("--negatives", negatives, "batch-hard | random")->capture_default_str();
    a.add_flag("--negatives-from-anchors", negatives_from_anchors, "Also consider other anchors as negatives");
    a.add_option("--steps", steps, "Training steps")->capture_default_str();
    a.add_option("--lr", lr, "Learning rate")->capture_default_str();
    a.add_option("--momentum", momentum, "Momentum")->capture_default_str();
    a.add_option("--arch", arch, "linear | mlp1")->capture_default_str();
    a.add_option("--hidden-dim", hidden_dim, "MLP1 hidden width (0: input dim)");
    a.add_option("--output-dim", output_dim, "Embedding dimension (0: input dim)");
    a.add_option("--eval-every", eval_every, "Steps between evaluations")->capture_default_str();
    a.add_option("--protocol", protocol, "cross | single (default: cross when both domains exist)");
    a.add_option("--k-list", k_list, "Recall cut-offs")->delimiter(',');
    a.add_option("--seed", seed, "Training seed (model init and sampling)");
    a.add_option("-o,--output-dir", output_dir, "Output directory");
  }

  bool has(const std::string& name) const { return app->get_option(name)->count() > 0; }

  ts::RunConfig resolve() const {
    ts::RunConfig cfg;
    bool seed_in_config = false;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw ts::ConfigError("config '" + config_path + "' is not valid JSON");
      }
      cfg = ts::run_config_from_json(j);
      seed_in_config = j.contains("train") && j["train"].contains("seed");
    }
    if (!has("--seed") && !seed_in_config)
      throw ts::ConfigError("--seed is required (or set train.seed in --config)");

    if (has("--data") && synth.given())
      throw ts::ConfigError("use either --data or synthetic flags, not both");
    if (has("--data")) cfg.data = ts::DataSource{data_path, std::nullopt};
    if (synth.given() || has("--synth-seed")) {
      const auto base_seed = cfg.data.synth ? cfg.data.synth->seed : 0;
      ts::SynthConfig s = synth.resolve(has("--synth-seed") ? synth_seed : base_seed);
      cfg.data = ts::DataSource{std::nullopt, s};
    }
    if (has("--eval-data")) cfg.eval_data = ts::DataSource{eval_data_path, std::nullopt};
    if (has("--holdout")) cfg.holdout_fraction = holdout;
    if (has("--split-seed")) cfg.split_seed = split_seed;

    auto& t = cfg.train;
    if (has("--margin")) t.margin = margin;
    if (has("--batch-pairs")) t.sampler.batch_pairs = batch_pairs;
    if (has("--within-class-frac")) t.sampler.within_class_fraction = within_class;
    if (has("--pair-mode")) t.pair_mode = ts::parse_pair_mode(pair_mode);
    if (has("--negatives")) t.sampler.negatives = ts::parse_negative_strategy(negatives);
    if (has("--negatives-from-anchors")) t.sampler.negatives_from_anchors = negatives_from_anchors;
    if (has("--steps")) t.steps = steps;
    if (has("--lr")) t.optimizer.lr = lr;
    if (has("--momentum")) t.optimizer.momentum = momentum;
    if (has("--arch")) t.model.arch = ts::parse_architecture(arch);
    if (has("--hidden-dim")) t.model.hidden_dim = hidden_dim;
    if (has("--output-dim")) t.model.output_dim = output_dim;
    if (has("--eval-every")) t.eval_every = eval_every;
    if (has("--k-list")) t.k_list = k_list;
    if (has("--seed")) {
      t.seed = seed;
      t.sampler.seed = seed;
    }
    if (has("--protocol")) cfg.protocol = ts::parse_eval_protocol(protocol);
    if (has("--output-dir")) cfg.output_dir = output_dir;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Triplet-loss embedding training and retrieval evaluation"};
  app.require_subcommand(1);

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic feature dataset (CSV)");
  SynthFlags synth_flags;
  synth_flags.add(*synth_cmd, "");
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth_cmd->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("-o,--output", synth_out, "Output CSV path")->required();

  auto* train_cmd = app.add_subcommand("train", "Train an embedding with batch-hard triplet sampling");
  RunFlags train_flags;
  train_flags.add(*train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint as a retrieval system");
  std::string eval_ckpt, eval_data, eval_protocol, eval_out = "eval";
  std::vector<std::size_t> eval_ks = ts::kDefaultKList;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--protocol", eval_protocol, "cross | single (default: cross when both domains exist)");
  eval_cmd->add_option("--k-list", eval_ks, "Recall cut-offs")->delimiter(',')->capture_default_str();
  eval_cmd->add_option("-o,--output-dir", eval_out, "Output directory")->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "Train+evaluate once per value of a sampling parameter");
  RunFlags sweep_flags;
  sweep_flags.add(*sweep_cmd);
  std::string sweep_kind;
  std::vector<double> sweep_values;
  sweep_cmd->add_option("--kind", sweep_kind, "batch-size | within-class")->required();
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated values")->required()->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      ts::cmd_synth(synth_flags.resolve(synth_seed), synth_out, std::cout);
    } else if (train_cmd->parsed()) {
      ts::cmd_train(train_flags.resolve(), std::cout);
    } else if (eval_cmd->parsed()) {
      ts::EvalArgs args;
      args.checkpoint = eval_ckpt;
      args.data = ts::DataSource{eval_data, std::nullopt};
      if (!eval_protocol.empty()) args.protocol = ts::parse_eval_protocol(eval_protocol);
      args.k_list = eval_ks;
      args.output_dir = eval_out;
      ts::cmd_eval(args, std::cout);
    } else if (sweep_cmd->parsed()) {
      ts::SweepArgs args;
      args.kind = ts::parse_sweep_kind(sweep_kind);
      args.values = sweep_values;
      args.base = sweep_flags.resolve();
      ts::cmd_sweep(args, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
