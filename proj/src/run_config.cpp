#include "tripletsearch/run_config.hpp"

#include <fstream>

#include "tripletsearch/errors.hpp"

namespace tripletsearch {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Dataset load(const DataSource& source) {
  if (source.path && source.synth)
    throw ConfigError("a data source is either a file path or a synthetic config, not both");
  if (source.path) return load_dataset(*source.path);
  if (source.synth) return generate_synthetic(*source.synth);
  throw ConfigError("no dataset given (use a CSV path or a synthetic preset)");
}

RunData prepare(RunConfig& cfg) {
  validate(cfg.train);
  if (cfg.data.synth) validate(*cfg.data.synth, true);
  if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0))
    throw ConfigError("holdout_fraction must lie in [0, 1)");
  if (cfg.eval_data && cfg.holdout_fraction > 0.0)
    throw ConfigError("holdout_fraction and a separate evaluation dataset are mutually exclusive");

  Dataset full = load(cfg.data);
  std::optional<RunData> data;
  if (cfg.eval_data) {
    data.emplace(RunData{std::move(full), load(*cfg.eval_data)});
  } else if (cfg.holdout_fraction > 0.0) {
    auto split = split_by_item(full, cfg.holdout_fraction, cfg.split_seed);
    data.emplace(RunData{std::move(split.train), std::move(split.test)});
  } else {
    Dataset copy = full;
    data.emplace(RunData{std::move(full), std::move(copy)});
  }
  if (data->train.input_dim() != data->eval.input_dim())
    throw ConfigError("training and evaluation datasets have different feature dimensions");
  validate_pair_mode(data->train, cfg.train.pair_mode);
  if (!cfg.protocol)
    cfg.protocol = data->eval.has_domain(Domain::Query) && data->eval.has_domain(Domain::Catalog)
                       ? EvalProtocol::CrossDomain
                       : EvalProtocol::SinglePool;
  validate_protocol(data->eval, *cfg.protocol);
  cfg.train.eval_protocol = *cfg.protocol;
  return std::move(*data);
}

ordered_json to_json(const SynthConfig& cfg) {
  ordered_json j;
  j["n_classes"] = cfg.n_classes;
  j["items_per_class"] = cfg.items_per_class;
  j["images_per_item"] = cfg.images_per_item;
  j["dim"] = cfg.dim;
  j["class_spread"] = cfg.class_spread;
  j["item_spread"] = cfg.item_spread;
  j["image_noise"] = cfg.image_noise;
  j["nuisance_dim"] = cfg.nuisance_dim;
  j["nuisance_noise"] = cfg.nuisance_noise;
  j["two_domain"] = cfg.two_domain;
  j["seed"] = cfg.seed;
  return j;
}

SynthConfig synth_config_from_json(const json& j, SynthConfig cfg) {
  if (j.contains("preset")) {
    const auto seed = cfg.seed;
    cfg = synth_preset(j.at("preset").get<std::string>());
    cfg.seed = seed;
  }
  read_if(j, "n_classes", cfg.n_classes);
  read_if(j, "items_per_class", cfg.items_per_class);
  read_if(j, "images_per_item", cfg.images_per_item);
  read_if(j, "dim", cfg.dim);
  read_if(j, "class_spread", cfg.class_spread);
  read_if(j, "item_spread", cfg.item_spread);
  read_if(j, "image_noise", cfg.image_noise);
  read_if(j, "nuisance_dim", cfg.nuisance_dim);
  read_if(j, "nuisance_noise", cfg.nuisance_noise);
  read_if(j, "two_domain", cfg.two_domain);
  read_if(j, "seed", cfg.seed);
  return cfg;
}

ordered_json to_json(const SamplerConfig& cfg) {
  ordered_json j;
  j["batch_pairs"] = cfg.batch_pairs;
  j["within_class_fraction"] = cfg.within_class_fraction;
  j["negatives_from_anchors"] = cfg.negatives_from_anchors;
  j["negatives"] = to_string(cfg.negatives);
  j["seed"] = cfg.seed;
  return j;
}

SamplerConfig sampler_config_from_json(const json& j, SamplerConfig cfg) {
  read_if(j, "batch_pairs", cfg.batch_pairs);
  read_if(j, "within_class_fraction", cfg.within_class_fraction);
  read_if(j, "negatives_from_anchors", cfg.negatives_from_anchors);
  if (j.contains("negatives")) cfg.negatives = parse_negative_strategy(j.at("negatives").get<std::string>());
  read_if(j, "seed", cfg.seed);
  return cfg;
}

ordered_json to_json(const TrainConfig& cfg) {
  ordered_json j;
  j["margin"] = cfg.margin;
  j["sampler"] = to_json(cfg.sampler);
  j["pair_mode"] = to_string(cfg.pair_mode);
  j["steps"] = cfg.steps;
  j["optimizer"] = {{"kind", "sgd-momentum"}, {"lr", cfg.optimizer.lr}, {"momentum", cfg.optimizer.momentum}};
  ordered_json model;
  model["arch"] = to_string(cfg.model.arch);
  model["hidden_dim"] = cfg.model.hidden_dim;
  model["output_dim"] = cfg.model.output_dim;
  j["model"] = std::move(model);
  j["eval_every"] = cfg.eval_every;
  j["eval_protocol"] = to_string(cfg.eval_protocol);
  j["k_list"] = cfg.k_list;
  j["seed"] = cfg.seed;
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
  read_if(j, "margin", cfg.margin);
  if (j.contains("sampler")) cfg.sampler = sampler_config_from_json(j.at("sampler"), cfg.sampler);
  if (j.contains("pair_mode")) cfg.pair_mode = parse_pair_mode(j.at("pair_mode").get<std::string>());
  read_if(j, "steps", cfg.steps);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    if (o.value("kind", std::string("sgd-momentum")) != "sgd-momentum")
      throw ConfigError("only the sgd-momentum optimizer is supported");
    read_if(o, "lr", cfg.optimizer.lr);
    read_if(o, "momentum", cfg.optimizer.momentum);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    if (m.contains("arch")) cfg.model.arch = parse_architecture(m.at("arch").get<std::string>());
    read_if(m, "hidden_dim", cfg.model.hidden_dim);
    read_if(m, "output_dim", cfg.model.output_dim);
  }
  read_if(j, "eval_every", cfg.eval_every);
  if (j.contains("eval_protocol"))
    cfg.eval_protocol = parse_eval_protocol(j.at("eval_protocol").get<std::string>());
  read_if(j, "k_list", cfg.k_list);
  read_if(j, "seed", cfg.seed);
  return cfg;
}

ordered_json to_json(const DataSource& src) {
  ordered_json j = ordered_json::object();
  if (src.path) j["path"] = src.path->string();
  if (src.synth) j["synth"] = to_json(*src.synth);
  return j;
}

DataSource data_source_from_json(const json& j) {
  DataSource src;
  if (j.is_string()) {
    src.path = j.get<std::string>();
    return src;
  }
  for (const auto& [key, value] : j.items())
    if (key != "path" && key != "synth") throw ConfigError("unknown data source key '" + key + "'");
  if (j.contains("path")) src.path = j.at("path").get<std::string>();
  if (j.contains("synth")) src.synth = synth_config_from_json(j.at("synth"));
  return src;
}

ordered_json to_json(const RunConfig& cfg) {
  ordered_json j;
  j["data"] = to_json(cfg.data);
  if (cfg.eval_data) j["eval_data"] = to_json(*cfg.eval_data);
  j["holdout_fraction"] = cfg.holdout_fraction;
  j["split_seed"] = cfg.split_seed;
  j["train"] = to_json(cfg.train);
  if (cfg.protocol) j["protocol"] = to_string(*cfg.protocol);
  j["output_dir"] = cfg.output_dir.string();
  return j;
}

RunConfig run_config_from_json(const json& j, RunConfig cfg) {
  try {
    if (j.contains("data")) cfg.data = data_source_from_json(j.at("data"));
    if (j.contains("eval_data")) cfg.eval_data = data_source_from_json(j.at("eval_data"));
    read_if(j, "holdout_fraction", cfg.holdout_fraction);
    read_if(j, "split_seed", cfg.split_seed);
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"), cfg.train);
    if (j.contains("protocol")) cfg.protocol = parse_eval_protocol(j.at("protocol").get<std::string>());
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace tripletsearch
