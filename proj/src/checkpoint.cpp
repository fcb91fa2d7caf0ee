#include "tripletsearch/checkpoint.hpp"

#include <fstream>

#include "tripletsearch/errors.hpp"

namespace tripletsearch {

using nlohmann::json;

namespace {

json block(std::vector<std::size_t> shape, const std::vector<double>& data) {
  return json{{"shape", std::move(shape)}, {"data", data}};
}

void read_block(const json& params, const std::string& key, std::vector<std::size_t> shape,
                std::vector<double>& out) {
  if (!params.contains(key)) throw ParseError("checkpoint is missing parameter '" + key + "'");
  const auto& b = params.at(key);
  if (b.at("shape").get<std::vector<std::size_t>>() != shape)
    throw ParseError("checkpoint parameter '" + key + "' has unexpected shape");
  auto data = b.at("data").get<std::vector<double>>();
  if (data.size() != out.size())
    throw ParseError("checkpoint parameter '" + key + "' has wrong element count");
  if (!all_finite(data)) throw ParseError("checkpoint parameter '" + key + "' is not finite");
  out = std::move(data);
}

}  // namespace

json checkpoint_to_json(const Checkpoint& ckpt) {
  const auto& m = ckpt.model;
  json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["arch"] = to_string(m.arch());
  doc["input_dim"] = m.input_dim();
  if (m.arch() == Architecture::MLP1) doc["hidden_dim"] = m.hidden_dim();
  doc["output_dim"] = m.output_dim();
  doc["seed"] = m.seed();
  json params = json::object();
  for (const auto& layer : m.layers()) {
    params[layer.name + ".weight"] = block({layer.weight.rows, layer.weight.cols}, layer.weight.data);
    params[layer.name + ".bias"] = block({layer.bias.size()}, layer.bias);
  }
  doc["params"] = std::move(params);
  doc["metadata"] = ckpt.metadata;
  return doc;
}

Checkpoint checkpoint_from_json(const json& doc) {
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion)
      throw ParseError("unsupported checkpoint format_version " + std::to_string(version));
    const auto arch = parse_architecture(doc.at("arch").get<std::string>());
    const auto input_dim = doc.at("input_dim").get<std::size_t>();
    const auto output_dim = doc.at("output_dim").get<std::size_t>();
    const std::size_t hidden_dim =
        arch == Architecture::MLP1 ? doc.at("hidden_dim").get<std::size_t>() : 0;
    EmbeddingModel model(arch, input_dim, hidden_dim, output_dim);
    model.set_seed(doc.value("seed", std::uint64_t{0}));
    const auto& params = doc.at("params");
    for (auto& layer : model.layers()) {
      read_block(params, layer.name + ".weight", {layer.weight.rows, layer.weight.cols},
                 layer.weight.data);
      read_block(params, layer.name + ".bias", {layer.bias.size()}, layer.bias);
    }
    Checkpoint ckpt{std::move(model), doc.value("metadata", json::object())};
    return ckpt;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  } catch (const UsageError& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << checkpoint_to_json(ckpt).dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace tripletsearch
