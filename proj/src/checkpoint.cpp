#include "attnpool/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "attnpool/datasets.hpp"
#include "json_util.hpp"

namespace attnpool {

using nlohmann::json;

json checkpoint_to_json(const Model& model, const json& metadata) {
  json params = json::object();
  const ParamStore& store = model.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Matrix& m = store.at(i);
    params[store.name(i)] = json{{"shape", json::array({m.rows(), m.cols()})}, {"values", m.values()}};
  }
  return json{{"format_version", kCheckpointFormatVersion},
              {"model", model.config().to_json()},
              {"params", std::move(params)},
              {"metadata", metadata}};
}

Model model_from_checkpoint(const json& j) {
  detail::StrictObject o(j, "checkpoint");
  if (o.get<int>("format_version") != kCheckpointFormatVersion)
    throw std::invalid_argument("checkpoint: unsupported format_version");
  const ModelConfig cfg = ModelConfig::from_json(o.raw("model"));
  const json& params = o.raw("params");
  o.raw("metadata");
  o.finish();
  if (!params.is_object()) throw std::invalid_argument("checkpoint: 'params' must be an object");

  ParamStore values;
  for (auto it = params.begin(); it != params.end(); ++it) {
    detail::StrictObject p(it.value(), "checkpoint param '" + it.key() + "'");
    const auto shape = p.get<std::vector<std::size_t>>("shape");
    auto data = p.get<std::vector<double>>("values");
    p.finish();
    if (shape.size() != 2) throw std::invalid_argument("checkpoint param '" + it.key() + "': shape must be [rows, cols]");
    values.add(it.key(), Matrix(shape[0], shape[1], std::move(data)));
  }
  return Model(cfg, values);
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const json& metadata) {
  write_file_atomic(path, checkpoint_to_json(model, metadata).dump() + "\n");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed checkpoint JSON: " + e.what());
  }
  return model_from_checkpoint(j);
}

}  // namespace attnpool
