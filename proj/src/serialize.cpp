#include "fedsim/serialize.hpp"

#include <fstream>

#include "fedsim/format.hpp"

namespace fedsim {

namespace {

std::string kind_name(TensorKind k) {
  return k == TensorKind::weight ? "weight" : "bias";
}

TensorKind kind_from_name(const std::string& s) {
  if (s == "weight") return TensorKind::weight;
  if (s == "bias") return TensorKind::bias;
  throw SchemaError("unknown tensor kind '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const ParameterSet& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerTensor& t : p.layers()) {
    nlohmann::json shape = nlohmann::json::array();
    for (Eigen::Index d : t.shape) shape.push_back(d);
    nlohmann::json values = nlohmann::json::array();
    for (Eigen::Index k = 0; k < t.values.size(); ++k) values.push_back(t.values[k]);
    layers.push_back({{"layer_id", t.layer_id},
                      {"kind", kind_name(t.kind)},
                      {"shape", shape},
                      {"values", values}});
  }
  return {{"layers", layers}, {"checksum", format_hex_u64(checksum(p))}};
}

ParameterSet parameter_set_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("layers") || !j["layers"].is_array())
    throw SchemaError("parameter set JSON must hold a 'layers' array");
  std::vector<LayerTensor> layers;
  try {
    for (const auto& lj : j["layers"]) {
      LayerTensor t;
      t.layer_id = lj.at("layer_id").get<std::string>();
      t.kind = kind_from_name(lj.at("kind").get<std::string>());
      for (const auto& d : lj.at("shape")) t.shape.push_back(d.get<Eigen::Index>());
      const auto& vals = lj.at("values");
      t.values.resize(static_cast<Eigen::Index>(vals.size()));
      Eigen::Index k = 0;
      for (const auto& v : vals) t.values[k++] = v.get<double>();
      layers.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed parameter set JSON: ") + e.what());
  }
  ParameterSet p(std::move(layers));
  if (j.contains("checksum")) {
    const std::uint64_t want = std::stoull(j["checksum"].get<std::string>(), nullptr, 16);
    if (want != checksum(p))
      throw SchemaError("parameter set checksum mismatch");
  }
  return p;
}

void save_parameter_set(const std::filesystem::path& path, const ParameterSet& p) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << to_json(p).dump(2) << "\n";
}

ParameterSet load_parameter_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return parameter_set_from_json(j);
}

}  // namespace fedsim
