#include "proper/checkpoint.hpp"

#include "proper/dataset_io.hpp"
#include "proper/errors.hpp"

namespace proper {

namespace {

constexpr const char* kFormat = "proper-checkpoint";
constexpr int kVersion = 1;

}  // namespace

nlohmann::json params_to_json(const ModelParams& params) {
  if (!params.all_finite()) throw Error(Errc::kNonFiniteLoss, "refusing to serialise non-finite parameters");
  nlohmann::json tensors = nlohmann::json::array();
  params.for_each([&](const char* name, const ad::Matrix& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}});
  });
  return {{"format", kFormat}, {"version", kVersion}, {"dim", params.dim}, {"vocab", params.vocab},
          {"tensors", std::move(tensors)}};
}

ModelParams params_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat) throw Error(Errc::kParseError, "not a checkpoint file");
    if (j.at("version").get<int>() != kVersion) {
      throw Error(Errc::kParseError, "unsupported checkpoint version " + j.at("version").dump());
    }
    ModelConfig config{j.at("dim").get<int>(), j.at("vocab").get<int>()};
    ModelParams params = zero_params(config);
    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& t : j.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;
    params.for_each([&](const char* name, ad::Matrix& m) {
      const auto it = by_name.find(name);
      if (it == by_name.end()) throw Error(Errc::kParseError, std::string("checkpoint lacks tensor ") + name);
      const nlohmann::json& t = *it->second;
      if (t.at("rows").get<Eigen::Index>() != m.rows() || t.at("cols").get<Eigen::Index>() != m.cols()) {
        throw Error(Errc::kParseError, std::string("shape mismatch for tensor ") + name);
      }
      const auto data = t.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != m.size()) {
        throw Error(Errc::kParseError, std::string("wrong element count for tensor ") + name);
      }
      std::copy(data.begin(), data.end(), m.data());
    });
    if (by_name.size() != 14) throw Error(Errc::kParseError, "checkpoint carries unknown tensors");
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParseError, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const nlohmann::json& trainer) {
  nlohmann::json j = params_to_json(params);
  if (!trainer.is_null()) j["trainer"] = trainer;
  write_json_atomic(path, j);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json j = read_json(path);
  Checkpoint c{params_from_json(j), nullptr};
  if (j.contains("trainer")) c.trainer = j.at("trainer");
  return c;
}

}  // namespace proper
