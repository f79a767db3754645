#include "proper/episode.hpp"

#include "proper/errors.hpp"

namespace proper {

nlohmann::json episode_to_json(const Scene& scene, const Episode& episode) {
  return {{"path_id", episode.path_id},
          {"scan", episode.scan},
          {"path", path_ids(scene, episode.path)},
          {"heading", episode.heading},
          {"instruction", episode.instruction}};
}

Episode episode_from_json(const Scene& scene, const nlohmann::json& j) {
  try {
    Episode ep;
    ep.path_id = j.at("path_id").is_string() ? j.at("path_id").get<std::string>()
                                              : std::to_string(j.at("path_id").get<long long>());
    ep.scan = j.at("scan").get<std::string>();
    if (ep.scan != scene.scan()) {
      throw Error(Errc::kParseError, "episode " + ep.path_id + " belongs to scan " + ep.scan);
    }
    ep.path = path_from_ids(scene, j.at("path").get<std::vector<std::string>>());
    ep.heading = j.value("heading", 0.0);
    if (j.contains("instruction") && j.at("instruction").is_array()) {
      ep.instruction = j.at("instruction").get<std::vector<int>>();
    }
    if (ep.path.empty()) throw Error(Errc::kInvalidEpisode, "episode " + ep.path_id + " has an empty path");
    return ep;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::kParseError, std::string("episode json: ") + ex.what());
  }
}

}  // namespace proper
