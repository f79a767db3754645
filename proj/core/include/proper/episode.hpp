#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "proper/nav_graph.hpp"

namespace proper {

// One instruction-following task: a ground-truth path from start to goal in a
// scene, paired with an instruction token sequence.
struct Episode {
  std::string path_id;
  std::string scan;
  Path path;  // GT p_n, shortest path from start to goal
  double heading = 0.0;  // initial agent heading, radians
  std::vector<int> instruction;

  NodeIndex start() const { return path.front(); }
  NodeIndex goal() const { return path.back(); }
};

// {"path_id", "scan", "path": [id, ...], "heading", "instruction": [int, ...]}
nlohmann::json episode_to_json(const Scene& scene, const Episode& episode);
Episode episode_from_json(const Scene& scene, const nlohmann::json& j);

}  // namespace proper
