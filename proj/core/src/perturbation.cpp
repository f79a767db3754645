#include "proper/perturbation.hpp"

#include <cmath>
#include <limits>

#include "proper/errors.hpp"

namespace proper {

namespace {

void validate_gt(const Scene& scene, const Episode& episode) {
  if (episode.path.size() < 2) {
    throw Error(Errc::kInvalidEpisode, "episode " + episode.path_id + " needs at least two GT nodes");
  }
  try {
    path_length(SceneView(scene), episode.path);
  } catch (const Error& ex) {
    throw Error(Errc::kInvalidEpisode, "episode " + episode.path_id + ": " + ex.what());
  }
}

}  // namespace

std::vector<DeletableEdge> collect_deletable_edges(const Scene& scene, const Episode& episode,
                                                   const DeletionOptions& options) {
  validate_gt(scene, episode);
  const double r = avg_neighbor_distance(scene);
  const NodeIndex goal = episode.goal();

  std::vector<DeletableEdge> out;
  for (std::size_t t = 0; t + 1 < episode.path.size(); ++t) {
    const NodeIndex cur = episode.path[t];
    const NodeIndex next = episode.path[t + 1];
    const NodeIndex src = options.check == ReachabilityCheck::kCurrentToGoal ? cur : episode.start();
    // delete e, test, recover e: the overlay never touches the scene itself.
    if (!connected_after_deletion(scene, make_edge(cur, next), src, goal)) continue;

    bool has_close_alternative = false;
    for (NodeIndex u : scene.neighbors(cur)) {
      if (u == next) continue;
      if (euclidean(scene.position(u), scene.position(next)) < r) {
        has_close_alternative = true;
        break;
      }
    }
    if (!has_close_alternative) continue;
    out.push_back({episode.path_id, static_cast<int>(t), cur, next});
  }
  return out;
}

PerturbedGT build_perturbed_gt(const Scene& scene, const Episode& episode, const DeletableEdge& edge) {
  validate_gt(scene, episode);
  const auto t = static_cast<std::size_t>(edge.t);
  if (edge.t < 0 || t + 1 >= episode.path.size() || episode.path[t] != edge.from ||
      episode.path[t + 1] != edge.to) {
    throw Error(Errc::kInvalidEpisode, "edge at t=" + std::to_string(edge.t) + " is not on the GT of " +
                                           episode.path_id);
  }

  const SceneView view(scene, {edge.edge()});
  const auto dist = distances_from(view, edge.from);

  // m ranges over the GT suffix from c_{t+1}. Scanning goal-first and only
  // replacing on a strict improvement keeps the candidate nearest the goal on
  // ties; suffix nodes are distinct, so no further tie-break is reached.
  std::size_t best = 0;
  double best_len = std::numeric_limits<double>::infinity();
  for (std::size_t i = episode.path.size() - 1; i >= t + 1; --i) {
    const double d = dist[static_cast<std::size_t>(episode.path[i])];
    const double tol = 1e-9 * std::max(1.0, std::isfinite(best_len) ? best_len : 1.0);
    if (std::isfinite(d) && d < best_len - tol) {
      best_len = d;
      best = i;
    }
  }
  if (!std::isfinite(best_len)) {
    throw Error(Errc::kNoDetour, "no rejoin node reachable after cutting t=" + std::to_string(edge.t) + " of " +
                                     episode.path_id);
  }

  const NodeIndex m = episode.path[best];
  const Path detour = shortest_path(view, edge.from, m);

  PerturbedGT gt{episode.path_id, edge.t, edge.from, edge.to, m, {}};
  gt.path_obs.assign(episode.path.begin(), episode.path.begin() + static_cast<std::ptrdiff_t>(t) + 1);
  gt.path_obs.insert(gt.path_obs.end(), detour.begin() + 1, detour.end());
  gt.path_obs.insert(gt.path_obs.end(), episode.path.begin() + static_cast<std::ptrdiff_t>(best) + 1,
                     episode.path.end());
  return gt;
}

SceneView apply_event(const SceneView& view, const PerturbationEvent& event) {
  if (!view.scene().has_edge(event.edge())) {
    throw Error(Errc::kUnknownEdge, "perturbation edge " + std::to_string(event.from) + "-" +
                                        std::to_string(event.to) + " not in scene " + view.scene().scan());
  }
  return view.without(event.edge());
}

PerturbationEvent to_event(const DeletableEdge& edge) { return {edge.t, edge.from, edge.to}; }
PerturbationEvent to_event(const PerturbedGT& gt) { return {gt.t, gt.from, gt.to}; }

nlohmann::json perturbed_gt_to_json(const Scene& scene, const PerturbedGT& gt) {
  return {{"path_id", gt.path_id},
          {"t", gt.t},
          {"edge", {scene.id(gt.from), scene.id(gt.to)}},
          {"m", scene.id(gt.detour)},
          {"path_obs", path_ids(scene, gt.path_obs)}};
}

PerturbedGT perturbed_gt_from_json(const Scene& scene, const nlohmann::json& j) {
  try {
    PerturbedGT gt;
    gt.path_id = j.at("path_id").get<std::string>();
    gt.t = j.at("t").get<int>();
    const auto& edge = j.at("edge");
    if (!edge.is_array() || edge.size() != 2) throw Error(Errc::kParseError, "'edge' must be a pair");
    gt.from = scene.index(edge[0].get<std::string>());
    gt.to = scene.index(edge[1].get<std::string>());
    gt.detour = scene.index(j.at("m").get<std::string>());
    gt.path_obs = path_from_ids(scene, j.at("path_obs").get<std::vector<std::string>>());
    return gt;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::kParseError, std::string("perturbed gt json: ") + ex.what());
  }
}

}  // namespace proper
