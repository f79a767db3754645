#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "proper/episode.hpp"
#include "proper/nav_graph.hpp"

namespace proper {

// A GT edge (c_t, c_{t+1}) that can be cut without stranding the agent.
struct DeletableEdge {
  std::string path_id;
  int t = 0;  // position of c_t in the GT path
  NodeIndex from = 0;
  NodeIndex to = 0;

  EdgeKey edge() const { return make_edge(from, to); }
  bool operator==(const DeletableEdge&) const = default;
};

// Reference path after the edge at step t has been cut: GT prefix up to c_t,
// the shortest detour to the rejoin node m, then the GT suffix from m.
struct PerturbedGT {
  std::string path_id;
  int t = 0;
  NodeIndex from = 0;
  NodeIndex to = 0;
  NodeIndex detour = 0;  // m
  Path path_obs;

  EdgeKey edge() const { return make_edge(from, to); }
  bool operator==(const PerturbedGT&) const = default;
};

// An edge cut that fires when an agent tries to traverse it.
struct PerturbationEvent {
  int t = 0;
  NodeIndex from = 0;
  NodeIndex to = 0;

  EdgeKey edge() const { return make_edge(from, to); }
  bool operator==(const PerturbationEvent&) const = default;
};

enum class ReachabilityCheck {
  kCurrentToGoal,  // connectivity(c_t, goal), as in the collection pseudocode
  kStartToGoal,    // connectivity(start, goal)
};

struct DeletionOptions {
  ReachabilityCheck check = ReachabilityCheck::kCurrentToGoal;
};

// Collects the GT edges that can be deleted: removal must keep the goal
// reachable, and some other neighbour of c_t must lie closer than r to c_{t+1},
// with r the scene's mean edge length. Ordered by t.
std::vector<DeletableEdge> collect_deletable_edges(const Scene& scene, const Episode& episode,
                                                   const DeletionOptions& options = {});

PerturbedGT build_perturbed_gt(const Scene& scene, const Episode& episode, const DeletableEdge& edge);

// Throws UnknownEdge if the edge is not in the view.
SceneView apply_event(const SceneView& view, const PerturbationEvent& event);

PerturbationEvent to_event(const DeletableEdge& edge);
PerturbationEvent to_event(const PerturbedGT& gt);

// {"path_id", "t", "edge": [id, id], "m": id, "path_obs": [id, ...]}
nlohmann::json perturbed_gt_to_json(const Scene& scene, const PerturbedGT& gt);
PerturbedGT perturbed_gt_from_json(const Scene& scene, const nlohmann::json& j);

}  // namespace proper
