#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace proper {

struct Position {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

double euclidean(const Position& a, const Position& b);

// Index into a Scene's node table. Node tables are sorted by string id, so
// comparing indices is the same as comparing ids lexicographically.
using NodeIndex = int;

using Path = std::vector<NodeIndex>;

// Undirected edge, stored with a < b.
struct EdgeKey {
  NodeIndex a = 0;
  NodeIndex b = 0;

  auto operator<=>(const EdgeKey&) const = default;
};

inline EdgeKey make_edge(NodeIndex u, NodeIndex v) { return u < v ? EdgeKey{u, v} : EdgeKey{v, u}; }

struct NodeSpec {
  std::string id;
  Position pos;
  int landmark = -1;  // -1 when the source carries no landmark annotation
};

// Immutable navigation connectivity graph. Edge weights are the Euclidean
// distances between endpoint positions.
class Scene {
 public:
  Scene() = default;
  Scene(std::string scan, std::vector<NodeSpec> nodes,
        const std::vector<std::pair<std::string, std::string>>& edges);

  const std::string& scan() const { return scan_; }
  std::size_t size() const { return ids_.size(); }

  const std::string& id(NodeIndex n) const { return ids_.at(static_cast<std::size_t>(n)); }
  std::optional<NodeIndex> find(std::string_view id) const;
  NodeIndex index(std::string_view id) const;  // throws UnknownNode

  const Position& position(NodeIndex n) const { return positions_.at(static_cast<std::size_t>(n)); }
  int landmark(NodeIndex n) const { return landmarks_.at(static_cast<std::size_t>(n)); }

  // Sorted by index.
  std::span<const NodeIndex> neighbors(NodeIndex n) const { return adjacency_.at(static_cast<std::size_t>(n)); }
  bool adjacent(NodeIndex u, NodeIndex v) const;
  bool has_edge(const EdgeKey& e) const { return adjacent(e.a, e.b); }
  double weight(NodeIndex u, NodeIndex v) const;  // throws UnknownEdge

  // Sorted, each undirected edge once.
  const std::vector<EdgeKey>& edges() const { return edges_; }

  bool contains(NodeIndex n) const { return n >= 0 && static_cast<std::size_t>(n) < ids_.size(); }

 private:
  std::string scan_;
  std::vector<std::string> ids_;
  std::vector<Position> positions_;
  std::vector<int> landmarks_;
  std::vector<std::vector<NodeIndex>> adjacency_;
  std::vector<EdgeKey> edges_;
};

// Read-only overlay of a scene with a set of edges removed. The underlying
// scene is never touched; dropping the view restores the original graph.
class SceneView {
 public:
  SceneView(const Scene& scene) : scene_(&scene) {}  // NOLINT(google-explicit-constructor)
  SceneView(const Scene& scene, std::vector<EdgeKey> removed);

  const Scene& scene() const { return *scene_; }
  std::span<const EdgeKey> removed_edges() const { return removed_; }

  bool is_removed(const EdgeKey& e) const;
  bool adjacent(NodeIndex u, NodeIndex v) const;
  std::vector<NodeIndex> neighbors(NodeIndex n) const;

  // Returns a view with one more edge removed (idempotent).
  SceneView without(const EdgeKey& e) const;

 private:
  const Scene* scene_;
  std::vector<EdgeKey> removed_;  // sorted, unique
};

// Minimum-weight path; ties resolved towards the lexicographically smallest
// node sequence. Throws NoPath if b is unreachable.
Path shortest_path(const SceneView& view, NodeIndex a, NodeIndex b);
Path shortest_path(const Scene& scene, NodeIndex a, NodeIndex b, std::optional<EdgeKey> excluded);

// Single-source Dijkstra distances; unreachable nodes hold +inf.
std::vector<double> distances_from(const SceneView& view, NodeIndex source);

double geodesic_distance(const SceneView& view, NodeIndex a, NodeIndex b);

bool reachable(const SceneView& view, NodeIndex src, NodeIndex dst);

// Reachability with `edge` removed. Throws UnknownEdge if the edge is absent.
bool connected_after_deletion(const Scene& scene, const EdgeKey& edge, NodeIndex src, NodeIndex dst);

// Mean of all edge weights. Throws EmptyScene when there are no edges.
double avg_neighbor_distance(const Scene& scene);

// Sum of consecutive edge weights. Throws InvalidPath on a non-adjacent pair.
double path_length(const SceneView& view, std::span<const NodeIndex> path);

bool is_connected(const Scene& scene);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

std::vector<std::string> path_ids(const Scene& scene, std::span<const NodeIndex> path);
Path path_from_ids(const Scene& scene, const std::vector<std::string>& ids);

}  // namespace proper
