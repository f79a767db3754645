#include "proper/nav_graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <queue>

#include "proper/errors.hpp"

namespace proper {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double euclidean(const Position& a, const Position& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Scene::Scene(std::string scan, std::vector<NodeSpec> nodes,
             const std::vector<std::pair<std::string, std::string>>& edges)
    : scan_(std::move(scan)) {
  std::sort(nodes.begin(), nodes.end(), [](const NodeSpec& l, const NodeSpec& r) { return l.id < r.id; });
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (nodes[i].id == nodes[i - 1].id) {
      throw Error(Errc::kParseError, "duplicate node id '" + nodes[i].id + "' in scene " + scan_);
    }
  }
  ids_.reserve(nodes.size());
  for (auto& n : nodes) {
    if (!std::isfinite(n.pos.x) || !std::isfinite(n.pos.y) || !std::isfinite(n.pos.z)) {
      throw Error(Errc::kParseError, "non-finite position for node '" + n.id + "'");
    }
    ids_.push_back(std::move(n.id));
    positions_.push_back(n.pos);
    landmarks_.push_back(n.landmark);
  }
  adjacency_.resize(ids_.size());

  for (const auto& [u_id, v_id] : edges) {
    const NodeIndex u = index(u_id);
    const NodeIndex v = index(v_id);
    if (u == v) throw Error(Errc::kParseError, "self-loop at node '" + u_id + "'");
    if (!(euclidean(position(u), position(v)) > 0.0)) {
      throw Error(Errc::kParseError, "zero-length edge " + u_id + "-" + v_id);
    }
    edges_.push_back(make_edge(u, v));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (const auto& e : edges_) {
    adjacency_[static_cast<std::size_t>(e.a)].push_back(e.b);
    adjacency_[static_cast<std::size_t>(e.b)].push_back(e.a);
  }
  for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
}

std::optional<NodeIndex> Scene::find(std::string_view id) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return std::nullopt;
  return static_cast<NodeIndex>(it - ids_.begin());
}

NodeIndex Scene::index(std::string_view id) const {
  if (auto n = find(id)) return *n;
  throw Error(Errc::kUnknownNode, "node '" + std::string(id) + "' not in scene " + scan_);
}

bool Scene::adjacent(NodeIndex u, NodeIndex v) const {
  if (!contains(u) || !contains(v)) return false;
  const auto adj = neighbors(u);
  return std::binary_search(adj.begin(), adj.end(), v);
}

double Scene::weight(NodeIndex u, NodeIndex v) const {
  if (!adjacent(u, v)) {
    throw Error(Errc::kUnknownEdge, "no edge between nodes " + std::to_string(u) + " and " + std::to_string(v));
  }
  return euclidean(position(u), position(v));
}

SceneView::SceneView(const Scene& scene, std::vector<EdgeKey> removed)
    : scene_(&scene), removed_(std::move(removed)) {
  std::sort(removed_.begin(), removed_.end());
  removed_.erase(std::unique(removed_.begin(), removed_.end()), removed_.end());
}

bool SceneView::is_removed(const EdgeKey& e) const {
  return std::binary_search(removed_.begin(), removed_.end(), e);
}

bool SceneView::adjacent(NodeIndex u, NodeIndex v) const {
  return scene_->adjacent(u, v) && !is_removed(make_edge(u, v));
}

std::vector<NodeIndex> SceneView::neighbors(NodeIndex n) const {
  std::vector<NodeIndex> out;
  for (NodeIndex v : scene_->neighbors(n)) {
    if (!is_removed(make_edge(n, v))) out.push_back(v);
  }
  return out;
}

SceneView SceneView::without(const EdgeKey& e) const {
  auto removed = removed_;
  removed.push_back(e);
  return SceneView(*scene_, std::move(removed));
}

std::vector<double> distances_from(const SceneView& view, NodeIndex source) {
  const Scene& scene = view.scene();
  if (!scene.contains(source)) throw Error(Errc::kUnknownNode, "node index " + std::to_string(source));
  std::vector<double> dist(scene.size(), kInf);
  using Item = std::pair<double, NodeIndex>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;
  dist[static_cast<std::size_t>(source)] = 0.0;
  frontier.emplace(0.0, source);
  while (!frontier.empty()) {
    const auto [d, u] = frontier.top();
    frontier.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    for (NodeIndex v : scene.neighbors(u)) {
      if (view.is_removed(make_edge(u, v))) continue;
      const double nd = d + euclidean(scene.position(u), scene.position(v));
      if (nd < dist[static_cast<std::size_t>(v)]) {
        dist[static_cast<std::size_t>(v)] = nd;
        frontier.emplace(nd, v);
      }
    }
  }
  return dist;
}

Path shortest_path(const SceneView& view, NodeIndex a, NodeIndex b) {
  const Scene& scene = view.scene();
  if (!scene.contains(a)) throw Error(Errc::kUnknownNode, "node index " + std::to_string(a));
  const auto to_goal = distances_from(view, b);
  if (!std::isfinite(to_goal[static_cast<std::size_t>(a)])) {
    throw Error(Errc::kNoPath, scene.id(a) + " -> " + scene.id(b) + " in scene " + scene.scan());
  }
  // Walk from a, always stepping to the smallest-id neighbour that stays on
  // some shortest path; this yields the lexicographically smallest sequence.
  Path path{a};
  NodeIndex cur = a;
  while (cur != b) {
    const double here = to_goal[static_cast<std::size_t>(cur)];
    const double tol = 1e-9 * std::max(1.0, here);
    NodeIndex next = -1;
    for (NodeIndex v : scene.neighbors(cur)) {
      if (view.is_removed(make_edge(cur, v))) continue;
      const double there = to_goal[static_cast<std::size_t>(v)];
      if (there >= here) continue;
      const double w = euclidean(scene.position(cur), scene.position(v));
      if (std::abs(w + there - here) <= tol) {
        next = v;
        break;
      }
    }
    if (next < 0) throw Error(Errc::kNoPath, "shortest-path reconstruction failed");
    path.push_back(next);
    cur = next;
  }
  return path;
}

Path shortest_path(const Scene& scene, NodeIndex a, NodeIndex b, std::optional<EdgeKey> excluded) {
  if (excluded) return shortest_path(SceneView(scene, {*excluded}), a, b);
  return shortest_path(SceneView(scene), a, b);
}

double geodesic_distance(const SceneView& view, NodeIndex a, NodeIndex b) {
  if (a == b) {
    if (!view.scene().contains(a)) throw Error(Errc::kUnknownNode, "node index " + std::to_string(a));
    return 0.0;
  }
  const auto dist = distances_from(view, a);
  if (!view.scene().contains(b)) throw Error(Errc::kUnknownNode, "node index " + std::to_string(b));
  const double d = dist[static_cast<std::size_t>(b)];
  if (!std::isfinite(d)) {
    throw Error(Errc::kNoPath, view.scene().id(a) + " -> " + view.scene().id(b));
  }
  return d;
}

bool reachable(const SceneView& view, NodeIndex src, NodeIndex dst) {
  const Scene& scene = view.scene();
  if (!scene.contains(src) || !scene.contains(dst)) {
    throw Error(Errc::kUnknownNode, "reachability query outside scene " + scene.scan());
  }
  std::vector<char> seen(scene.size(), 0);
  std::deque<NodeIndex> queue{src};
  seen[static_cast<std::size_t>(src)] = 1;
  while (!queue.empty()) {
    const NodeIndex u = queue.front();
    queue.pop_front();
    if (u == dst) return true;
    for (NodeIndex v : scene.neighbors(u)) {
      if (seen[static_cast<std::size_t>(v)] || view.is_removed(make_edge(u, v))) continue;
      seen[static_cast<std::size_t>(v)] = 1;
      queue.push_back(v);
    }
  }
  return false;
}

bool connected_after_deletion(const Scene& scene, const EdgeKey& edge, NodeIndex src, NodeIndex dst) {
  if (!scene.has_edge(edge)) {
    throw Error(Errc::kUnknownEdge, "edge " + std::to_string(edge.a) + "-" + std::to_string(edge.b));
  }
  return reachable(SceneView(scene, {edge}), src, dst);
}

double avg_neighbor_distance(const Scene& scene) {
  if (scene.edges().empty()) throw Error(Errc::kEmptyScene, "scene " + scene.scan() + " has no edges");
  double sum = 0.0;
  for (const auto& e : scene.edges()) sum += euclidean(scene.position(e.a), scene.position(e.b));
  return sum / static_cast<double>(scene.edges().size());
}

double path_length(const SceneView& view, std::span<const NodeIndex> path) {
  if (path.empty()) throw Error(Errc::kInvalidPath, "empty path");
  if (!view.scene().contains(path.front())) throw Error(Errc::kInvalidPath, "unknown start node");
  double total = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!view.adjacent(path[i - 1], path[i])) {
      throw Error(Errc::kInvalidPath, "step " + std::to_string(i - 1) + " is not an edge");
    }
    total += euclidean(view.scene().position(path[i - 1]), view.scene().position(path[i]));
  }
  return total;
}

bool is_connected(const Scene& scene) {
  if (scene.size() <= 1) return true;
  const auto dist = distances_from(SceneView(scene), 0);
  return std::all_of(dist.begin(), dist.end(), [](double d) { return std::isfinite(d); });
}

nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json nodes = nlohmann::json::array();
  for (NodeIndex n = 0; n < static_cast<NodeIndex>(scene.size()); ++n) {
    const auto& p = scene.position(n);
    nlohmann::json node = {{"id", scene.id(n)}, {"pos", {p.x, p.y, p.z}}};
    if (scene.landmark(n) >= 0) node["landmark"] = scene.landmark(n);
    nodes.push_back(std::move(node));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : scene.edges()) edges.push_back({scene.id(e.a), scene.id(e.b)});
  return {{"scan", scene.scan()}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

Scene scene_from_json(const nlohmann::json& j) {
  try {
    std::vector<NodeSpec> nodes;
    for (const auto& node : j.at("nodes")) {
      const auto& pos = node.at("pos");
      if (!pos.is_array() || pos.size() != 3) {
        throw Error(Errc::kParseError, "node 'pos' must have 3 components");
      }
      NodeSpec spec{node.at("id").get<std::string>(),
                    {pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>()},
                    node.value("landmark", -1)};
      nodes.push_back(std::move(spec));
    }
    std::vector<std::pair<std::string, std::string>> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw Error(Errc::kParseError, "edge must be a pair of ids");
      edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
    return Scene(j.at("scan").get<std::string>(), std::move(nodes), edges);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::kParseError, std::string("scene json: ") + ex.what());
  }
}

std::vector<std::string> path_ids(const Scene& scene, std::span<const NodeIndex> path) {
  std::vector<std::string> out;
  out.reserve(path.size());
  for (NodeIndex n : path) out.push_back(scene.id(n));
  return out;
}

Path path_from_ids(const Scene& scene, const std::vector<std::string>& ids) {
  Path out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(scene.index(id));
  return out;
}

}  // namespace proper
