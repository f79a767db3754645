#include "proper/worldgen.hpp"

#include <cmath>
#include <numbers>

#include "proper/errors.hpp"
#include "proper/rng.hpp"

namespace proper {

void WorldConfig::validate_hops() const {
  if (min_hops < 2 || max_hops < min_hops || max_hops > nodes - 1) {
    throw Error(Errc::kConfigError, "hop range [" + std::to_string(min_hops) + ", " + std::to_string(max_hops) +
                                        "] must lie within [2, " + std::to_string(nodes - 1) + "]");
  }
}

Scene generate_scene(const WorldConfig& config) {
  if (config.nodes < 1) throw Error(Errc::kConfigError, "node count must be positive");
  if (!(config.radius > 0.0) || !(config.extent > 0.0)) {
    throw Error(Errc::kConfigError, "radius and extent must be positive");
  }
  if (config.landmarks < 1) throw Error(Errc::kConfigError, "landmark vocabulary must be non-empty");

  Rng rng(derive_seed(config.seed, "scene"));
  const auto n = static_cast<std::size_t>(config.nodes);
  const std::string scan = config.scan.empty() ? "synth-" + std::to_string(config.seed) : config.scan;
  const int width = static_cast<int>(std::to_string(config.nodes - 1).size());

  std::vector<int> landmarks(n);
  for (std::size_t i = 0; i < n; ++i) landmarks[i] = static_cast<int>(i % static_cast<std::size_t>(config.landmarks));
  rng.shuffle(landmarks.begin(), landmarks.end());

  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    std::vector<NodeSpec> nodes(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::string id = std::to_string(i);
      id.insert(0, static_cast<std::size_t>(width) - id.size(), '0');
      nodes[i] = {"n" + id, {rng.uniform(0.0, config.extent), rng.uniform(0.0, config.extent), 0.0}, landmarks[i]};
    }
    std::vector<std::pair<std::string, std::string>> edges;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (euclidean(nodes[i].pos, nodes[j].pos) < config.radius) edges.emplace_back(nodes[i].id, nodes[j].id);
      }
    }
    Scene scene(scan, std::move(nodes), edges);
    if (is_connected(scene)) return scene;
  }
  throw Error(Errc::kGenerationFailed, "no connected scene after " + std::to_string(config.max_retries) +
                                           " attempts (nodes=" + std::to_string(config.nodes) + ")");
}

Episode sample_episode(const Scene& scene, const WorldConfig& config, std::uint64_t seed, std::string path_id) {
  config.validate_hops();
  Rng rng(seed);
  std::vector<NodeIndex> starts(scene.size());
  for (std::size_t i = 0; i < starts.size(); ++i) starts[i] = static_cast<NodeIndex>(i);
  rng.shuffle(starts.begin(), starts.end());

  for (NodeIndex start : starts) {
    std::vector<Path> candidates;
    for (NodeIndex goal = 0; goal < static_cast<NodeIndex>(scene.size()); ++goal) {
      if (goal == start) continue;
      Path p;
      try {
        p = shortest_path(SceneView(scene), start, goal);
      } catch (const Error&) {
        continue;
      }
      const int hops = static_cast<int>(p.size()) - 1;
      if (hops >= config.min_hops && hops <= config.max_hops) candidates.push_back(std::move(p));
    }
    if (candidates.empty()) continue;
    Episode ep;
    ep.path_id = std::move(path_id);
    ep.scan = scene.scan();
    ep.path = std::move(candidates[rng.below(candidates.size())]);
    ep.heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
    ep.instruction = make_instruction(scene, ep.path, ep.heading);
    return ep;
  }
  throw Error(Errc::kNoValidPair, "no start/goal pair with " + std::to_string(config.min_hops) + "-" +
                                      std::to_string(config.max_hops) + " hops in scene " + scene.scan());
}

double bearing(const Position& a, const Position& b) { return std::atan2(b.y - a.y, b.x - a.x); }

double elevation(const Position& a, const Position& b) {
  return std::atan2(b.z - a.z, std::hypot(b.x - a.x, b.y - a.y));
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

int direction_token(double relative_heading, double relative_elevation) {
  constexpr double kQuarter = std::numbers::pi / 4.0;
  // Steep links only exist in multi-floor scenes; planar worlds never emit these.
  if (relative_elevation > kQuarter) return tokens::kUp;
  if (relative_elevation < -kQuarter) return tokens::kDown;
  const double rel = wrap_angle(relative_heading);
  if (rel > kQuarter) return tokens::kLeft;
  if (rel < -kQuarter) return tokens::kRight;
  return tokens::kStraight;
}

std::vector<int> make_instruction(const Scene& scene, const Path& path, double heading) {
  std::vector<int> out;
  out.reserve(2 * path.size() + 1);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const auto& here = scene.position(path[i]);
    const auto& next = scene.position(path[i + 1]);
    const double b = bearing(here, next);
    out.push_back(direction_token(b - heading, elevation(here, next)));
    const int lm = scene.landmark(path[i + 1]);
    if (lm >= 0) out.push_back(tokens::landmark(lm));
    heading = b;
  }
  out.push_back(tokens::kStop);
  return out;
}

int Observation::index_of(NodeIndex node) const {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].node == node) return static_cast<int>(i);
  }
  return -1;
}

Observation observe(const SceneView& view, NodeIndex current, double heading) {
  const Scene& scene = view.scene();
  Observation obs;
  const auto& here = scene.position(current);
  for (NodeIndex v : view.neighbors(current)) {
    const auto& there = scene.position(v);
    const double rel = wrap_angle(bearing(here, there) - heading);
    obs.candidates.push_back({v, scene.landmark(v), std::sin(rel), std::cos(rel), elevation(here, there),
                              euclidean(here, there)});
  }
  obs.candidates.push_back(Candidate{});
  return obs;
}

}  // namespace proper
