#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "proper/episode.hpp"
#include "proper/nav_graph.hpp"

namespace proper {

namespace tokens {

inline constexpr int kLeft = 0;
inline constexpr int kRight = 1;
inline constexpr int kStraight = 2;
inline constexpr int kUp = 3;
inline constexpr int kDown = 4;
inline constexpr int kStop = 5;
inline constexpr int kLandmarkBase = 6;

inline constexpr int landmark(int id) { return kLandmarkBase + id; }
inline constexpr bool is_landmark(int token) { return token >= kLandmarkBase; }
inline constexpr int vocab_size(int landmark_count) { return kLandmarkBase + landmark_count; }

}  // namespace tokens

struct WorldConfig {
  int nodes = 40;
  double radius = 4.2;    // connection radius, meters
  double extent = 20.0;   // side of the square placement box, meters
  int landmarks = 40;     // landmark vocabulary size
  int min_hops = 4;
  int max_hops = 6;
  std::uint64_t seed = 0;
  std::string scan;       // empty: derived from the seed
  int max_retries = 2000;

  // Throws ConfigError when the hop range falls outside [2, nodes - 1].
  void validate_hops() const;
};

// Random geometric graph on the plane, regenerated until connected.
Scene generate_scene(const WorldConfig& config);

// Samples a start/goal pair whose shortest path has a hop count inside the
// configured range and builds the matching instruction.
Episode sample_episode(const Scene& scene, const WorldConfig& config, std::uint64_t seed, std::string path_id);

// Heading of the straight line a -> b in the horizontal plane (atan2(dy, dx)).
double bearing(const Position& a, const Position& b);
double elevation(const Position& a, const Position& b);
// Wraps into (-pi, pi].
double wrap_angle(double a);

// LEFT/RIGHT outside +-45 degrees of the current heading, STRAIGHT within.
int direction_token(double relative_heading, double relative_elevation = 0.0);

// (direction, landmark) per GT step followed by STOP; 2 * hops + 1 tokens.
std::vector<int> make_instruction(const Scene& scene, const Path& path, double heading);

struct Candidate {
  NodeIndex node = -1;  // -1 for the STOP candidate
  int landmark = -1;
  double sin_heading = 0.0;
  double cos_heading = 0.0;
  double elevation = 0.0;
  double distance = 0.0;

  bool is_stop() const { return node < 0; }
};

// Panoramic observation abstraction: one candidate per navigable neighbour,
// sorted by node id, with STOP last.
struct Observation {
  std::vector<Candidate> candidates;

  std::size_t size() const { return candidates.size(); }
  int index_of(NodeIndex node) const;
  int stop_index() const { return static_cast<int>(candidates.size()) - 1; }
};

Observation observe(const SceneView& view, NodeIndex current, double heading);

}  // namespace proper
