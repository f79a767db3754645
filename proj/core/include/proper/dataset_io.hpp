#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "proper/episode.hpp"
#include "proper/nav_graph.hpp"
#include "proper/perturbation.hpp"

namespace proper {

using SceneMap = std::map<std::string, Scene, std::less<>>;

nlohmann::json read_json(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j);

// Standard R2R connectivity file: an array of viewpoints with `image_id`,
// a row-major 4x4 `pose`, `included`, and a boolean `unobstructed` row.
// Edges are kept only where both directions are unobstructed; one-sided
// links are dropped and reported through `warnings`.
Scene load_scene_r2r(const nlohmann::json& connectivity, const std::string& scan,
                     std::vector<std::string>* warnings = nullptr);
Scene load_scene_r2r(const std::filesystem::path& file, std::vector<std::string>* warnings = nullptr);

// Scene JSON (nav-graph format) or an R2R connectivity file, by content.
Scene load_scene_file(const std::filesystem::path& file, std::vector<std::string>* warnings = nullptr);

// Episode JSON array (worldgen or R2R trajectory records). Records whose scan
// is not loaded are reported through `errors` and skipped.
std::vector<Episode> load_episodes(const nlohmann::json& j, const SceneMap& scenes,
                                   std::vector<std::string>* errors = nullptr);

struct PPEntry {
  Episode episode;
  std::vector<DeletableEdge> deletable;
  std::vector<PerturbedGT> perturbed;  // one per deletable edge, same order

  bool perturbable() const { return !perturbed.empty(); }
};

// Episodes sorted by path id; perturbed references only for episodes with at
// least one deletable edge, but every episode is kept for metadata.
struct PPDataset {
  std::string split;
  std::vector<std::string> scans;
  std::vector<PPEntry> entries;
  std::vector<std::string> errors;

  std::size_t perturbable_count() const;
  const PPEntry* find(const std::string& path_id) const;
};

PPDataset build_pp_dataset(const SceneMap& scenes, const std::vector<Episode>& episodes, std::string split = "train",
                           const DeletionOptions& options = {});

nlohmann::json pp_dataset_to_json(const SceneMap& scenes, const PPDataset& pp);
PPDataset pp_dataset_from_json(const SceneMap& scenes, const nlohmann::json& j);

struct SplitStats {
  std::string split;
  std::size_t trajectories = 0;           // all episodes
  double mean_steps = 0.0;                // nodes per GT path
  double mean_distance = 0.0;             // meters per GT path
  std::size_t perturbable = 0;            // episodes with >= 1 deletable edge
  double pp_mean_steps = 0.0;             // nodes per p_obs, over all positions
  double pp_mean_distance = 0.0;
  std::size_t min_deletable = 0;
  std::size_t max_deletable = 0;
  double mean_deletable = 0.0;
  std::array<double, 3> deletable_hist{};  // [1,2], (2,4], (4,inf)
  std::array<double, 3> positional{};      // beginning, middle, end
};

// Throws EmptyDataset if the dataset has no episodes.
SplitStats compute_stats(const SceneMap& scenes, const PPDataset& pp);

// Which third of an n-node path node i falls in; the middle takes remainders.
int path_part(std::size_t node_index, std::size_t node_count);

nlohmann::json stats_to_json(const SplitStats& s);
std::string stats_to_text(const std::vector<SplitStats>& stats);

}  // namespace proper
