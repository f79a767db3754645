#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "proper/agent.hpp"
#include "proper/dataset_io.hpp"
#include "proper/training.hpp"

namespace proper {

enum class EvalMode {
  kPerturbationFree,
  kPerturbationBased,
};

std::string to_string(EvalMode mode);
EvalMode eval_mode_from_string(const std::string& s);  // "per-free" / "per-based"; throws ConfigError

struct EvalProtocol {
  EvalMode mode = EvalMode::kPerturbationFree;
  double success_radius = kSuccessRadius;
  std::uint64_t seed = 0;
  RolloutMode decode = RolloutMode::kGreedy;  // kGreedy or kSample
  int max_steps = 15;
  // Per-based stress mode: every deletable edge of the episode is cut on
  // attempt instead of one designated edge.
  bool multi_perturbation = false;
};

struct EpisodeMetrics {
  std::string path_id;
  double tl = 0.0;
  double ne = 0.0;
  bool success = false;
  double spl = 0.0;
  double reference_length = 0.0;
  bool perturbed = false;        // an edge was designated for this episode
  bool event_fired = false;
  bool fallback_free = false;    // per-based requested but no deletable edge
  int designated_t = -1;
  bool stopped = false;
};

struct Metrics {
  double tl = 0.0;
  double ne = 0.0;
  double sr = 0.0;
  double spl = 0.0;
  std::size_t episodes = 0;
};

struct EvalReport {
  EvalProtocol protocol;
  std::string split;
  Metrics metrics;
  std::vector<EpisodeMetrics> rows;  // sorted by path id
};

// TL and NE on the original scene; success iff NE <= radius;
// SPL = success * L_ref / max(TL, L_ref).
EpisodeMetrics score_episode(const Scene& scene, const Episode& episode, const RolloutRecord& record,
                             const EvalProtocol& protocol, double reference_length);

// Means over rows, accumulated in path id order.
Metrics aggregate(std::vector<EpisodeMetrics> rows);

// Builds a policy on a fresh tape for each episode.
using PolicyFactory = std::function<std::unique_ptr<Policy>(ad::Tape& tape)>;

// Throws EmptyDataset.
EvalReport evaluate(const PolicyFactory& factory, const SceneMap& scenes, const PPDataset& data,
                    const EvalProtocol& protocol);
EvalReport evaluate(const ModelParams& params, const SceneMap& scenes, const PPDataset& data,
                    const EvalProtocol& protocol);

nlohmann::json eval_report_to_json(const EvalReport& report);

}  // namespace proper
