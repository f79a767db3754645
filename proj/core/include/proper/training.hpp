#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "proper/agent.hpp"
#include "proper/dataset_io.hpp"

namespace proper {

inline constexpr double kSuccessRadius = 3.0;

struct LossWeights {
  double il = 0.2;                  // lambda_1
  double contrast_free = 1.0;       // lambda_2
  double contrast_perturbed = 1.0;  // lambda_3
  double tau = 0.1;
  double gamma = 0.9;
  // Detach positives and negatives so only the anchor receives gradient.
  bool stop_gradient_targets = false;

  // Throws ConfigError unless tau > 0, weights >= 0 and gamma in [0, 1].
  void validate() const;
};

// Progress towards the goal for a move, or the terminal bonus for STOP:
// +2 within `radius` of the goal, -2 otherwise.
double reward(const SceneView& view, NodeIndex goal, NodeIndex from, NodeIndex to, bool stop,
              double radius = kSuccessRadius);

// Fills StepRecord::reward. Progress is measured on the scene with every
// fired edge removed; the terminal test uses the original scene.
void assign_rewards(const Scene& scene, const Episode& episode, RolloutRecord& record,
                    double radius = kSuccessRadius);

// Discounted returns R_t = r_t + gamma R_{t+1}, with R = 0 past the last step.
std::vector<double> discounted_returns(const RolloutRecord& record, double gamma);

// Sum over steps of -log p_t[teacher action]. Throws LengthMismatch when the
// record did not walk `teacher` step for step.
ad::Var il_loss(const RolloutRecord& record, const Path& teacher);
// Same sum over whichever steps carry a teacher action.
ad::Var il_loss(const RolloutRecord& record);

// Advantage actor-critic surrogate: sum_t -log p_t[a_t] (R_t - v_t) with the
// critic value detached, plus 0.5 sum_t (v_t - R_t)^2. Throws MissingRewards.
ad::Var rl_loss(const RolloutRecord& record, double gamma);

// -log(exp(s_p / tau) / (exp(s_p / tau) + sum_n exp(s_n / tau))) with cosine
// similarities. An empty negative set gives 0. Throws ZeroNormVector.
ad::Var info_nce(const ad::Var& anchor, const ad::Var& positive, std::span<const ad::Var> negatives, double tau);

// Intra term plus inter term; each is 0 when its negative set is empty.
ad::Var contrastive_free(const ad::Var& e_f, const ad::Var& e_g, std::span<const ad::Var> intra,
                         std::span<const ad::Var> inter, double tau);
ad::Var contrastive_perturbed(const ad::Var& e_p, const ad::Var& e_og, std::span<const ad::Var> intra,
                              std::span<const ad::Var> inter, double tau);

struct PoolEntry {
  PerturbedGT gt;
  std::int64_t iteration = 0;  // when it was inserted
};

// Perturbed references unlocked so far, keyed by (path id, cut edge).
// Entries are kept in insertion order and never removed.
class PerturbedPool {
 public:
  bool contains(const std::string& path_id, const EdgeKey& edge) const;
  // False when the key is already present.
  bool insert(const PerturbedGT& gt, std::int64_t iteration);

  const std::vector<PoolEntry>& entries() const { return entries_; }
  std::vector<const PoolEntry*> entries_for(const std::string& path_id) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t episode_count() const { return per_episode_.size(); }
  bool has_episode(const std::string& path_id) const { return per_episode_.count(path_id) != 0; }

 private:
  std::vector<PoolEntry> entries_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> per_episode_;
};

// Deletable GT edges of `entry` that the rollout traversed (either direction)
// and that are not pooled yet, in GT order.
std::vector<DeletableEdge> matched_edges(const RolloutRecord& record, const PPEntry& entry,
                                         const PerturbedPool& pool);

// Path ids of the episodes with at least one newly matched edge.
std::vector<std::string> match_gt(std::span<const RolloutRecord> rollouts, std::span<const PPEntry* const> entries,
                                  const PerturbedPool& pool);

enum class TrainMode {
  kBaseline,          // IL + RL only, no pool
  kProper,            // IL + RL + both contrastive terms with the progressive pool
  kTeacherToStudent,  // IL with a shrinking teacher-forced prefix
};

enum class OptimizerKind {
  kSgd,   // plain SGD, no momentum
  kAdam,
};

std::string to_string(TrainMode mode);
std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& s);  // throws ConfigError
TrainMode train_mode_from_string(const std::string& s);  // throws ConfigError

struct TrainConfig {
  TrainMode mode = TrainMode::kProper;
  LossWeights weights;
  ModelConfig model;
  std::int64_t iterations = 20000;
  int batch_size = 4;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double learning_rate = 1e-2;
  double clip_norm = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int max_steps = 15;
  std::uint64_t seed = 0;
  // Progressive pool in kProper; off gives plain IL + RL plus whichever
  // contrastive terms need no pool.
  bool use_pool = true;

  // Weights actually used: the contrastive terms are switched off outside
  // kProper.
  LossWeights effective_weights() const;
  bool uses_pool() const { return mode == TrainMode::kProper && use_pool; }
  // Teacher-forced prefix length for kTeacherToStudent at `iteration`:
  // unlimited, 4, 2 and 0 over four equal quarters of the budget.
  int teacher_steps(std::int64_t iteration) const;
  void validate() const;  // throws ConfigError
};

struct PoolInsertion {
  std::string path_id;
  std::string scan;
  int t = 0;
  EdgeKey edge;
  Path rollout;  // the sample rollout that traversed the edge
};

struct LossReport {
  std::int64_t iteration = 0;
  double total = 0.0;
  double rl = 0.0;
  double il = 0.0;
  double contrast_free = 0.0;
  double contrast_perturbed = 0.0;
  double grad_norm = 0.0;
  std::size_t pool_size = 0;
  std::size_t pool_episodes = 0;
  double pool_proportion = 0.0;  // pooled episodes / perturbable episodes
  std::vector<PoolInsertion> inserted;
};

// Node ids are resolved through `scenes` when given, else written as indices.
nlohmann::json loss_report_to_json(const LossReport& r, const SceneMap* scenes = nullptr);

// Losses of one iteration as graph nodes on the parameters' tape, each
// already divided by the batch size, and the pool insertions the matching
// step proposes. `pool` is read only; insertions are applied by the caller.
struct IterationLosses {
  ad::Var total, rl, il, contrast_free, contrast_perturbed;
  std::vector<PoolInsertion> inserted;
  std::vector<PerturbedGT> inserted_gt;
  // The sampled rollouts behind the RL term, in the order they were added.
  std::vector<RolloutRecord> rl_records;
};

IterationLosses build_iteration_losses(const ParamVars& vars, const SceneMap& scenes, const PPDataset& data,
                                       std::span<const std::size_t> batch, const PerturbedPool& pool,
                                       const TrainConfig& config, std::int64_t iteration);

// Adam moments; unused by SGD.
struct OptimizerState {
  std::int64_t steps = 0;
  ModelParams m, v;
};

nlohmann::json optimizer_state_to_json(const OptimizerState& s);
OptimizerState optimizer_state_from_json(const nlohmann::json& j);

// Applies one optimizer step to `params` in place.
void apply_update(ModelParams& params, const Gradients& g, const TrainConfig& config, OptimizerState& state);

// One gradient step on `params` and the pool update. Throws NonFiniteLoss
// with the iteration number; neither params nor pool change in that case.
LossReport train_iteration(ModelParams& params, const SceneMap& scenes, const PPDataset& data,
                           std::span<const std::size_t> batch, PerturbedPool& pool, const TrainConfig& config,
                           std::int64_t iteration, OptimizerState& optimizer);

// Scales `g` so its global L2 norm is at most `clip`; returns the norm before
// clipping.
double clip_gradients(Gradients& g, double clip);

class Trainer {
 public:
  Trainer(const SceneMap& scenes, const PPDataset& data, TrainConfig config, ModelParams params);

  // Runs the next iteration.
  LossReport step();

  std::int64_t iteration() const { return iteration_; }
  const ModelParams& params() const { return params_; }
  const PerturbedPool& pool() const { return pool_; }
  const TrainConfig& config() const { return config_; }
  const OptimizerState& optimizer() const { return optimizer_; }

  // Dataset positions for an iteration: consecutive slices of per-epoch
  // permutations drawn from the seed.
  std::vector<std::size_t> batch_indices(std::int64_t iteration) const;

  // {"iteration", "mode", "seed", "pool": [{"path_id", "t", "iteration"}],
  //  "optimizer": {...}}
  nlohmann::json state_to_json() const;
  // Restores iteration counter and pool; throws ParseError on mismatch.
  void restore(ModelParams params, const nlohmann::json& state);

 private:
  const SceneMap& scenes_;
  const PPDataset& data_;
  TrainConfig config_;
  ModelParams params_;
  PerturbedPool pool_;
  OptimizerState optimizer_;
  std::int64_t iteration_ = 0;
};

}  // namespace proper
