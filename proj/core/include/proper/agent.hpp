#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "proper/autodiff.hpp"
#include "proper/episode.hpp"
#include "proper/nav_graph.hpp"
#include "proper/perturbation.hpp"
#include "proper/rng.hpp"
#include "proper/worldgen.hpp"

namespace proper {

// sin, cos, elevation, distance, is-stop
inline constexpr int kGeoFeatures = 5;

struct ModelConfig {
  int dim = 64;
  int vocab = tokens::vocab_size(40);
};

// Encoder-decoder policy weights. GRU blocks use the (reset, update, new)
// row layout of ad::gru_cell.
struct ModelParams {
  int dim = 0;
  int vocab = 0;
  ad::Matrix embedding;  // d x V, one column per token
  ad::Matrix enc_wx, enc_wh, enc_b;  // 3d x d, 3d x d, 3d x 1
  ad::Matrix dec_wx, dec_wh, dec_b;  // 3d x 3d, 3d x d, 3d x 1
  ad::Matrix obs_w_lm, obs_w_geo, obs_b;  // d x d, d x kGeoFeatures, d x 1
  ad::Matrix att_w;  // d x d, instruction attention query
  ad::Matrix act_w;  // d x 2d, candidate scoring query from [h; context]
  ad::Matrix critic_w, critic_b;  // 1 x d, 1 x 1

  template <typename F>
  void for_each(F&& f) {
    f("embedding", embedding);
    f("enc_wx", enc_wx);
    f("enc_wh", enc_wh);
    f("enc_b", enc_b);
    f("dec_wx", dec_wx);
    f("dec_wh", dec_wh);
    f("dec_b", dec_b);
    f("obs_w_lm", obs_w_lm);
    f("obs_w_geo", obs_w_geo);
    f("obs_b", obs_b);
    f("att_w", att_w);
    f("act_w", act_w);
    f("critic_w", critic_w);
    f("critic_b", critic_b);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each([&](const char* name, ad::Matrix& m) { f(name, std::as_const(m)); });
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
};

using Gradients = ModelParams;

ModelParams zero_params(const ModelConfig& config);
// Uniform in [-1/sqrt(d), 1/sqrt(d)] for every tensor.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Every parameter tensor registered on one tape, as leaves when trainable or
// as constants for inference.
struct ParamVars {
  ParamVars(ad::Tape& tape, const ModelParams& params, bool trainable = true);

  ad::Tape* tape;
  int dim;
  int vocab;
  ad::Var embedding, enc_wx, enc_wh, enc_b, dec_wx, dec_wh, dec_b, obs_w_lm, obs_w_geo, obs_b, att_w, act_w,
      critic_w, critic_b;

  // Gradient of the last backward() pass, laid out like the parameters.
  Gradients gradients() const;
};

struct InstructionContext {
  ad::Var keys;         // d x L, one column per token
  ad::Var final_state;  // d x 1, decoder initial state
};

// Throws UnknownToken for tokens outside the vocabulary or an empty sequence.
InstructionContext encode_instruction(const ParamVars& p, std::span<const int> tokens);

struct AgentState {
  ad::Var hidden;       // h_t
  ad::Var prev_action;  // embedding of the candidate taken last step (zero at t = 0)
  double heading = 0.0;
  NodeIndex node = 0;
};

struct StepOutput {
  ad::Var logits;      // (J+1) x 1
  ad::Var log_probs;   // unmasked log-softmax of the logits
  ad::Var value;       // 1 x 1 critic estimate
  ad::Var candidates;  // d x (J+1) candidate embeddings
  AgentState state;    // hidden updated; prev_action set by commit_action
};

AgentState initial_state(const ParamVars& p, const InstructionContext& ctx, const Episode& episode);
StepOutput step(const ParamVars& p, const AgentState& state, const Observation& obs, const InstructionContext& ctx);
// State for the next step after taking candidate `action` of this step.
AgentState commit_action(const StepOutput& out, int action, NodeIndex next_node, double next_heading);

// Scores candidate actions step by step. The rollout driver owns masking,
// sampling, perturbation events and bookkeeping.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual ad::Tape& tape() = 0;
  virtual void begin(const Scene& scene, const Episode& episode) = 0;
  // Logits ((J+1) x 1) and critic value (1 x 1) at the current node.
  virtual std::pair<ad::Var, ad::Var> score(const Observation& obs, NodeIndex node, double heading) = 0;
  virtual void commit(int action, NodeIndex next_node, double next_heading) = 0;
  virtual ad::Var encoding() = 0;
};

class NeuralPolicy : public Policy {
 public:
  explicit NeuralPolicy(const ParamVars& vars) : vars_(vars) {}

  ad::Tape& tape() override { return *vars_.tape; }
  void begin(const Scene& scene, const Episode& episode) override;
  std::pair<ad::Var, ad::Var> score(const Observation& obs, NodeIndex node, double heading) override;
  void commit(int action, NodeIndex next_node, double next_heading) override;
  ad::Var encoding() override { return state_.hidden; }

 private:
  const ParamVars& vars_;
  std::map<std::string, InstructionContext> contexts_;  // per path id, shared across rollouts on one tape
  const InstructionContext* ctx_ = nullptr;
  AgentState state_;
  StepOutput last_;
};

enum class RolloutMode {
  kTeacher,  // follow a reference path regardless of the policy
  kSample,   // sample from the policy
  kGreedy,   // argmax of the policy
  kMixed,    // teacher-forced prefix, then sampling; supervised by shortest path to goal
};

struct RolloutOptions {
  RolloutMode mode = RolloutMode::kGreedy;
  std::vector<PerturbationEvent> events;
  int max_steps = 15;
  const Path* teacher = nullptr;  // reference path for kTeacher; GT when null
  int teacher_steps = 0;          // kMixed prefix length
};

struct StepRecord {
  NodeIndex node = 0;
  std::vector<NodeIndex> candidates;  // -1 for STOP
  Eigen::VectorXd probs;              // distribution actually acted on (after masking)
  int action = 0;
  int teacher_action = -1;
  int masked_action = -1;
  bool event_fired = false;
  EdgeKey fired_edge{};
  ad::Var log_probs;
  ad::Var log_prob;          // log p_t[action]
  ad::Var teacher_log_prob;  // log p_t[teacher_action] when supervised
  ad::Var value;
  double reward = 0.0;

  std::size_t candidate_count() const { return candidates.size(); }
};

struct RolloutRecord {
  std::string path_id;
  Path nodes;
  std::vector<StepRecord> steps;
  ad::Var encoding;  // final decoder hidden state
  bool stopped = false;  // false: max steps reached
  bool rewards_assigned = false;
  std::vector<PerturbationEvent> fired;

  // Consecutive node pairs actually traversed.
  std::vector<EdgeKey> traversed_edges() const;
};

RolloutRecord rollout(Policy& policy, const Scene& scene, const Episode& episode, const RolloutOptions& options,
                      Rng& rng);

// Teacher-forced decode along `path` (with `events` imposed) returning h_T.
ad::Var encode_path(const ParamVars& p, const Scene& scene, const Episode& episode, const Path& path,
                    const std::vector<PerturbationEvent>& events = {});

}  // namespace proper
