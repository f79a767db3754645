#include "proper/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "proper/checkpoint.hpp"
#include "proper/errors.hpp"

namespace proper {

void LossWeights::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(Errc::kConfigError, "tau must be positive");
  for (double w : {il, contrast_free, contrast_perturbed}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(Errc::kConfigError, "loss weights must be non-negative");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(Errc::kConfigError, "gamma must lie in [0, 1]");
}

double reward(const SceneView& view, NodeIndex goal, NodeIndex from, NodeIndex to, bool stop, double radius) {
  if (stop) return geodesic_distance(view, from, goal) <= radius ? 2.0 : -2.0;
  return geodesic_distance(view, from, goal) - geodesic_distance(view, to, goal);
}

void assign_rewards(const Scene& scene, const Episode& episode, RolloutRecord& record, double radius) {
  std::vector<EdgeKey> removed;
  for (const auto& e : record.fired) removed.push_back(e.edge());
  const SceneView cut(scene, removed);
  const auto d_cut = distances_from(cut, episode.goal());
  const auto d_full = distances_from(SceneView(scene), episode.goal());
  for (auto& st : record.steps) {
    const NodeIndex next = st.candidates.at(static_cast<std::size_t>(st.action));
    const auto here = static_cast<std::size_t>(st.node);
    if (next < 0) {
      st.reward = d_full[here] <= radius ? 2.0 : -2.0;
      continue;
    }
    const auto there = static_cast<std::size_t>(next);
    // A step into a pocket the cut separated from the goal has no finite
    // distance on the cut graph; fall back to the original one.
    const auto& d = std::isfinite(d_cut[here]) && std::isfinite(d_cut[there]) ? d_cut : d_full;
    st.reward = d[here] - d[there];
  }
  record.rewards_assigned = true;
}

std::vector<double> discounted_returns(const RolloutRecord& record, double gamma) {
  std::vector<double> out(record.steps.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = record.steps.size(); i-- > 0;) {
    acc = record.steps[i].reward + gamma * acc;
    out[i] = acc;
  }
  return out;
}

namespace {

ad::Tape& tape_of(const RolloutRecord& record) {
  if (record.steps.empty()) throw Error(Errc::kLengthMismatch, "rollout has no steps");
  return record.steps.front().log_prob.tape();
}

}  // namespace

ad::Var il_loss(const RolloutRecord& record, const Path& teacher) {
  if (record.nodes != teacher || record.steps.size() != teacher.size()) {
    throw Error(Errc::kLengthMismatch, "rollout of " + std::to_string(record.steps.size()) +
                                           " steps does not follow a teacher path of " +
                                           std::to_string(teacher.size()) + " nodes");
  }
  for (const auto& st : record.steps) {
    if (st.teacher_action < 0) throw Error(Errc::kLengthMismatch, "step without a teacher action");
  }
  return il_loss(record);
}

ad::Var il_loss(const RolloutRecord& record) {
  ad::Tape& tape = tape_of(record);
  ad::Var total = tape.constant(0.0);
  for (const auto& st : record.steps) {
    if (st.teacher_action >= 0) total = ad::sub(total, st.teacher_log_prob);
  }
  return total;
}

ad::Var rl_loss(const RolloutRecord& record, double gamma) {
  if (!record.rewards_assigned) throw Error(Errc::kMissingRewards, "rollout " + record.path_id + " has no rewards");
  ad::Tape& tape = tape_of(record);
  const auto returns = discounted_returns(record, gamma);
  ad::Var total = tape.constant(0.0);
  for (std::size_t i = 0; i < record.steps.size(); ++i) {
    const StepRecord& st = record.steps[i];
    const double advantage = returns[i] - st.value.scalar();
    total = ad::add(total, ad::scale(st.log_prob, -advantage));
    total = ad::add(total, ad::scale(ad::square(ad::add_scalar(st.value, -returns[i])), 0.5));
  }
  return total;
}

ad::Var info_nce(const ad::Var& anchor, const ad::Var& positive, std::span<const ad::Var> negatives, double tau) {
  if (negatives.empty()) return anchor.tape().constant(0.0);
  std::vector<ad::Var> sims;
  sims.reserve(negatives.size() + 1);
  sims.push_back(ad::scale(ad::cosine(anchor, positive), 1.0 / tau));
  for (const auto& n : negatives) sims.push_back(ad::scale(ad::cosine(anchor, n), 1.0 / tau));
  return ad::sub(ad::logsumexp(ad::concat_rows(sims)), sims.front());
}

ad::Var contrastive_free(const ad::Var& e_f, const ad::Var& e_g, std::span<const ad::Var> intra,
                         std::span<const ad::Var> inter, double tau) {
  return ad::add(info_nce(e_f, e_g, intra, tau), info_nce(e_f, e_g, inter, tau));
}

ad::Var contrastive_perturbed(const ad::Var& e_p, const ad::Var& e_og, std::span<const ad::Var> intra,
                              std::span<const ad::Var> inter, double tau) {
  return ad::add(info_nce(e_p, e_og, intra, tau), info_nce(e_p, e_og, inter, tau));
}

bool PerturbedPool::contains(const std::string& path_id, const EdgeKey& edge) const {
  const auto it = per_episode_.find(path_id);
  if (it == per_episode_.end()) return false;
  return std::any_of(it->second.begin(), it->second.end(),
                     [&](std::size_t i) { return entries_[i].gt.edge() == edge; });
}

bool PerturbedPool::insert(const PerturbedGT& gt, std::int64_t iteration) {
  if (contains(gt.path_id, gt.edge())) return false;
  per_episode_[gt.path_id].push_back(entries_.size());
  entries_.push_back({gt, iteration});
  return true;
}

std::vector<const PoolEntry*> PerturbedPool::entries_for(const std::string& path_id) const {
  std::vector<const PoolEntry*> out;
  const auto it = per_episode_.find(path_id);
  if (it == per_episode_.end()) return out;
  for (std::size_t i : it->second) out.push_back(&entries_[i]);
  return out;
}

std::vector<DeletableEdge> matched_edges(const RolloutRecord& record, const PPEntry& entry,
                                         const PerturbedPool& pool) {
  const auto traversed = record.traversed_edges();
  const std::set<EdgeKey> seen(traversed.begin(), traversed.end());
  std::vector<DeletableEdge> out;
  for (const auto& d : entry.deletable) {
    if (seen.count(d.edge()) && !pool.contains(entry.episode.path_id, d.edge())) out.push_back(d);
  }
  return out;
}

std::vector<std::string> match_gt(std::span<const RolloutRecord> rollouts, std::span<const PPEntry* const> entries,
                                  const PerturbedPool& pool) {
  if (rollouts.size() != entries.size()) throw Error(Errc::kLengthMismatch, "one rollout per episode expected");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    if (!matched_edges(rollouts[i], *entries[i], pool).empty()) out.push_back(entries[i]->episode.path_id);
  }
  return out;
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kBaseline: return "baseline";
    case TrainMode::kProper: return "proper";
    case TrainMode::kTeacherToStudent: return "teacher2student";
  }
  return "unknown";
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw Error(Errc::kConfigError, "unknown optimizer '" + s + "'");
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "baseline") return TrainMode::kBaseline;
  if (s == "proper") return TrainMode::kProper;
  if (s == "teacher2student") return TrainMode::kTeacherToStudent;
  throw Error(Errc::kConfigError, "unknown training mode '" + s + "'");
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (mode != TrainMode::kProper) {
    w.contrast_free = 0.0;
    w.contrast_perturbed = 0.0;
  }
  return w;
}

int TrainConfig::teacher_steps(std::int64_t iteration) const {
  const std::int64_t quarter = std::max<std::int64_t>(1, iterations / 4);
  switch (std::min<std::int64_t>(iteration / quarter, 3)) {
    case 0: return std::numeric_limits<int>::max();
    case 1: return 4;
    case 2: return 2;
    default: return 0;
  }
}

void TrainConfig::validate() const {
  weights.validate();
  if (iterations < 0) throw Error(Errc::kConfigError, "iterations must be non-negative");
  if (batch_size < 1) throw Error(Errc::kConfigError, "batch size must be positive");
  if (!(learning_rate > 0.0)) throw Error(Errc::kConfigError, "learning rate must be positive");
  if (!(clip_norm > 0.0)) throw Error(Errc::kConfigError, "clip norm must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_epsilon > 0.0)) {
    throw Error(Errc::kConfigError, "Adam betas must lie in [0, 1) and epsilon must be positive");
  }
  if (max_steps < 1) throw Error(Errc::kConfigError, "max steps must be positive");
  if (model.dim < 1 || model.vocab < 1) throw Error(Errc::kConfigError, "model dim and vocab must be positive");
}

nlohmann::json loss_report_to_json(const LossReport& r, const SceneMap* scenes) {
  nlohmann::json inserted = nlohmann::json::array();
  for (const auto& ins : r.inserted) {
    nlohmann::json j{{"path_id", ins.path_id}, {"t", ins.t}};
    const Scene* scene = nullptr;
    if (scenes != nullptr) {
      const auto it = scenes->find(ins.scan);
      if (it != scenes->end()) scene = &it->second;
    }
    if (scene != nullptr) {
      j["edge"] = {scene->id(ins.edge.a), scene->id(ins.edge.b)};
      j["rollout"] = path_ids(*scene, ins.rollout);
    } else {
      j["edge"] = {ins.edge.a, ins.edge.b};
      j["rollout"] = ins.rollout;
    }
    inserted.push_back(std::move(j));
  }
  return {{"iteration", r.iteration},
          {"total", r.total},
          {"rl", r.rl},
          {"il", r.il},
          {"contrast_free", r.contrast_free},
          {"contrast_perturbed", r.contrast_perturbed},
          {"grad_norm", r.grad_norm},
          {"pool_size", r.pool_size},
          {"pool_episodes", r.pool_episodes},
          {"pool_proportion", r.pool_proportion},
          {"inserted", std::move(inserted)}};
}

namespace {

const Scene& scene_for(const SceneMap& scenes, const Episode& episode) {
  const auto it = scenes.find(episode.scan);
  if (it == scenes.end()) throw Error(Errc::kInvalidEpisode, "episode " + episode.path_id + " refers to unknown scan");
  return it->second;
}

RolloutOptions teacher_options(const Path& path, std::vector<PerturbationEvent> events = {}) {
  RolloutOptions o;
  o.mode = RolloutMode::kTeacher;
  o.teacher = &path;
  o.events = std::move(events);
  return o;
}

// Per-episode work of one iteration.
struct Slot {
  const PPEntry* entry = nullptr;
  const Scene* scene = nullptr;
  RolloutRecord teacher;
  RolloutRecord sample;
  std::vector<std::optional<RolloutRecord>> positions;  // teacher rollouts along each p_obs, on demand
};

}  // namespace

IterationLosses build_iteration_losses(const ParamVars& vars, const SceneMap& scenes, const PPDataset& data,
                                       std::span<const std::size_t> batch, const PerturbedPool& pool,
                                       const TrainConfig& config, std::int64_t iteration) {
  ad::Tape& tape = *vars.tape;
  const LossWeights w = config.effective_weights();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  NeuralPolicy policy(vars);
  Rng unused(0);

  IterationLosses out;
  ad::Var rl = tape.constant(0.0);
  ad::Var il = tape.constant(0.0);
  ad::Var lf = tape.constant(0.0);
  ad::Var lp = tape.constant(0.0);

  std::vector<Slot> slots(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    slots[b].entry = &data.entries.at(batch[b]);
    slots[b].scene = &scene_for(scenes, slots[b].entry->episode);
    slots[b].positions.resize(slots[b].entry->perturbed.size());
  }

  if (config.mode == TrainMode::kTeacherToStudent) {
    for (auto& s : slots) {
      const Episode& ep = s.entry->episode;
      RolloutOptions o;
      o.mode = RolloutMode::kMixed;
      o.max_steps = config.max_steps;
      o.teacher_steps = config.teacher_steps(iteration);
      Rng rng(derive_seed(config.seed, "t2s:" + ep.path_id, static_cast<std::uint64_t>(iteration)));
      s.sample = rollout(policy, *s.scene, ep, o, rng);
      il = ad::add(il, il_loss(s.sample));
    }
    out.il = ad::scale(il, inv_batch);
    out.rl = tape.constant(0.0);
    out.contrast_free = tape.constant(0.0);
    out.contrast_perturbed = tape.constant(0.0);
    out.total = out.il;
    return out;
  }

  auto target = [&](const ad::Var& v) { return w.stop_gradient_targets ? ad::stop_gradient(v) : v; };
  auto position = [&](Slot& s, std::size_t k) -> RolloutRecord& {
    if (!s.positions[k]) {
      const PerturbedGT& gt = s.entry->perturbed[k];
      s.positions[k] = rollout(policy, *s.scene, s.entry->episode, teacher_options(gt.path_obs, {to_event(gt)}), unused);
    }
    return *s.positions[k];
  };
  auto inter_for = [&](std::size_t b) {
    std::vector<ad::Var> v;
    for (std::size_t o = 0; o < slots.size(); ++o) {
      if (o != b) v.push_back(target(slots[o].sample.encoding));
    }
    return v;
  };

  // Perturbation-free phase.
  for (auto& s : slots) {
    const Episode& ep = s.entry->episode;
    s.teacher = rollout(policy, *s.scene, ep, teacher_options(ep.path), unused);
    il = ad::add(il, il_loss(s.teacher, ep.path));

    RolloutOptions o;
    o.mode = RolloutMode::kSample;
    o.max_steps = config.max_steps;
    Rng rng(derive_seed(config.seed, "free:" + ep.path_id, static_cast<std::uint64_t>(iteration)));
    s.sample = rollout(policy, *s.scene, ep, o, rng);
    assign_rewards(*s.scene, ep, s.sample);
    rl = ad::add(rl, rl_loss(s.sample, w.gamma));
    out.rl_records.push_back(s.sample);
  }
  if (w.contrast_free > 0.0) {
    for (std::size_t b = 0; b < slots.size(); ++b) {
      Slot& s = slots[b];
      std::vector<ad::Var> intra;
      for (std::size_t k = 0; k < s.positions.size(); ++k) intra.push_back(target(position(s, k).encoding));
      const auto inter = inter_for(b);
      lf = ad::add(lf, contrastive_free(s.sample.encoding, target(s.teacher.encoding), intra, inter, w.tau));
    }
  }

  // Matching: newly traversed deletable GT edges unlock perturbed references.
  PerturbedPool grown = pool;
  if (config.uses_pool()) {
    for (auto& s : slots) {
      const Episode& ep = s.entry->episode;
      const auto matched = matched_edges(s.sample, *s.entry, grown);
      if (matched.empty()) continue;
      Rng rng(derive_seed(config.seed, "match:" + ep.path_id, static_cast<std::uint64_t>(iteration)));
      const DeletableEdge& pick = matched[rng.below(matched.size())];
      const auto it = std::find_if(s.entry->perturbed.begin(), s.entry->perturbed.end(),
                                   [&](const PerturbedGT& g) { return g.t == pick.t; });
      if (it == s.entry->perturbed.end()) throw Error(Errc::kInvalidEpisode, "no perturbed reference for a deletable edge");
      if (grown.insert(*it, iteration)) {
        out.inserted.push_back({ep.path_id, ep.scan, it->t, it->edge(), s.sample.nodes});
        out.inserted_gt.push_back(*it);
      }
    }

    // Perturbation-based phase for batch episodes already in the pool.
    for (std::size_t b = 0; b < slots.size(); ++b) {
      Slot& s = slots[b];
      const Episode& ep = s.entry->episode;
      const auto pooled = grown.entries_for(ep.path_id);
      if (pooled.empty()) continue;
      Rng pick(derive_seed(config.seed, "pool:" + ep.path_id, static_cast<std::uint64_t>(iteration)));
      const PerturbedGT& gt = pooled[pick.below(pooled.size())]->gt;
      const auto chosen = static_cast<std::size_t>(
          std::find(s.entry->perturbed.begin(), s.entry->perturbed.end(), gt) - s.entry->perturbed.begin());
      if (chosen >= s.positions.size()) throw Error(Errc::kInvalidEpisode, "pool entry not in the dataset");

      RolloutRecord& ref = position(s, chosen);
      il = ad::add(il, il_loss(ref, gt.path_obs));

      RolloutOptions o;
      o.mode = RolloutMode::kSample;
      o.max_steps = config.max_steps;
      o.events = {to_event(gt)};
      Rng rng(derive_seed(config.seed, "perturbed:" + ep.path_id, static_cast<std::uint64_t>(iteration)));
      RolloutRecord perturbed = rollout(policy, *s.scene, ep, o, rng);
      assign_rewards(*s.scene, ep, perturbed);
      rl = ad::add(rl, rl_loss(perturbed, w.gamma));
      out.rl_records.push_back(perturbed);

      if (w.contrast_perturbed > 0.0) {
        std::vector<ad::Var> intra;
        for (std::size_t k = 0; k < s.positions.size(); ++k) {
          if (k != chosen) intra.push_back(target(position(s, k).encoding));
        }
        const auto inter = inter_for(b);
        lp = ad::add(lp, contrastive_perturbed(perturbed.encoding, target(ref.encoding), intra, inter, w.tau));
      }
    }
  }

  out.rl = ad::scale(rl, inv_batch);
  out.il = ad::scale(il, inv_batch);
  out.contrast_free = ad::scale(lf, inv_batch);
  out.contrast_perturbed = ad::scale(lp, inv_batch);
  ad::Var total = out.rl;
  if (w.il > 0.0) total = ad::add(total, ad::scale(out.il, w.il));
  if (w.contrast_free > 0.0) total = ad::add(total, ad::scale(out.contrast_free, w.contrast_free));
  if (w.contrast_perturbed > 0.0) total = ad::add(total, ad::scale(out.contrast_perturbed, w.contrast_perturbed));
  out.total = total;
  return out;
}

namespace {

std::vector<ad::Matrix*> tensors(ModelParams& p) {
  std::vector<ad::Matrix*> out;
  p.for_each([&](const char*, ad::Matrix& m) { out.push_back(&m); });
  return out;
}

}  // namespace

double clip_gradients(Gradients& g, double clip) {
  double sq = 0.0;
  g.for_each([&](const char*, const ad::Matrix& m) { sq += m.squaredNorm(); });
  const double norm = std::sqrt(sq);
  if (norm > clip) {
    const double s = clip / norm;
    g.for_each([&](const char*, ad::Matrix& m) { m *= s; });
  }
  return norm;
}

nlohmann::json optimizer_state_to_json(const OptimizerState& s) {
  nlohmann::json j{{"steps", s.steps}};
  if (s.m.dim > 0) {
    j["m"] = params_to_json(s.m);
    j["v"] = params_to_json(s.v);
  }
  return j;
}

OptimizerState optimizer_state_from_json(const nlohmann::json& j) {
  OptimizerState s;
  s.steps = j.at("steps").get<std::int64_t>();
  if (j.contains("m")) {
    s.m = params_from_json(j.at("m"));
    s.v = params_from_json(j.at("v"));
  }
  return s;
}

void apply_update(ModelParams& params, const Gradients& g, const TrainConfig& config, OptimizerState& state) {
  auto dst = tensors(params);
  auto src = tensors(const_cast<Gradients&>(g));
  if (config.optimizer == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] -= config.learning_rate * *src[i];
    ++state.steps;
    return;
  }
  if (state.m.dim == 0) {
    state.m = zero_params({params.dim, params.vocab});
    state.v = zero_params({params.dim, params.vocab});
  }
  ++state.steps;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
  auto m = tensors(state.m);
  auto v = tensors(state.v);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    *m[i] = b1 * *m[i] + (1.0 - b1) * *src[i];
    *v[i] = b2 * *v[i] + (1.0 - b2) * src[i]->cwiseAbs2();
    dst[i]->array() -=
        config.learning_rate * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + config.adam_epsilon);
  }
}

LossReport train_iteration(ModelParams& params, const SceneMap& scenes, const PPDataset& data,
                           std::span<const std::size_t> batch, PerturbedPool& pool, const TrainConfig& config,
                           std::int64_t iteration, OptimizerState& optimizer) {
  if (batch.empty()) throw Error(Errc::kEmptyDataset, "empty batch");
  ad::Tape tape;
  const ParamVars vars(tape, params, true);
  const IterationLosses losses = build_iteration_losses(vars, scenes, data, batch, pool, config, iteration);
  const double total = losses.total.scalar();
  if (!std::isfinite(total)) {
    throw Error(Errc::kNonFiniteLoss, "non-finite loss at iteration " + std::to_string(iteration));
  }
  tape.backward(losses.total);
  Gradients g = vars.gradients();
  if (!g.all_finite()) throw Error(Errc::kNonFiniteLoss, "non-finite gradient at iteration " + std::to_string(iteration));
  const double norm = clip_gradients(g, config.clip_norm);

  ModelParams next = params;
  OptimizerState next_opt = optimizer;
  apply_update(next, g, config, next_opt);
  if (!next.all_finite()) {
    throw Error(Errc::kNonFiniteLoss, "non-finite parameters after iteration " + std::to_string(iteration));
  }
  params = std::move(next);
  optimizer = std::move(next_opt);
  for (const auto& gt : losses.inserted_gt) pool.insert(gt, iteration);

  LossReport r;
  r.iteration = iteration;
  r.total = total;
  r.rl = losses.rl.scalar();
  r.il = losses.il.scalar();
  r.contrast_free = losses.contrast_free.scalar();
  r.contrast_perturbed = losses.contrast_perturbed.scalar();
  r.grad_norm = norm;
  r.pool_size = pool.size();
  r.pool_episodes = pool.episode_count();
  const std::size_t perturbable = data.perturbable_count();
  r.pool_proportion = perturbable == 0 ? 0.0 : static_cast<double>(pool.episode_count()) / static_cast<double>(perturbable);
  r.inserted = losses.inserted;
  return r;
}

Trainer::Trainer(const SceneMap& scenes, const PPDataset& data, TrainConfig config, ModelParams params)
    : scenes_(scenes), data_(data), config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  if (data_.entries.empty()) throw Error(Errc::kEmptyDataset, "training split has no episodes");
  if (params_.dim != config_.model.dim || params_.vocab != config_.model.vocab) {
    throw Error(Errc::kConfigError, "parameter shapes do not match the model config");
  }
}

std::vector<std::size_t> Trainer::batch_indices(std::int64_t iteration) const {
  const auto n = static_cast<std::uint64_t>(data_.entries.size());
  const auto bsz = static_cast<std::uint64_t>(config_.batch_size);
  std::vector<std::size_t> out;
  std::uint64_t cached_epoch = UINT64_MAX;
  std::vector<std::size_t> perm(n);
  for (std::uint64_t k = 0; k < bsz; ++k) {
    const std::uint64_t pos = static_cast<std::uint64_t>(iteration) * bsz + k;
    const std::uint64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      for (std::uint64_t i = 0; i < n; ++i) perm[i] = i;
      Rng rng(derive_seed(config_.seed, "epoch", epoch));
      rng.shuffle(perm.begin(), perm.end());
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

LossReport Trainer::step() {
  const auto batch = batch_indices(iteration_);
  LossReport r = train_iteration(params_, scenes_, data_, batch, pool_, config_, iteration_, optimizer_);
  ++iteration_;
  return r;
}

nlohmann::json Trainer::state_to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : pool_.entries()) {
    entries.push_back({{"path_id", e.gt.path_id}, {"t", e.gt.t}, {"iteration", e.iteration}});
  }
  return {{"iteration", iteration_},
          {"mode", to_string(config_.mode)},
          {"seed", config_.seed},
          {"pool", entries},
          {"optimizer", optimizer_state_to_json(optimizer_)}};
}

void Trainer::restore(ModelParams params, const nlohmann::json& state) {
  try {
    if (params.dim != config_.model.dim || params.vocab != config_.model.vocab) {
      throw Error(Errc::kParseError, "checkpoint shapes do not match the model config");
    }
    if (state.at("mode").get<std::string>() != to_string(config_.mode) ||
        state.at("seed").get<std::uint64_t>() != config_.seed) {
      throw Error(Errc::kParseError, "checkpoint was written by a run with a different mode or seed");
    }
    PerturbedPool pool;
    for (const auto& e : state.at("pool")) {
      const auto path_id = e.at("path_id").get<std::string>();
      const int t = e.at("t").get<int>();
      const PPEntry* entry = data_.find(path_id);
      if (entry == nullptr) throw Error(Errc::kParseError, "pool entry for unknown episode " + path_id);
      const auto it = std::find_if(entry->perturbed.begin(), entry->perturbed.end(),
                                   [&](const PerturbedGT& g) { return g.t == t; });
      if (it == entry->perturbed.end()) throw Error(Errc::kParseError, "pool entry for unknown position of " + path_id);
      pool.insert(*it, e.at("iteration").get<std::int64_t>());
    }
    OptimizerState opt = optimizer_state_from_json(state.at("optimizer"));
    if (config_.optimizer == OptimizerKind::kAdam && opt.steps > 0 && opt.m.dim != params.dim) {
      throw Error(Errc::kParseError, "checkpoint lacks Adam moments matching the model");
    }
    params_ = std::move(params);
    pool_ = std::move(pool);
    optimizer_ = std::move(opt);
    iteration_ = state.at("iteration").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kParseError, std::string("malformed trainer state: ") + e.what());
  }
}

}  // namespace proper
