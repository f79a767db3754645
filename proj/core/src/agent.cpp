#include "proper/agent.hpp"

#include <cmath>

#include "proper/errors.hpp"

namespace proper {

namespace {

ModelParams shaped_params(const ModelConfig& config) {
  if (config.dim < 1 || config.vocab < 1) throw Error(Errc::kConfigError, "model dim and vocab must be positive");
  const auto d = static_cast<Eigen::Index>(config.dim);
  ModelParams p;
  p.dim = config.dim;
  p.vocab = config.vocab;
  p.embedding = ad::Matrix::Zero(d, config.vocab);
  p.enc_wx = ad::Matrix::Zero(3 * d, d);
  p.enc_wh = ad::Matrix::Zero(3 * d, d);
  p.enc_b = ad::Matrix::Zero(3 * d, 1);
  p.dec_wx = ad::Matrix::Zero(3 * d, 3 * d);
  p.dec_wh = ad::Matrix::Zero(3 * d, d);
  p.dec_b = ad::Matrix::Zero(3 * d, 1);
  p.obs_w_lm = ad::Matrix::Zero(d, d);
  p.obs_w_geo = ad::Matrix::Zero(d, kGeoFeatures);
  p.obs_b = ad::Matrix::Zero(d, 1);
  p.att_w = ad::Matrix::Zero(d, d);
  p.act_w = ad::Matrix::Zero(d, 2 * d);
  p.critic_w = ad::Matrix::Zero(1, d);
  p.critic_b = ad::Matrix::Zero(1, 1);
  return p;
}

}  // namespace

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const char*, const ad::Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool ModelParams::all_finite() const {
  bool ok = true;
  for_each([&](const char*, const ad::Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

ModelParams zero_params(const ModelConfig& config) { return shaped_params(config); }

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = shaped_params(config);
  Rng rng(derive_seed(seed, "init"));
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.dim));
  p.for_each([&](const char*, ad::Matrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
    }
  });
  return p;
}

ParamVars::ParamVars(ad::Tape& t, const ModelParams& params, bool trainable)
    : tape(&t), dim(params.dim), vocab(params.vocab) {
  auto reg = [&](const ad::Matrix& m) { return trainable ? t.leaf(m) : t.constant(m); };
  embedding = reg(params.embedding);
  enc_wx = reg(params.enc_wx);
  enc_wh = reg(params.enc_wh);
  enc_b = reg(params.enc_b);
  dec_wx = reg(params.dec_wx);
  dec_wh = reg(params.dec_wh);
  dec_b = reg(params.dec_b);
  obs_w_lm = reg(params.obs_w_lm);
  obs_w_geo = reg(params.obs_w_geo);
  obs_b = reg(params.obs_b);
  att_w = reg(params.att_w);
  act_w = reg(params.act_w);
  critic_w = reg(params.critic_w);
  critic_b = reg(params.critic_b);
}

Gradients ParamVars::gradients() const {
  Gradients g;
  g.dim = dim;
  g.vocab = vocab;
  g.embedding = tape->grad(embedding);
  g.enc_wx = tape->grad(enc_wx);
  g.enc_wh = tape->grad(enc_wh);
  g.enc_b = tape->grad(enc_b);
  g.dec_wx = tape->grad(dec_wx);
  g.dec_wh = tape->grad(dec_wh);
  g.dec_b = tape->grad(dec_b);
  g.obs_w_lm = tape->grad(obs_w_lm);
  g.obs_w_geo = tape->grad(obs_w_geo);
  g.obs_b = tape->grad(obs_b);
  g.att_w = tape->grad(att_w);
  g.act_w = tape->grad(act_w);
  g.critic_w = tape->grad(critic_w);
  g.critic_b = tape->grad(critic_b);
  return g;
}

InstructionContext encode_instruction(const ParamVars& p, std::span<const int> tokens) {
  if (tokens.empty()) throw Error(Errc::kUnknownToken, "empty instruction");
  ad::Tape& tape = *p.tape;
  ad::Var h = tape.constant(ad::Matrix::Zero(p.dim, 1));
  std::vector<ad::Var> states;
  states.reserve(tokens.size());
  for (int tok : tokens) {
    if (tok < 0 || tok >= p.vocab) {
      throw Error(Errc::kUnknownToken, "token " + std::to_string(tok) + " outside vocabulary of " +
                                           std::to_string(p.vocab));
    }
    h = ad::gru_cell(ad::column(p.embedding, tok), h, p.enc_wx, p.enc_wh, p.enc_b);
    states.push_back(h);
  }
  // Each key carries its raw token embedding next to the recurrent summary so
  // landmark identity survives into the attention readout.
  return {ad::add(ad::concat_cols(states), ad::gather_cols(p.embedding, tokens)), h};
}

AgentState initial_state(const ParamVars& p, const InstructionContext& ctx, const Episode& episode) {
  return {ctx.final_state, p.tape->constant(ad::Matrix::Zero(p.dim, 1)), episode.heading, episode.start()};
}

StepOutput step(const ParamVars& p, const AgentState& state, const Observation& obs, const InstructionContext& ctx) {
  ad::Tape& tape = *p.tape;
  const auto n = static_cast<Eigen::Index>(obs.size());
  std::vector<int> landmark_cols(obs.size(), -1);
  ad::Matrix geo = ad::Matrix::Zero(kGeoFeatures, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Candidate& c = obs.candidates[static_cast<std::size_t>(j)];
    if (c.is_stop()) {
      geo(4, j) = 1.0;
      continue;
    }
    const int tok = c.landmark >= 0 ? tokens::landmark(c.landmark) : -1;
    if (tok >= 0 && tok < p.vocab) landmark_cols[static_cast<std::size_t>(j)] = tok;
    geo(0, j) = c.sin_heading;
    geo(1, j) = c.cos_heading;
    geo(2, j) = c.elevation;
    geo(3, j) = c.distance;
  }

  const ad::Var lm = ad::gather_cols(p.embedding, landmark_cols);
  const ad::Var pre = ad::add(ad::matmul(p.obs_w_lm, lm), ad::matmul(p.obs_w_geo, tape.constant(std::move(geo))));
  const ad::Var cand = ad::tanh(ad::add_col_broadcast(pre, p.obs_b));

  const ad::Var summary = ad::mean_cols(cand);
  const ad::Var ctx_prev = ad::attend(ctx.keys, ad::matmul(p.att_w, state.hidden));
  const std::vector<ad::Var> input{summary, state.prev_action, ctx_prev};
  const ad::Var h = ad::gru_cell(ad::concat_rows(input), state.hidden, p.dec_wx, p.dec_wh, p.dec_b);

  const ad::Var ctx_now = ad::attend(ctx.keys, ad::matmul(p.att_w, h));
  const std::vector<ad::Var> joint{h, ctx_now};
  const ad::Var query = ad::matmul(p.act_w, ad::concat_rows(joint));
  const ad::Var logits = ad::matmul(ad::transpose(cand), query);

  StepOutput out;
  out.logits = logits;
  out.log_probs = ad::log_softmax(logits);
  out.value = ad::add(ad::matmul(p.critic_w, h), p.critic_b);
  out.candidates = cand;
  out.state = state;
  out.state.hidden = h;
  return out;
}

AgentState commit_action(const StepOutput& out, int action, NodeIndex next_node, double next_heading) {
  AgentState s = out.state;
  s.prev_action = ad::column(out.candidates, action);
  s.node = next_node;
  s.heading = next_heading;
  return s;
}

void NeuralPolicy::begin(const Scene&, const Episode& episode) {
  auto it = contexts_.find(episode.path_id);
  if (it == contexts_.end()) {
    it = contexts_.emplace(episode.path_id, encode_instruction(vars_, episode.instruction)).first;
  }
  ctx_ = &it->second;
  state_ = initial_state(vars_, *ctx_, episode);
}

std::pair<ad::Var, ad::Var> NeuralPolicy::score(const Observation& obs, NodeIndex node, double heading) {
  state_.node = node;
  state_.heading = heading;
  last_ = step(vars_, state_, obs, *ctx_);
  return {last_.logits, last_.value};
}

void NeuralPolicy::commit(int action, NodeIndex next_node, double next_heading) {
  state_ = commit_action(last_, action, next_node, next_heading);
}

std::vector<EdgeKey> RolloutRecord::traversed_edges() const {
  std::vector<EdgeKey> out;
  for (std::size_t i = 1; i < nodes.size(); ++i) out.push_back(make_edge(nodes[i - 1], nodes[i]));
  return out;
}

namespace {

int choose(const Eigen::VectorXd& probs, const std::vector<char>& mask, RolloutMode mode, Rng& rng) {
  int last_open = -1;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) last_open = static_cast<int>(i);
  }
  if (mode == RolloutMode::kGreedy) {
    int best = -1;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      if (!mask[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || probs(i) > probs(best)) best = static_cast<int>(i);
    }
    return best;
  }
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  return last_open;
}

// Scalar exp: Eigen's vectorised exp maps -inf to a denormal, not zero.
Eigen::VectorXd probabilities(const ad::Var& log_probs) {
  return log_probs.value().col(0).unaryExpr([](double v) { return std::exp(v); });
}

}  // namespace

RolloutRecord rollout(Policy& policy, const Scene& scene, const Episode& episode, const RolloutOptions& options,
                      Rng& rng) {
  const Path& teacher = options.teacher ? *options.teacher : episode.path;
  const bool teacher_mode = options.mode == RolloutMode::kTeacher;
  if (teacher_mode && (teacher.empty() || teacher.front() != episode.start())) {
    throw Error(Errc::kInvalidPath, "teacher path must start at the episode start");
  }

  RolloutRecord rec;
  rec.path_id = episode.path_id;
  SceneView view(scene);
  std::vector<char> fired(options.events.size(), 0);
  NodeIndex cur = episode.start();
  double heading = episode.heading;
  rec.nodes.push_back(cur);
  policy.begin(scene, episode);

  auto fire = [&](std::size_t k, StepRecord& st) {
    fired[k] = 1;
    view = apply_event(view, options.events[k]);
    st.event_fired = true;
    st.fired_edge = options.events[k].edge();
    rec.fired.push_back(options.events[k]);
  };

  const int limit = teacher_mode ? static_cast<int>(teacher.size()) : options.max_steps;
  for (int t = 0; t < limit; ++t) {
    const Observation obs = observe(view, cur, heading);
    const auto [logits, value] = policy.score(obs, cur, heading);

    StepRecord st;
    st.node = cur;
    st.value = value;
    for (const auto& c : obs.candidates) st.candidates.push_back(c.node);
    std::vector<char> mask(obs.size(), 1);

    int target = -1;
    if (teacher_mode) {
      // Pre-imposed cut: the reference step off c_t is masked the moment the
      // agent stands on c_t, matching what an attempted traversal would do.
      for (std::size_t k = 0; k < options.events.size(); ++k) {
        if (fired[k] || options.events[k].from != cur) continue;
        const int idx = obs.index_of(options.events[k].to);
        if (idx < 0) continue;
        mask[static_cast<std::size_t>(idx)] = 0;
        st.masked_action = idx;
        fire(k, st);
      }
      const auto pos = static_cast<std::size_t>(t);
      target = pos + 1 < teacher.size() ? obs.index_of(teacher[pos + 1]) : obs.stop_index();
      if (target < 0 || !mask[static_cast<std::size_t>(target)]) {
        throw Error(Errc::kInvalidPath, "teacher path leaves the traversable graph at step " + std::to_string(t));
      }
    } else if (options.mode == RolloutMode::kMixed) {
      if (cur == episode.goal()) {
        target = obs.stop_index();
      } else {
        const Path sp = shortest_path(view, cur, episode.goal());
        target = obs.index_of(sp[1]);
      }
    }

    ad::Var log_probs = ad::log_softmax(logits, mask);
    Eigen::VectorXd probs = probabilities(log_probs);
    int action;
    const bool forced = teacher_mode || (options.mode == RolloutMode::kMixed && t < options.teacher_steps);
    if (forced) {
      action = target;
    } else {
      const RolloutMode pick = options.mode == RolloutMode::kGreedy ? RolloutMode::kGreedy : RolloutMode::kSample;
      action = choose(probs, mask, pick, rng);
      // An attempted traversal of a cut edge masks that candidate, renormalises
      // and picks again from what is left.
      for (bool retry = true; retry;) {
        retry = false;
        const NodeIndex node = obs.candidates[static_cast<std::size_t>(action)].node;
        if (node < 0) break;
        for (std::size_t k = 0; k < options.events.size(); ++k) {
          if (fired[k] || options.events[k].edge() != make_edge(cur, node)) continue;
          mask[static_cast<std::size_t>(action)] = 0;
          st.masked_action = action;
          fire(k, st);
          log_probs = ad::log_softmax(logits, mask);
          probs = probabilities(log_probs);
          action = choose(probs, mask, pick, rng);
          retry = true;
          break;
        }
      }
    }

    st.action = action;
    st.probs = probs;
    st.log_probs = log_probs;
    st.log_prob = ad::element(log_probs, action);
    if (target >= 0) {
      st.teacher_action = target;
      st.teacher_log_prob = target == action ? st.log_prob : ad::element(log_probs, target);
    }

    const NodeIndex next = obs.candidates[static_cast<std::size_t>(action)].node;
    rec.steps.push_back(std::move(st));
    if (next < 0) {
      policy.commit(action, cur, heading);
      rec.stopped = true;
      break;
    }
    heading = bearing(scene.position(cur), scene.position(next));
    policy.commit(action, next, heading);
    cur = next;
    rec.nodes.push_back(cur);
  }
  rec.encoding = policy.encoding();
  return rec;
}

ad::Var encode_path(const ParamVars& p, const Scene& scene, const Episode& episode, const Path& path,
                    const std::vector<PerturbationEvent>& events) {
  NeuralPolicy policy(p);
  RolloutOptions options;
  options.mode = RolloutMode::kTeacher;
  options.teacher = &path;
  options.events = events;
  Rng unused(0);
  return rollout(policy, scene, episode, options, unused).encoding;
}

}  // namespace proper
