#include "proper/eval.hpp"

#include <algorithm>

#include "proper/errors.hpp"

namespace proper {

std::string to_string(EvalMode mode) {
  return mode == EvalMode::kPerturbationFree ? "per-free" : "per-based";
}

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "per-free") return EvalMode::kPerturbationFree;
  if (s == "per-based") return EvalMode::kPerturbationBased;
  throw Error(Errc::kConfigError, "unknown protocol '" + s + "' (expected per-free or per-based)");
}

EpisodeMetrics score_episode(const Scene& scene, const Episode& episode, const RolloutRecord& record,
                             const EvalProtocol& protocol, double reference_length) {
  EpisodeMetrics m;
  m.path_id = episode.path_id;
  m.tl = path_length(scene, record.nodes);
  m.ne = geodesic_distance(scene, record.nodes.back(), episode.goal());
  m.success = m.ne <= protocol.success_radius;
  m.reference_length = reference_length;
  const double denom = std::max(m.tl, reference_length);
  m.spl = m.success ? (denom > 0.0 ? reference_length / denom : 1.0) : 0.0;
  m.event_fired = !record.fired.empty();
  m.stopped = record.stopped;
  return m;
}

Metrics aggregate(std::vector<EpisodeMetrics> rows) {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.path_id < b.path_id; });
  Metrics m;
  m.episodes = rows.size();
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.tl += r.tl;
    m.ne += r.ne;
    m.sr += r.success ? 1.0 : 0.0;
    m.spl += r.spl;
  }
  const auto n = static_cast<double>(rows.size());
  m.tl /= n;
  m.ne /= n;
  m.sr /= n;
  m.spl /= n;
  return m;
}

EvalReport evaluate(const PolicyFactory& factory, const SceneMap& scenes, const PPDataset& data,
                    const EvalProtocol& protocol) {
  if (data.entries.empty()) throw Error(Errc::kEmptyDataset, "evaluation split has no episodes");
  if (protocol.decode != RolloutMode::kGreedy && protocol.decode != RolloutMode::kSample) {
    throw Error(Errc::kConfigError, "evaluation decodes greedily or by sampling");
  }
  EvalReport report;
  report.protocol = protocol;
  report.split = data.split;
  for (const auto& entry : data.entries) {
    const Episode& ep = entry.episode;
    const auto it = scenes.find(ep.scan);
    if (it == scenes.end()) throw Error(Errc::kInvalidEpisode, "episode " + ep.path_id + " refers to unknown scan");
    const Scene& scene = it->second;

    RolloutOptions o;
    o.mode = protocol.decode;
    o.max_steps = protocol.max_steps;
    double reference = path_length(scene, ep.path);
    int designated = -1;
    bool fallback = false;
    if (protocol.mode == EvalMode::kPerturbationBased) {
      if (!entry.perturbable()) {
        fallback = true;
      } else if (protocol.multi_perturbation) {
        std::vector<EdgeKey> cut;
        for (const auto& gt : entry.perturbed) {
          o.events.push_back(to_event(gt));
          cut.push_back(gt.edge());
        }
        const SceneView view(scene, cut);
        const double d = geodesic_distance(view, ep.start(), ep.goal());
        if (std::isfinite(d)) reference = std::max(reference, d);
      } else {
        Rng pick(derive_seed(protocol.seed, "designate:" + ep.path_id));
        const PerturbedGT& gt = entry.perturbed[pick.below(entry.perturbed.size())];
        o.events.push_back(to_event(gt));
        designated = gt.t;
        reference = path_length(scene, gt.path_obs);
      }
    }

    ad::Tape tape;
    auto policy = factory(tape);
    Rng rng(derive_seed(protocol.seed, "eval:" + ep.path_id));
    const RolloutRecord record = rollout(*policy, scene, ep, o, rng);
    EpisodeMetrics m = score_episode(scene, ep, record, protocol, reference);
    m.perturbed = !o.events.empty();
    m.fallback_free = fallback;
    m.designated_t = designated;
    report.rows.push_back(std::move(m));
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const auto& a, const auto& b) { return a.path_id < b.path_id; });
  report.metrics = aggregate(report.rows);
  return report;
}

namespace {

class OwningNeuralPolicy : public Policy {
 public:
  OwningNeuralPolicy(ad::Tape& tape, const ModelParams& params) : vars_(tape, params, false), inner_(vars_) {}

  ad::Tape& tape() override { return inner_.tape(); }
  void begin(const Scene& scene, const Episode& episode) override { inner_.begin(scene, episode); }
  std::pair<ad::Var, ad::Var> score(const Observation& obs, NodeIndex node, double heading) override {
    return inner_.score(obs, node, heading);
  }
  void commit(int action, NodeIndex next_node, double next_heading) override {
    inner_.commit(action, next_node, next_heading);
  }
  ad::Var encoding() override { return inner_.encoding(); }

 private:
  ParamVars vars_;
  NeuralPolicy inner_;
};

}  // namespace

EvalReport evaluate(const ModelParams& params, const SceneMap& scenes, const PPDataset& data,
                    const EvalProtocol& protocol) {
  return evaluate([&](ad::Tape& tape) { return std::make_unique<OwningNeuralPolicy>(tape, params); }, scenes, data,
                  protocol);
}

nlohmann::json eval_report_to_json(const EvalReport& report) {
  const auto& p = report.protocol;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"path_id", r.path_id},
                    {"TL", r.tl},
                    {"NE", r.ne},
                    {"success", r.success},
                    {"SPL", r.spl},
                    {"reference_length", r.reference_length},
                    {"perturbed", r.perturbed},
                    {"event_fired", r.event_fired},
                    {"fallback_per_free", r.fallback_free},
                    {"designated_t", r.designated_t},
                    {"stopped", r.stopped}});
  }
  const auto& m = report.metrics;
  return {{"protocol",
           {{"mode", to_string(p.mode)},
            {"success_radius", p.success_radius},
            {"seed", p.seed},
            {"decode", p.decode == RolloutMode::kGreedy ? "greedy" : "sample"},
            {"max_steps", p.max_steps},
            {"multi_perturbation", p.multi_perturbation}}},
          {"splits",
           {{report.split, {{"TL", m.tl}, {"NE", m.ne}, {"SR", m.sr}, {"SPL", m.spl}, {"episodes", m.episodes}}}}},
          {"episodes", std::move(rows)}};
}

}  // namespace proper
