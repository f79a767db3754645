// End-to-end acceptance run. Prints one line per criterion and exits
// non-zero when any criterion fails. Criteria 5-7 and 9 train the standard
// synthetic benchmark from scratch and take about 20 minutes on one core.
//
//   acceptance [--only 1,2,3] [--work DIR] [--r2r DIR]

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "oracles.hpp"
#include "proper/dataset_io.hpp"
#include "proper/errors.hpp"
#include "proper/training.hpp"

using namespace proper;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  enum Kind { kPass, kFail, kSkip } kind = kFail;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::kSkip, std::move(d)}; }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::kIoError, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string digest(const fs::path& p) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << std::hash<std::string>{}(slurp(p));
  return os.str();
}

void run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  if (code != 0) {
    std::string cmd;
    for (const auto& a : args) cmd += a + " ";
    throw std::runtime_error("`proper " + cmd + "` exited " + std::to_string(code) + ": " + err.str());
  }
}

// ---------------------------------------------------------------- 1 and 2

constexpr std::uint64_t kCorpusSeed = 20240611;

Outcome deletable_oracle() {
  const auto corpus = oracle::random_corpus(kCorpusSeed, 100, 5);
  std::size_t mismatches = 0, edges = 0, episodes = 0;
  const auto t0 = Clock::now();
  for (std::size_t s = 0; s < corpus.scenes.size(); ++s) {
    for (const auto& ep : corpus.episodes[s]) {
      const auto got = collect_deletable_edges(corpus.scenes[s], ep);
      if (got != oracle::deletable_edges(corpus.scenes[s], ep)) ++mismatches;
      edges += got.size();
      ++episodes;
    }
  }
  const double secs = seconds_since(t0);
  const std::string d = std::to_string(episodes) + " episodes, " + std::to_string(edges) + " deletable edges, " +
                        std::to_string(mismatches) + " mismatches, " + fmt(secs) + " s";
  return mismatches == 0 && secs < 10.0 ? pass(d) : fail(d);
}

Outcome detour_oracle() {
  const auto corpus = oracle::random_corpus(kCorpusSeed, 100, 5);
  std::size_t brute = 0, invariant = 0, violations = 0;
  std::string first;
  for (std::size_t s = 0; s < corpus.scenes.size(); ++s) {
    const Scene& scene = corpus.scenes[s];
    for (const auto& ep : corpus.episodes[s]) {
      for (const auto& d : collect_deletable_edges(scene, ep)) {
        const PerturbedGT gt = build_perturbed_gt(scene, ep, d);
        std::string problem = oracle::check_perturbed_invariants(scene, ep, gt);
        ++invariant;
        if (scene.size() <= 12) {
          ++brute;
          const auto best = oracle::best_detour(scene, ep, d.t);
          // s..c_{t-1}, then the detour c_t..m, then the GT after m
          Path expect(ep.path.begin(), ep.path.begin() + d.t);
          if (best) {
            expect.insert(expect.end(), best->detour.begin(), best->detour.end());
            const auto mi = std::find(ep.path.begin() + d.t + 1, ep.path.end(), best->m);
            expect.insert(expect.end(), mi + 1, ep.path.end());
          }
          if (!best || gt.detour != best->m || gt.path_obs != expect) problem += " detour differs from brute force;";
        }
        if (!problem.empty()) {
          ++violations;
          if (first.empty()) first = ep.path_id + " t=" + std::to_string(d.t) + ":" + problem;
        }
      }
    }
  }
  std::string d = std::to_string(brute) + " edges checked against brute force, " + std::to_string(invariant) +
                  " against invariants, " + std::to_string(violations) + " violations";
  if (!first.empty()) d += " (first: " + first + ")";
  return violations == 0 && brute > 0 ? pass(d) : fail(d);
}

// ---------------------------------------------------------------- 3 and 4

constexpr int kInstances = 20;
constexpr double kGradTol = 1e-4;

ad::Matrix random_vec(Rng& rng, int d) {
  ad::Matrix m(d, 1);
  for (int i = 0; i < d; ++i) m(i, 0) = rng.uniform(-1, 1);
  return m;
}

Outcome gradient_checks() {
  const int dim = 8;
  std::map<std::string, double> worst;
  std::map<std::string, int> instances;
  auto note = [&](const std::string& name, const oracle::GradCheck& c) {
    worst[name] = std::max(worst[name], c.max_rel_error);
    ++instances[name];
  };

  // Model losses on real rollouts: a fresh small world per instance.
  Rng rng(31);
  int route_changes = 0;
  for (int k = 0; k < kInstances; ++k) {
    const auto world = oracle::tiny_world(100 + static_cast<std::uint64_t>(k), 8, dim);
    const Scene& scene = world.scenes.begin()->second;
    const ModelParams p0 = init_params(world.model, 500 + static_cast<std::uint64_t>(k));
    const PPEntry& entry = world.data.entries[static_cast<std::size_t>(k) % world.data.entries.size()];

    // IL: teacher-forced rollout.
    auto il = [&](const ParamVars& vars) {
      NeuralPolicy policy(vars);
      RolloutOptions o;
      o.mode = RolloutMode::kTeacher;
      Rng r(1);
      const auto rec = rollout(policy, scene, entry.episode, o, r);
      return il_loss(rec, entry.episode.path);
    };
    {
      ad::Tape tape;
      ParamVars vars(tape, p0);
      tape.backward(il(vars));
      note("L_IL", oracle::check_param_gradients(p0, vars.gradients(), [&](const ModelParams& q) {
             ad::Tape t;
             return il(ParamVars(t, q)).scalar();
           }, rng, 4));
    }

    // RL: sampled rollout; the finite-difference side keeps the critic
    // baseline pinned, as the surrogate detaches it.
    const double gamma = 0.9;
    auto sampled = [&](const ParamVars& vars) {
      NeuralPolicy policy(vars);
      RolloutOptions o;
      o.mode = RolloutMode::kSample;
      Rng r(derive_seed(77, "rl", static_cast<std::uint64_t>(k)));
      auto rec = rollout(policy, scene, entry.episode, o, r);
      assign_rewards(scene, entry.episode, rec);
      return rec;
    };
    {
      ad::Tape tape;
      ParamVars vars(tape, p0);
      const auto rec = sampled(vars);
      tape.backward(rl_loss(rec, gamma));
      const auto base = oracle::critic_values(rec);
      note("L_RL", oracle::check_param_gradients(p0, vars.gradients(), [&](const ModelParams& q) {
             ad::Tape t;
             const auto r = sampled(ParamVars(t, q));
             if (r.nodes != rec.nodes) ++route_changes;
             return oracle::frozen_rl(r, base, gamma);
           }, rng, 4));
    }
  }

  // Contrastive terms on free vectors.
  for (int k = 0; k < kInstances; ++k) {
    std::vector<ad::Matrix> in;
    for (int i = 0; i < 7; ++i) in.push_back(random_vec(rng, dim));
    const double tau = rng.uniform(0.05, 0.5);
    auto build = [&](ad::Tape& t, const std::vector<ad::Matrix>& m, int which) {
      std::vector<ad::Var> v;
      for (const auto& x : m) v.push_back(t.leaf(x));
      const std::vector<ad::Var> intra{v[2], v[3]};
      const std::vector<ad::Var> inter{v[4], v[5], v[6]};
      ad::Var loss = which == 0   ? info_nce(v[0], v[1], inter, tau)
                     : which == 1 ? contrastive_free(v[0], v[1], intra, inter, tau)
                                  : contrastive_perturbed(v[0], v[1], intra, inter, tau);
      return std::make_pair(loss, v);
    };
    const char* names[] = {"info_nce", "L_f", "L_p"};
    for (int which = 0; which < 3; ++which) {
      ad::Tape tape;
      auto [loss, vars] = build(tape, in, which);
      tape.backward(loss);
      std::vector<ad::Matrix> grads;
      for (const auto& v : vars) grads.push_back(tape.grad(v));
      note(names[which], oracle::check_input_gradients(in, grads, [&](const std::vector<ad::Matrix>& m) {
             ad::Tape t;
             return build(t, m, which).first.scalar();
           }));
    }
  }

  // Total objective of a PROPER iteration with a seeded pool.
  for (int k = 0; k < kInstances; ++k) {
    const auto world = oracle::tiny_world(200 + static_cast<std::uint64_t>(k), 12, dim);
    TrainConfig c;
    c.model = world.model;
    c.batch_size = 2;
    c.seed = static_cast<std::uint64_t>(k);
    std::vector<std::size_t> batch;
    for (std::size_t i = 0; i < world.data.entries.size() && batch.size() < 2; ++i) {
      if (world.data.entries[i].perturbable()) batch.push_back(i);
    }
    if (batch.size() < 2) batch = {0, 1};
    PerturbedPool pool;
    for (std::size_t i : batch) {
      if (world.data.entries[i].perturbable()) pool.insert(world.data.entries[i].perturbed.front(), 0);
    }
    const ModelParams p0 = init_params(c.model, 900 + static_cast<std::uint64_t>(k));
    ad::Tape tape;
    ParamVars vars(tape, p0);
    const auto L = build_iteration_losses(vars, world.scenes, world.data, batch, pool, c, 1);
    tape.backward(L.total);
    std::vector<std::vector<double>> baseline;
    std::vector<Path> routes;
    for (const auto& r : L.rl_records) {
      baseline.push_back(oracle::critic_values(r));
      routes.push_back(r.nodes);
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    note("total", oracle::check_param_gradients(p0, vars.gradients(), [&](const ModelParams& q) {
           ad::Tape t;
           ParamVars v(t, q);
           const auto M = build_iteration_losses(v, world.scenes, world.data, batch, pool, c, 1);
           double frozen = 0.0;
           for (std::size_t i = 0; i < M.rl_records.size(); ++i) {
             if (M.rl_records[i].nodes != routes[i]) ++route_changes;
             frozen += oracle::frozen_rl(M.rl_records[i], baseline[i], c.weights.gamma);
           }
           return M.total.scalar() - M.rl.scalar() + frozen * inv_b;
         }, rng, 3));
  }

  bool ok = route_changes == 0;
  std::string d;
  for (const auto& [name, err] : worst) {
    ok = ok && err <= kGradTol && instances[name] == kInstances;
    d += name + " " + std::to_string(instances[name]) + "x max " + fmt(err * 1e6, 3) + "e-6; ";
  }
  if (route_changes) d += std::to_string(route_changes) + " sampled routes changed under perturbation";
  return ok ? pass(d) : fail(d);
}

Outcome analytic_values() {
  ad::Tape tape;
  auto vec = [&](std::initializer_list<double> v) {
    ad::Matrix m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return tape.leaf(m);
  };
  // anchor, positive and negative all point the same way
  const std::vector<ad::Var> same{vec({0.5, 0, 0})};
  const double nce = info_nce(vec({1, 0, 0}), vec({2, 0, 0}), same, 1.0).scalar();
  const std::vector<ad::Var> one{vec({1, 2, 3})};
  const double lf = contrastive_free(vec({1, 2, 3}), vec({1, 2, 3}), one, one, 1.0).scalar();
  // IL over a single step of a uniform 4-way choice
  RolloutRecord r;
  StepRecord st;
  st.candidates.assign(4, -1);
  st.probs = Eigen::VectorXd::Constant(4, 0.25);
  st.log_probs = tape.constant(ad::Matrix::Constant(4, 1, std::log(0.25)));
  st.action = st.teacher_action = 2;
  st.log_prob = st.teacher_log_prob = ad::element(st.log_probs, 2);
  st.value = tape.constant(0.0);
  r.nodes = {0};
  r.steps.push_back(st);
  const double il = il_loss(r, r.nodes).scalar();

  const double e1 = std::abs(nce - std::log(2.0));
  const double e2 = std::abs(lf - 2.0 * std::log(2.0));
  const double e3 = std::abs(il - std::log(4.0));
  const std::string d = "info_nce " + fmt(nce, 12) + ", L_f " + fmt(lf, 12) + ", L_IL " + fmt(il, 12);
  return e1 <= 1e-9 && e2 <= 1e-9 && e3 <= 1e-9 ? pass(d) : fail(d);
}

// ---------------------------------------------------------------- 5 to 7, 9

const std::vector<std::uint64_t> kTrainSeeds{7, 8, 9};

struct Benchmark {
  fs::path root;
  fs::path world() const { return root / "world"; }
  fs::path pp(const std::string& split) const { return root / ("pp_" + split + ".json"); }
  fs::path run(const std::string& mode, std::uint64_t seed) const {
    return root / "runs" / (mode + "_" + std::to_string(seed));
  }
  fs::path report(const std::string& mode, std::uint64_t seed, const std::string& split,
                  const std::string& protocol) const {
    return run(mode, seed) / ("eval_" + split + "_" + protocol + ".json");
  }
};

void build_world(const fs::path& root) {
  const auto w = (root / "world").string();
  run_cli({"gen-world", "--seed", "7", "--scenes", "10", "--nodes", "40", "--episodes", "200", "--val-episodes", "50",
           "--out", w});
  for (const std::string split : {"train", "val"}) {
    run_cli({"build-pp", "--scenes", w + "/scenes", "--episodes", w + "/episodes_" + split + ".json", "--split", split,
             "--out", (root / ("pp_" + split + ".json")).string(), "--stats",
             (root / ("stats_" + split + ".json")).string()});
  }
}

double train_run(const Benchmark& b, const std::string& mode, std::uint64_t seed, const fs::path& out) {
  const auto t0 = Clock::now();
  run_cli({"train", "--scenes", (b.world() / "scenes").string(), "--dataset", b.pp("train").string(), "--out",
           out.string(), "--mode", mode, "--seed", std::to_string(seed), "--iterations", "20000", "--dim", "64",
           "--optimizer", "adam", "--lr", "0.001", "--clip", "5", "--batch-size", "4"});
  return seconds_since(t0);
}

void eval_run(const Benchmark& b, const fs::path& run_dir, const std::string& split, const std::string& protocol,
              const fs::path& out) {
  run_cli({"eval", "--checkpoint", (run_dir / "checkpoint.json").string(), "--scenes",
           (b.world() / "scenes").string(), "--dataset", b.pp(split).string(), "--protocol", protocol, "--seed", "7",
           "--out", out.string()});
}

double sr_of(const fs::path& report, const std::string& split) {
  return read_json(report)["splits"][split]["SR"].get<double>();
}

struct BenchmarkResults {
  bool ready = false;
  std::string error;
  // mean SR per (mode, split, protocol)
  std::map<std::string, double> mean_sr;
  std::map<std::string, std::vector<double>> per_seed;
  std::vector<double> run_seconds;
};

std::string key(const std::string& mode, const std::string& split, const std::string& protocol) {
  return mode + "/" + split + "/" + protocol;
}

BenchmarkResults run_benchmark(const Benchmark& b) {
  BenchmarkResults r;
  try {
    build_world(b.root);
    for (std::uint64_t seed : kTrainSeeds) {
      for (const std::string mode : {"baseline", "proper"}) {
        const double secs = train_run(b, mode, seed, b.run(mode, seed));
        r.run_seconds.push_back(secs);
        std::cout << "  trained " << mode << " seed " << seed << " in " << fmt(secs, 0) << " s\n" << std::flush;
        for (const std::string split : {"val", "train"}) {
          for (const std::string protocol : {"per-free", "per-based"}) {
            eval_run(b, b.run(mode, seed), split, protocol, b.report(mode, seed, split, protocol));
            r.per_seed[key(mode, split, protocol)].push_back(sr_of(b.report(mode, seed, split, protocol), split));
          }
        }
      }
    }
    for (const auto& [k, v] : r.per_seed) {
      double s = 0.0;
      for (double x : v) s += x;
      r.mean_sr[k] = s / static_cast<double>(v.size());
    }
    r.ready = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

std::string sr_line(const BenchmarkResults& r, const std::string& mode, const std::string& split) {
  std::string s = mode + " " + split + " SR free/based";
  const auto& f = r.per_seed.at(key(mode, split, "per-free"));
  const auto& p = r.per_seed.at(key(mode, split, "per-based"));
  s += " [";
  for (std::size_t i = 0; i < f.size(); ++i) s += (i ? " " : "") + fmt(f[i] * 100, 1) + "/" + fmt(p[i] * 100, 1);
  s += "] mean " + fmt(r.mean_sr.at(key(mode, split, "per-free")) * 100, 1) + "/" +
       fmt(r.mean_sr.at(key(mode, split, "per-based")) * 100, 1);
  return s;
}

// The held-out val split decides; train-split numbers are reported alongside.
Outcome robustness_gap(const BenchmarkResults& r) {
  if (!r.ready) return fail("benchmark did not complete: " + r.error);
  const double gap = r.mean_sr.at(key("baseline", "val", "per-free")) - r.mean_sr.at(key("baseline", "val", "per-based"));
  double slowest = 0.0;
  for (double s : r.run_seconds) slowest = std::max(slowest, s);
  const std::string d = "val gap " + fmt(gap * 100, 1) + " points (need >= 10); " + sr_line(r, "baseline", "val") +
                        "; " + sr_line(r, "baseline", "train") + "; slowest run " + fmt(slowest / 60.0, 1) + " min";
  return gap >= 0.10 ? pass(d) : fail(d);
}

Outcome proper_improvement(const BenchmarkResults& r) {
  if (!r.ready) return fail("benchmark did not complete: " + r.error);
  const double based = r.mean_sr.at(key("proper", "val", "per-based")) - r.mean_sr.at(key("baseline", "val", "per-based"));
  const double free = r.mean_sr.at(key("proper", "val", "per-free")) - r.mean_sr.at(key("baseline", "val", "per-free"));
  const std::string d = "val per-based " + fmt(based * 100, 1) + " points (need >= 5), per-free " +
                        fmt(free * 100, 1) + " points (need >= -1); " + sr_line(r, "proper", "val") + "; " +
                        sr_line(r, "proper", "train");
  return based >= 0.05 && free >= -0.01 ? pass(d) : fail(d);
}

// Replays a PROPER loss log against the PP dataset.
std::string audit_pool_log(const fs::path& log_file, const SceneMap& scenes, const PPDataset& pp, double& final_prop) {
  std::ifstream in(log_file);
  if (!in) return "missing " + log_file.string();
  double last = 0.0;
  std::size_t pool = 0, lines = 0;
  std::set<std::pair<std::string, EdgeKey>> keys;
  for (std::string line; std::getline(in, line);) {
    ++lines;
    const auto j = nlohmann::json::parse(line);
    const std::string at = "iteration " + std::to_string(j["iteration"].get<long>()) + ": ";
    const double prop = j["pool_proportion"].get<double>();
    if (prop < last) return at + "pool proportion decreased";
    last = prop;
    for (const auto& ins : j["inserted"]) {
      const PPEntry* e = pp.find(ins["path_id"].get<std::string>());
      if (e == nullptr) return at + "insertion for an unknown episode";
      const Scene& scene = scenes.at(e->episode.scan);
      const EdgeKey edge = make_edge(scene.index(ins["edge"][0].get<std::string>()),
                                     scene.index(ins["edge"][1].get<std::string>()));
      Path route;
      for (const auto& id : ins["rollout"]) route.push_back(scene.index(id.get<std::string>()));
      // the edge must be a deletable GT edge at the logged position...
      const int t = ins["t"].get<int>();
      const bool deletable = std::any_of(e->deletable.begin(), e->deletable.end(),
                                         [&](const DeletableEdge& d) { return d.t == t && d.edge() == edge; });
      if (!deletable) return at + "pooled edge is not a deletable GT edge";
      // ...walked by the logged rollout from the episode start
      if (route.empty() || route.front() != e->episode.start()) return at + "rollout does not start at the start";
      bool walked = false;
      for (std::size_t i = 0; i + 1 < route.size(); ++i) {
        if (!scene.adjacent(route[i], route[i + 1])) return at + "rollout leaves the graph";
        walked |= make_edge(route[i], route[i + 1]) == edge;
      }
      if (!walked) return at + "rollout never traversed the pooled edge";
      if (!keys.insert({e->episode.path_id, edge}).second) return at + "key pooled twice";
      ++pool;
    }
    if (j["pool_size"].get<std::size_t>() != pool) return at + "pool size disagrees with logged insertions";
  }
  if (lines == 0) return "empty log";
  final_prop = last;
  return "";
}

Outcome progressive_coupling(const Benchmark& b, const BenchmarkResults& r) {
  if (!r.ready) return fail("benchmark did not complete: " + r.error);
  const SceneMap scenes = cli::load_scene_set({b.world() / "scenes"});
  const PPDataset pp = pp_dataset_from_json(scenes, read_json(b.pp("train")));
  bool ok = true;
  std::string d;
  for (std::uint64_t seed : kTrainSeeds) {
    double final_prop = 0.0;
    const std::string problem = audit_pool_log(b.run("proper", seed) / "loss.jsonl", scenes, pp, final_prop);
    ok = ok && problem.empty() && final_prop >= 0.5;
    d += "seed " + std::to_string(seed) + ": final " + fmt(final_prop * 100, 1) + "%" +
         (problem.empty() ? "" : " (" + problem + ")") + "; ";
  }
  return ok ? pass(d + "proportion monotone, every insertion traced to a rollout over that edge")
            : fail(d);
}

Outcome determinism(const Benchmark& b, const BenchmarkResults& r) {
  if (!r.ready) return fail("benchmark did not complete: " + r.error);
  const Benchmark again{b.root / "rerun"};
  fs::remove_all(again.root);
  build_world(again.root);
  std::vector<std::pair<fs::path, fs::path>> pairs;
  for (const auto& e : fs::directory_iterator(b.world() / "scenes")) {
    pairs.emplace_back(e.path(), again.world() / "scenes" / e.path().filename());
  }
  for (const char* f : {"episodes_train.json", "episodes_val.json"}) pairs.emplace_back(b.world() / f, again.world() / f);
  for (const char* f : {"pp_train.json", "pp_val.json", "stats_train.json", "stats_val.json"}) {
    pairs.emplace_back(b.root / f, again.root / f);
  }
  // one training configuration rerun in full, then evaluated on the rerun data
  const std::uint64_t seed = kTrainSeeds.front();
  train_run(again, "proper", seed, again.run("proper", seed));
  for (const char* f : {"checkpoint.json", "loss.jsonl"}) {
    pairs.emplace_back(b.run("proper", seed) / f, again.run("proper", seed) / f);
  }
  for (const std::string protocol : {"per-free", "per-based"}) {
    eval_run(again, again.run("proper", seed), "val", protocol, again.report("proper", seed, "val", protocol));
    pairs.emplace_back(b.report("proper", seed, "val", protocol), again.report("proper", seed, "val", protocol));
  }
  std::size_t differ = 0;
  std::string first;
  for (const auto& [x, y] : pairs) {
    if (digest(x) != digest(y) || slurp(x) != slurp(y)) {
      ++differ;
      if (first.empty()) first = x.filename().string();
    }
  }
  const std::string d = std::to_string(pairs.size()) + " artifacts hashed (gen-world, build-pp, train, eval), " +
                        std::to_string(differ) + " differ" + (first.empty() ? "" : " (first: " + first + ")") +
                        "; proper seed 7 checkpoint " + digest(b.run("proper", seed) / "checkpoint.json");
  return differ == 0 ? pass(d) : fail(d);
}

// ---------------------------------------------------------------- 8

struct R2RSplit {
  const char* file;
  const char* name;
  std::size_t perturbable, total;
};

Outcome r2r_statistics(const std::optional<fs::path>& dir) {
  if (!dir || !fs::exists(*dir / "connectivity")) {
    return skip("no R2R data (expects <dir>/connectivity/*_connectivity.json and R2R_{train,val_seen,val_unseen}.json; "
                "pass --r2r DIR or set PROPER_R2R_DIR)");
  }
  const SceneMap scenes = cli::load_scene_set({*dir / "connectivity"});
  const R2RSplit splits[] = {{"R2R_train.json", "train", 4623, 4675},
                             {"R2R_val_seen.json", "val_seen", 335, 340},
                             {"R2R_val_unseen.json", "val_unseen", 769, 783}};
  bool ok = true;
  std::string d;
  for (const auto& s : splits) {
    const auto episodes = load_episodes(read_json(*dir / s.file), scenes);
    const PPDataset pp = build_pp_dataset(scenes, episodes, s.name);
    const SplitStats st = compute_stats(scenes, pp);
    ok = ok && st.perturbable == s.perturbable && st.trajectories == s.total;
    d += std::string(s.name) + " " + std::to_string(st.perturbable) + "/" + std::to_string(st.trajectories) + "; ";
    if (std::string(s.name) == "train") {
      const double hist[] = {12.72, 51.31, 35.97};
      const double pos[] = {85.59, 83.13, 91.97};
      for (int i = 0; i < 3; ++i) {
        ok = ok && std::abs(st.deletable_hist[i] * 100 - hist[i]) <= 0.5;
        ok = ok && std::abs(st.positional[i] * 100 - pos[i]) <= 0.5;
      }
      ok = ok && st.min_deletable == 1 && st.max_deletable == 6 && std::abs(st.mean_deletable - 4.0) <= 0.5;
      d += "bins " + fmt(st.deletable_hist[0] * 100, 2) + "/" + fmt(st.deletable_hist[1] * 100, 2) + "/" +
           fmt(st.deletable_hist[2] * 100, 2) + ", parts " + fmt(st.positional[0] * 100, 2) + "/" +
           fmt(st.positional[1] * 100, 2) + "/" + fmt(st.positional[2] * 100, 2) + ", deletable min/max/mean " +
           std::to_string(st.min_deletable) + "/" + std::to_string(st.max_deletable) + "/" +
           fmt(st.mean_deletable, 2) + "; ";
    }
  }
  return ok ? pass(d) : fail(d);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  fs::path work = fs::temp_directory_path() / "proper_acceptance";
  std::optional<fs::path> r2r;
  if (const char* env = std::getenv("PROPER_R2R_DIR")) r2r = fs::path(env);
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--work", work, "Scratch directory for the benchmark runs")->capture_default_str();
  app.add_option("--r2r", r2r, "Directory with R2R connectivity and trajectory files");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  bool failed = false;
  auto report = [&](int c, const std::function<Outcome()>& f) {
    if (!wanted(c)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = fail(std::string("threw: ") + e.what());
    }
    const char* tag = o.kind == Outcome::kPass ? "PASS" : o.kind == Outcome::kSkip ? "SKIP" : "FAIL";
    failed |= o.kind == Outcome::kFail;
    std::cout << "criterion " << c << ": " << tag << "  " << o.detail << "  [" << fmt(seconds_since(t0), 1) << " s]\n"
              << std::flush;
  };

  report(1, deletable_oracle);
  report(2, detour_oracle);
  report(3, gradient_checks);
  report(4, analytic_values);

  const Benchmark bench{work};
  BenchmarkResults results;
  if (wanted(5) || wanted(6) || wanted(7) || wanted(9)) {
    fs::remove_all(work);
    fs::create_directories(work);
    std::cout << "running the synthetic benchmark in " << work.string() << "\n" << std::flush;
    results = run_benchmark(bench);
  }
  report(5, [&] { return robustness_gap(results); });
  report(6, [&] { return proper_improvement(results); });
  report(7, [&] { return progressive_coupling(bench, results); });
  report(8, [&] { return r2r_statistics(r2r); });
  report(9, [&] { return determinism(bench, results); });
  return failed ? 1 : 0;
}
