#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "proper/worldgen.hpp"

namespace proper::oracle {

namespace {

Scene unit_square(const std::string& scan, const std::vector<std::pair<std::string, std::string>>& edges) {
  std::vector<NodeSpec> nodes = {
      {"A", {0, 0, 0}, 0}, {"B", {1, 0, 0}, 1}, {"C", {1, 1, 0}, 2}, {"D", {0, 1, 0}, 3}};
  return Scene(scan, nodes, edges);
}

double dist(const Scene& s, NodeIndex a, NodeIndex b) {
  const Position& p = s.position(a);
  const Position& q = s.position(b);
  return std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z));
}

}  // namespace

Scene square_s4() { return unit_square("S4", {{"A", "B"}, {"B", "C"}, {"C", "D"}, {"D", "A"}, {"A", "C"}}); }

Scene complete_k4() {
  return unit_square("K4", {{"A", "B"}, {"B", "C"}, {"C", "D"}, {"D", "A"}, {"A", "C"}, {"B", "D"}});
}

Scene line_xyz() {
  return Scene("XYZ", {{"X", {0, 0, 0}, 0}, {"Y", {1, 0, 0}, 1}, {"Z", {2, 0, 0}, 2}}, {{"X", "Y"}, {"Y", "Z"}});
}

std::vector<std::vector<NodeIndex>> adjacency(const Scene& scene, std::optional<EdgeKey> removed) {
  std::vector<std::vector<NodeIndex>> adj(scene.size());
  for (const EdgeKey& e : scene.edges()) {
    if (removed && ((e.a == removed->a && e.b == removed->b) || (e.a == removed->b && e.b == removed->a))) continue;
    adj[static_cast<std::size_t>(e.a)].push_back(e.b);
    adj[static_cast<std::size_t>(e.b)].push_back(e.a);
  }
  for (auto& l : adj) std::sort(l.begin(), l.end());
  return adj;
}

bool bfs_reachable(const std::vector<std::vector<NodeIndex>>& adj, NodeIndex src, NodeIndex dst) {
  std::vector<char> seen(adj.size(), 0);
  std::deque<NodeIndex> q{src};
  seen[static_cast<std::size_t>(src)] = 1;
  while (!q.empty()) {
    const NodeIndex u = q.front();
    q.pop_front();
    if (u == dst) return true;
    for (NodeIndex v : adj[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        q.push_back(v);
      }
    }
  }
  return false;
}

double mean_edge_length(const Scene& scene) {
  double total = 0.0;
  for (const EdgeKey& e : scene.edges()) total += dist(scene, e.a, e.b);
  return total / static_cast<double>(scene.edges().size());
}

void for_each_simple_path(const Scene& scene, const std::vector<std::vector<NodeIndex>>& adj, NodeIndex src,
                          NodeIndex dst, const std::function<bool(const Path&, double)>& visit) {
  Path path{src};
  std::vector<char> on(adj.size(), 0);
  on[static_cast<std::size_t>(src)] = 1;
  bool go = true;
  std::function<void(double)> dfs = [&](double len) {
    if (!go) return;
    const NodeIndex u = path.back();
    if (u == dst) {
      go = visit(path, len);
      return;
    }
    for (NodeIndex v : adj[static_cast<std::size_t>(u)]) {
      if (on[static_cast<std::size_t>(v)]) continue;
      on[static_cast<std::size_t>(v)] = 1;
      path.push_back(v);
      dfs(len + dist(scene, u, v));
      path.pop_back();
      on[static_cast<std::size_t>(v)] = 0;
      if (!go) return;
    }
  };
  dfs(0.0);
}

std::vector<DeletableEdge> deletable_edges(const Scene& scene, const Episode& episode) {
  const double r = mean_edge_length(scene);
  std::vector<DeletableEdge> out;
  for (std::size_t t = 0; t + 1 < episode.path.size(); ++t) {
    const NodeIndex c = episode.path[t];
    const NodeIndex n = episode.path[t + 1];
    const auto adj = adjacency(scene, EdgeKey{c, n});
    if (!bfs_reachable(adj, c, episode.goal())) continue;
    bool close = false;
    for (NodeIndex u : adj[static_cast<std::size_t>(c)]) close = close || dist(scene, u, n) < r;
    if (close) out.push_back({episode.path_id, static_cast<int>(t), c, n});
  }
  return out;
}

std::optional<Detour> best_detour(const Scene& scene, const Episode& episode, int t) {
  const auto ti = static_cast<std::size_t>(t);
  const NodeIndex c = episode.path[ti];
  const auto adj = adjacency(scene, EdgeKey{c, episode.path[ti + 1]});

  std::optional<Detour> best;
  std::size_t best_i = 0;
  for (std::size_t i = ti + 1; i < episode.path.size(); ++i) {
    const NodeIndex m = episode.path[i];
    for_each_simple_path(scene, adj, c, m, [&](const Path& p, double len) {
      const double tol = 1e-9 * std::max(1.0, len);
      bool better = false;
      if (!best || len < best->length - tol) {
        better = true;
      } else if (std::abs(len - best->length) <= tol) {
        better = i > best_i || (i == best_i && p < best->detour);
      }
      if (better) {
        best = Detour{m, p, len};
        best_i = i;
      }
      return true;
    });
  }
  return best;
}

std::string check_perturbed_invariants(const Scene& scene, const Episode& episode, const PerturbedGT& gt) {
  std::ostringstream err;
  const Path& gtp = episode.path;
  const Path& obs = gt.path_obs;
  const auto t = static_cast<std::size_t>(gt.t);
  if (obs.empty() || obs.front() != episode.start()) err << "does not start at s; ";
  if (obs.empty() || obs.back() != episode.goal()) err << "does not end at d; ";
  const auto adj = adjacency(scene);
  for (std::size_t i = 0; i + 1 < obs.size(); ++i) {
    const auto& nb = adj[static_cast<std::size_t>(obs[i])];
    if (!std::binary_search(nb.begin(), nb.end(), obs[i + 1])) err << "step " << i << " is not an edge; ";
    if (make_edge(obs[i], obs[i + 1]) == gt.edge()) err << "traverses the deleted edge; ";
  }
  if (obs.size() <= t || !std::equal(gtp.begin(), gtp.begin() + static_cast<std::ptrdiff_t>(t) + 1, obs.begin())) {
    err << "prefix differs from GT; ";
  }
  const auto mi = std::find(gtp.begin() + static_cast<std::ptrdiff_t>(t) + 1, gtp.end(), gt.detour);
  if (mi == gtp.end()) {
    err << "m not on the GT suffix; ";
  } else {
    const auto suffix = static_cast<std::size_t>(gtp.end() - mi);
    if (obs.size() < suffix || !std::equal(mi, gtp.end(), obs.end() - static_cast<std::ptrdiff_t>(suffix))) {
      err << "suffix from m differs from GT; ";
    }
  }
  double lo = 0.0, lp = 0.0;
  for (std::size_t i = 0; i + 1 < gtp.size(); ++i) lo += dist(scene, gtp[i], gtp[i + 1]);
  for (std::size_t i = 0; i + 1 < obs.size(); ++i) lp += dist(scene, obs[i], obs[i + 1]);
  if (lp < lo - 1e-9) err << "shorter than GT; ";
  return err.str();
}

Scene random_scene(std::uint64_t seed, int nodes) {
  Rng rng(seed);
  const double extent = std::sqrt(static_cast<double>(nodes)) * 2.0;
  const double radius = rng.uniform(2.0, 3.2);
  std::vector<NodeSpec> specs(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    std::string id = std::to_string(i);
    if (id.size() < 2) id.insert(0, "0");
    specs[static_cast<std::size_t>(i)] = {"v" + id, {rng.uniform(0, extent), rng.uniform(0, extent), 0.0}, i % 7};
  }
  std::vector<std::pair<std::string, std::string>> edges;
  auto d = [&](int a, int b) {
    const Position& p = specs[static_cast<std::size_t>(a)].pos;
    const Position& q = specs[static_cast<std::size_t>(b)].pos;
    return std::hypot(p.x - q.x, p.y - q.y);
  };
  for (int a = 0; a < nodes; ++a) {
    for (int b = a + 1; b < nodes; ++b) {
      if (d(a, b) < radius && rng.uniform() < 0.8) edges.emplace_back(specs[a].id, specs[b].id);
    }
  }
  // Spanning tree: each node links to its nearest predecessor in a random order.
  std::vector<int> order(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order.begin(), order.end());
  for (std::size_t k = 1; k < order.size(); ++k) {
    int nearest = order[0];
    for (std::size_t j = 0; j < k; ++j) {
      if (d(order[k], order[j]) < d(order[k], nearest)) nearest = order[j];
    }
    const auto& u = specs[static_cast<std::size_t>(order[k])].id;
    const auto& v = specs[static_cast<std::size_t>(nearest)].id;
    const bool dup = std::any_of(edges.begin(), edges.end(), [&](const auto& e) {
      return (e.first == u && e.second == v) || (e.first == v && e.second == u);
    });
    if (!dup) edges.emplace_back(u, v);
  }
  return Scene("rand" + std::to_string(seed % 100000), std::move(specs), edges);
}

Episode random_episode(const Scene& scene, std::uint64_t seed, const std::string& path_id) {
  Rng rng(seed);
  const auto n = scene.size();
  NodeIndex s = static_cast<NodeIndex>(rng.below(n));
  NodeIndex g = static_cast<NodeIndex>(rng.below(n - 1));
  if (g >= s) ++g;
  Episode ep;
  ep.path_id = path_id;
  ep.scan = scene.scan();
  ep.path = shortest_path(scene, s, g, std::nullopt);
  ep.heading = rng.uniform(-3.14159, 3.14159);
  ep.instruction = make_instruction(scene, ep.path, ep.heading);
  return ep;
}

Corpus random_corpus(std::uint64_t seed, int count, int per_scene) {
  Corpus c;
  for (int i = 0; i < count; ++i) {
    Rng pick(derive_seed(seed, "size", static_cast<std::uint64_t>(i)));
    const int nodes = 5 + static_cast<int>(pick.below(26));
    c.scenes.push_back(random_scene(derive_seed(seed, "scene", static_cast<std::uint64_t>(i)), nodes));
    std::vector<Episode> eps;
    for (int k = 0; k < per_scene; ++k) {
      eps.push_back(random_episode(c.scenes.back(), derive_seed(seed, "ep" + std::to_string(i), static_cast<std::uint64_t>(k)),
                                   "s" + std::to_string(i) + "-" + std::to_string(k)));
    }
    c.episodes.push_back(std::move(eps));
  }
  return c;
}

namespace {

void record(GradCheck& out, double a, double n, const std::string& where) {
  const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), kGradFloor});
  ++out.checked;
  if (rel > out.max_rel_error || !std::isfinite(rel)) {
    out.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
    out.worst = where;
  }
}

}  // namespace

GradCheck check_param_gradients(const ModelParams& params, const Gradients& analytic,
                                const std::function<double(const ModelParams&)>& loss, Rng& rng, int per_tensor,
                                double h) {
  GradCheck out;
  std::vector<std::pair<std::string, const ad::Matrix*>> grads;
  analytic.for_each([&](const char* name, const ad::Matrix& m) { grads.emplace_back(name, &m); });
  std::size_t tensor = 0;
  params.for_each([&](const char* name, const ad::Matrix& m) {
    const ad::Matrix& g = *grads[tensor++].second;
    const auto size = static_cast<std::uint64_t>(m.size());
    std::vector<Eigen::Index> coords;
    if (size <= static_cast<std::uint64_t>(per_tensor)) {
      for (Eigen::Index k = 0; k < m.size(); ++k) coords.push_back(k);
    } else {
      for (int k = 0; k < per_tensor; ++k) coords.push_back(static_cast<Eigen::Index>(rng.below(size)));
    }
    for (Eigen::Index k : coords) {
      auto shifted = [&](double delta) {
        ModelParams p = params;
        p.for_each([&](const char* n, ad::Matrix& t) {
          if (std::string(n) == name) t.data()[k] += delta;
        });
        return loss(p);
      };
      const double numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
      record(out, g.data()[k], numeric, std::string(name) + "[" + std::to_string(k) + "]");
    }
  });
  return out;
}

GradCheck check_input_gradients(const std::vector<ad::Matrix>& inputs, const std::vector<ad::Matrix>& analytic,
                                const std::function<double(const std::vector<ad::Matrix>&)>& loss, double h) {
  GradCheck out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      auto shifted = [&](double delta) {
        auto p = inputs;
        p[i].data()[k] += delta;
        return loss(p);
      };
      const double numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
      record(out, analytic[i].data()[k], numeric, "input" + std::to_string(i) + "[" + std::to_string(k) + "]");
    }
  }
  return out;
}

std::vector<double> critic_values(const RolloutRecord& record) {
  std::vector<double> v;
  for (const auto& s : record.steps) v.push_back(s.value.scalar());
  return v;
}

double frozen_rl(const RolloutRecord& record, std::span<const double> baseline, double gamma) {
  // Returns accumulated backwards from the last step without bootstrap.
  std::vector<double> ret(record.steps.size());
  double acc = 0.0;
  for (std::size_t i = record.steps.size(); i-- > 0;) {
    acc = record.steps[i].reward + gamma * acc;
    ret[i] = acc;
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < record.steps.size(); ++i) {
    const auto& s = record.steps[i];
    loss += -s.log_prob.scalar() * (ret[i] - baseline[i]);
    loss += 0.5 * (s.value.scalar() - ret[i]) * (s.value.scalar() - ret[i]);
  }
  return loss;
}

double info_nce_formula(const Eigen::VectorXd& a, const Eigen::VectorXd& p, const std::vector<Eigen::VectorXd>& negs,
                        double tau) {
  auto sim = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return x.dot(y) / (x.norm() * y.norm()); };
  const double pos = std::exp(sim(a, p) / tau);
  double den = pos;
  for (const auto& n : negs) den += std::exp(sim(a, n) / tau);
  return -std::log(pos / den);
}

TinyWorld tiny_world(std::uint64_t seed, int episodes, int dim) {
  TinyWorld w;
  WorldConfig wc;
  wc.nodes = 14;
  wc.extent = 9.0;
  wc.radius = 3.6;
  wc.landmarks = 6;
  wc.min_hops = 2;
  wc.max_hops = 4;
  wc.seed = seed;
  wc.scan = "tiny";
  Scene scene = generate_scene(wc);
  std::vector<Episode> eps;
  for (int k = 0; k < episodes; ++k) {
    eps.push_back(sample_episode(scene, wc, derive_seed(seed, "tiny-episode", static_cast<std::uint64_t>(k)),
                                 "tiny-" + std::to_string(1000 + k)));
  }
  w.scenes.emplace(scene.scan(), std::move(scene));
  w.data = build_pp_dataset(w.scenes, eps, "train");
  w.model.dim = dim;
  w.model.vocab = tokens::vocab_size(wc.landmarks);
  return w;
}

}  // namespace proper::oracle
