#include "proper/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "proper/errors.hpp"

namespace proper {

namespace fs = std::filesystem;

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(Errc::kParseError, path.string() + ": " + ex.what());
  }
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIoError, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(Errc::kIoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::kIoError, "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

void write_json_atomic(const fs::path& path, const nlohmann::json& j) { write_text_atomic(path, j.dump(1) + "\n"); }

Scene load_scene_r2r(const nlohmann::json& connectivity, const std::string& scan, std::vector<std::string>* warnings) {
  if (!connectivity.is_array()) throw Error(Errc::kParseError, scan + ": connectivity must be an array");
  const std::size_t count = connectivity.size();
  std::vector<NodeSpec> nodes;
  std::vector<std::string> ids(count);
  std::vector<char> included(count, 0);
  std::vector<std::vector<char>> open(count);

  for (std::size_t i = 0; i < count; ++i) {
    const auto& vp = connectivity[i];
    const std::string where = scan + ": viewpoint " + std::to_string(i);
    try {
      ids[i] = vp.at("image_id").get<std::string>();
      included[i] = vp.value("included", true) ? 1 : 0;
      const auto& pose = vp.at("pose");
      if (!pose.is_array() || pose.size() != 16) {
        throw Error(Errc::kParseError, where + ": field 'pose' must have 16 entries");
      }
      const auto& row = vp.at("unobstructed");
      if (!row.is_array() || row.size() != count) {
        throw Error(Errc::kParseError, where + ": field 'unobstructed' must have " + std::to_string(count) + " entries");
      }
      open[i].resize(count);
      for (std::size_t k = 0; k < count; ++k) open[i][k] = row[k].get<bool>() ? 1 : 0;
      if (included[i]) {
        nodes.push_back({ids[i], {pose[3].get<double>(), pose[7].get<double>(), pose[11].get<double>()}, -1});
      }
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::kParseError, where + ": " + ex.what());
    }
  }

  std::vector<std::pair<std::string, std::string>> edges;
  for (std::size_t i = 0; i < count; ++i) {
    if (!included[i]) continue;
    for (std::size_t k = i + 1; k < count; ++k) {
      if (!included[k]) continue;
      if (open[i][k] && open[k][i]) {
        edges.emplace_back(ids[i], ids[k]);
      } else if ((open[i][k] || open[k][i]) && warnings) {
        warnings->push_back("AsymmetricAdjacency: " + scan + " " + ids[i] + " / " + ids[k] + " dropped");
      }
    }
  }
  return Scene(scan, std::move(nodes), edges);
}

Scene load_scene_r2r(const fs::path& file, std::vector<std::string>* warnings) {
  std::string scan = file.stem().string();
  if (const auto pos = scan.find("_connectivity"); pos != std::string::npos) scan.erase(pos);
  return load_scene_r2r(read_json(file), scan, warnings);
}

Scene load_scene_file(const fs::path& file, std::vector<std::string>* warnings) {
  const auto j = read_json(file);
  if (j.is_object()) return scene_from_json(j);
  std::string scan = file.stem().string();
  if (const auto pos = scan.find("_connectivity"); pos != std::string::npos) scan.erase(pos);
  return load_scene_r2r(j, scan, warnings);
}

std::vector<Episode> load_episodes(const nlohmann::json& j, const SceneMap& scenes, std::vector<std::string>* errors) {
  if (!j.is_array()) throw Error(Errc::kParseError, "episode file must hold a JSON array");
  std::vector<Episode> out;
  for (const auto& rec : j) {
    const std::string scan = rec.value("scan", "");
    const auto it = scenes.find(scan);
    if (it == scenes.end()) {
      if (errors) errors->push_back("episode references unloaded scan '" + scan + "'");
      continue;
    }
    try {
      out.push_back(episode_from_json(it->second, rec));
    } catch (const Error& ex) {
      if (!errors) throw;
      errors->push_back(ex.what());
    }
  }
  return out;
}

std::size_t PPDataset::perturbable_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const PPEntry& e) { return e.perturbable(); }));
}

const PPEntry* PPDataset::find(const std::string& path_id) const {
  const auto it = std::lower_bound(entries.begin(), entries.end(), path_id,
                                   [](const PPEntry& e, const std::string& id) { return e.episode.path_id < id; });
  if (it == entries.end() || it->episode.path_id != path_id) return nullptr;
  return &*it;
}

PPDataset build_pp_dataset(const SceneMap& scenes, const std::vector<Episode>& episodes, std::string split,
                           const DeletionOptions& options) {
  PPDataset pp;
  pp.split = std::move(split);
  for (const auto& ep : episodes) {
    const auto it = scenes.find(ep.scan);
    if (it == scenes.end()) {
      pp.errors.push_back("InvalidEpisode: " + ep.path_id + " references unloaded scan " + ep.scan);
      continue;
    }
    PPEntry entry{ep, {}, {}};
    try {
      entry.deletable = collect_deletable_edges(it->second, ep, options);
      for (const auto& d : entry.deletable) entry.perturbed.push_back(build_perturbed_gt(it->second, ep, d));
    } catch (const Error& ex) {
      pp.errors.push_back(ex.what());
      continue;
    }
    pp.entries.push_back(std::move(entry));
  }
  std::sort(pp.entries.begin(), pp.entries.end(),
            [](const PPEntry& a, const PPEntry& b) { return a.episode.path_id < b.episode.path_id; });
  for (const auto& e : pp.entries) pp.scans.push_back(e.episode.scan);
  std::sort(pp.scans.begin(), pp.scans.end());
  pp.scans.erase(std::unique(pp.scans.begin(), pp.scans.end()), pp.scans.end());
  return pp;
}

nlohmann::json pp_dataset_to_json(const SceneMap& scenes, const PPDataset& pp) {
  nlohmann::json episodes = nlohmann::json::array();
  nlohmann::json perturbed = nlohmann::json::array();
  for (const auto& e : pp.entries) {
    const Scene& scene = scenes.at(e.episode.scan);
    auto rec = episode_to_json(scene, e.episode);
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& d : e.deletable) ts.push_back(d.t);
    rec["deletable"] = std::move(ts);
    episodes.push_back(std::move(rec));
    for (const auto& gt : e.perturbed) perturbed.push_back(perturbed_gt_to_json(scene, gt));
  }
  return {{"split", pp.split},
          {"scans", pp.scans},
          {"episodes", std::move(episodes)},
          {"perturbed", std::move(perturbed)},
          {"errors", pp.errors}};
}

PPDataset pp_dataset_from_json(const SceneMap& scenes, const nlohmann::json& j) {
  PPDataset pp;
  try {
    pp.split = j.value("split", "");
    pp.scans = j.value("scans", std::vector<std::string>{});
    pp.errors = j.value("errors", std::vector<std::string>{});
    std::map<std::string, std::size_t> by_id;
    for (const auto& rec : j.at("episodes")) {
      const std::string scan = rec.at("scan").get<std::string>();
      const auto it = scenes.find(scan);
      if (it == scenes.end()) throw Error(Errc::kParseError, "PP dataset references unloaded scan " + scan);
      PPEntry entry{episode_from_json(it->second, rec), {}, {}};
      for (int t : rec.value("deletable", std::vector<int>{})) {
        const auto ut = static_cast<std::size_t>(t);
        if (t < 0 || ut + 1 >= entry.episode.path.size()) {
          throw Error(Errc::kParseError, "deletable position out of range in " + entry.episode.path_id);
        }
        entry.deletable.push_back({entry.episode.path_id, t, entry.episode.path[ut], entry.episode.path[ut + 1]});
      }
      by_id[entry.episode.path_id] = pp.entries.size();
      pp.entries.push_back(std::move(entry));
    }
    for (const auto& rec : j.at("perturbed")) {
      const std::string id = rec.at("path_id").get<std::string>();
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(Errc::kParseError, "perturbed record for unknown episode " + id);
      auto& entry = pp.entries[it->second];
      entry.perturbed.push_back(perturbed_gt_from_json(scenes.at(entry.episode.scan), rec));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::kParseError, std::string("PP dataset json: ") + ex.what());
  }
  std::sort(pp.entries.begin(), pp.entries.end(),
            [](const PPEntry& a, const PPEntry& b) { return a.episode.path_id < b.episode.path_id; });
  return pp;
}

int path_part(std::size_t node_index, std::size_t node_count) {
  const std::size_t third = node_count / 3;
  if (node_index < third) return 0;
  if (node_index >= node_count - third) return 2;
  return 1;
}

SplitStats compute_stats(const SceneMap& scenes, const PPDataset& pp) {
  if (pp.entries.empty()) throw Error(Errc::kEmptyDataset, "split '" + pp.split + "' has no episodes");
  SplitStats s;
  s.split = pp.split;
  s.trajectories = pp.entries.size();
  std::size_t obs_count = 0;
  std::array<std::size_t, 3> hist{};
  std::array<std::size_t, 3> parts{};
  std::size_t deletable_total = 0;
  s.min_deletable = SIZE_MAX;

  for (const auto& e : pp.entries) {
    const Scene& scene = scenes.at(e.episode.scan);
    s.mean_steps += static_cast<double>(e.episode.path.size());
    s.mean_distance += path_length(SceneView(scene), e.episode.path);
    if (!e.perturbable()) continue;

    ++s.perturbable;
    const std::size_t k = e.deletable.size();
    deletable_total += k;
    s.min_deletable = std::min(s.min_deletable, k);
    s.max_deletable = std::max(s.max_deletable, k);
    ++hist[k <= 2 ? 0 : (k <= 4 ? 1 : 2)];

    std::array<bool, 3> seen{};
    for (const auto& d : e.deletable) {
      seen[static_cast<std::size_t>(path_part(static_cast<std::size_t>(d.t), e.episode.path.size()))] = true;
    }
    for (std::size_t p = 0; p < 3; ++p) parts[p] += seen[p] ? 1 : 0;

    for (const auto& gt : e.perturbed) {
      s.pp_mean_steps += static_cast<double>(gt.path_obs.size());
      s.pp_mean_distance += path_length(SceneView(scene, {gt.edge()}), gt.path_obs);
      ++obs_count;
    }
  }

  s.mean_steps /= static_cast<double>(s.trajectories);
  s.mean_distance /= static_cast<double>(s.trajectories);
  if (s.perturbable == 0) {
    s.min_deletable = 0;
    return s;
  }
  const auto np = static_cast<double>(s.perturbable);
  s.pp_mean_steps /= static_cast<double>(obs_count);
  s.pp_mean_distance /= static_cast<double>(obs_count);
  s.mean_deletable = static_cast<double>(deletable_total) / np;
  for (std::size_t i = 0; i < 3; ++i) {
    s.deletable_hist[i] = static_cast<double>(hist[i]) / np;
    s.positional[i] = static_cast<double>(parts[i]) / np;
  }
  return s;
}

nlohmann::json stats_to_json(const SplitStats& s) {
  return {{"split", s.split},
          {"trajectories", s.trajectories},
          {"mean_steps", s.mean_steps},
          {"mean_distance", s.mean_distance},
          {"perturbable", s.perturbable},
          {"pp_mean_steps", s.pp_mean_steps},
          {"pp_mean_distance", s.pp_mean_distance},
          {"deletable", {{"min", s.min_deletable}, {"max", s.max_deletable}, {"mean", s.mean_deletable}}},
          {"deletable_hist", {{"1-2", s.deletable_hist[0]}, {"2-4", s.deletable_hist[1]}, {"4-6+", s.deletable_hist[2]}}},
          {"positional", {{"beginning", s.positional[0]}, {"middle", s.positional[1]}, {"end", s.positional[2]}}}};
}

std::string stats_to_text(const std::vector<SplitStats>& stats) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "split" << std::right << std::setw(8) << "traj" << std::setw(8) << "steps"
     << std::setw(9) << "dist" << std::setw(8) << "pp" << std::setw(9) << "pp_stp" << std::setw(9) << "pp_dist"
     << std::setw(6) << "min" << std::setw(6) << "max" << std::setw(7) << "avg" << std::setw(8) << "1-2"
     << std::setw(8) << "2-4" << std::setw(8) << "4-6+" << std::setw(8) << "begin" << std::setw(8) << "middle"
     << std::setw(8) << "end" << '\n';
  os << std::fixed;
  for (const auto& s : stats) {
    os << std::left << std::setw(12) << s.split << std::right << std::setw(8) << s.trajectories
       << std::setprecision(2) << std::setw(8) << s.mean_steps << std::setw(9) << s.mean_distance << std::setw(8)
       << s.perturbable << std::setw(9) << s.pp_mean_steps << std::setw(9) << s.pp_mean_distance << std::setw(6)
       << s.min_deletable << std::setw(6) << s.max_deletable << std::setw(7) << s.mean_deletable;
    for (double v : s.deletable_hist) os << std::setw(7) << v * 100.0 << '%';
    for (double v : s.positional) os << std::setw(7) << v * 100.0 << '%';
    os << '\n';
  }
  return os.str();
}

}  // namespace proper
