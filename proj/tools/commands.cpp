#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "proper/checkpoint.hpp"
#include "proper/dataset_io.hpp"
#include "proper/errors.hpp"

namespace proper::cli {

int exit_code(Errc code) {
  switch (code) {
    case Errc::kConfigError: return kExitConfig;
    case Errc::kNonFiniteLoss: return kExitNumeric;
    default: return kExitData;
  }
}

namespace {

std::string padded(std::int64_t v, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << v;
  return os.str();
}

void require_exists(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw Error(Errc::kIoError, std::string(what) + " not found: " + p.string());
}

void require_output_dir(const fs::path& dir) {
  if (dir.empty()) throw Error(Errc::kConfigError, "an output path is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::kIoError, "cannot create " + dir.string() + ": " + ec.message());
}

void require_parent(const fs::path& file) {
  if (file.empty()) throw Error(Errc::kConfigError, "an output path is required");
  if (file.has_parent_path()) require_output_dir(file.parent_path());
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

PPDataset load_pp(const SceneMap& scenes, const fs::path& file) {
  PPDataset pp = pp_dataset_from_json(scenes, read_json(file));
  if (pp.entries.empty()) throw Error(Errc::kEmptyDataset, "dataset " + file.string() + " has no episodes");
  return pp;
}

void check_vocab(const PPDataset& pp, int vocab) {
  for (const auto& e : pp.entries) {
    for (int tok : e.episode.instruction) {
      if (tok < 0 || tok >= vocab) {
        throw Error(Errc::kUnknownToken, "episode " + e.episode.path_id + " uses token " + std::to_string(tok) +
                                             " outside the model vocabulary of " + std::to_string(vocab));
      }
    }
  }
}

}  // namespace

SceneMap load_scene_set(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    require_exists(in, "scene input");
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".json") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  SceneMap scenes;
  for (const auto& f : files) {
    Scene s = load_scene_file(f);
    const std::string scan = s.scan();
    if (!scenes.emplace(scan, std::move(s)).second) throw Error(Errc::kParseError, "duplicate scan " + scan);
  }
  if (scenes.empty()) throw Error(Errc::kEmptyDataset, "no scene files found");
  return scenes;
}

void cmd_gen_world(const GenWorldConfig& config, std::ostream& log) {
  config.world.validate_hops();
  if (config.scenes < 1) throw Error(Errc::kConfigError, "at least one scene is required");
  if (config.train_episodes < 0 || config.val_episodes < 0) throw Error(Errc::kConfigError, "negative episode count");
  require_output_dir(config.out / "scenes");

  std::vector<Scene> scenes;
  std::size_t edges = 0;
  for (int s = 0; s < config.scenes; ++s) {
    WorldConfig w = config.world;
    w.seed = derive_seed(config.world.seed, "scene", static_cast<std::uint64_t>(s));
    w.scan = "synth" + std::to_string(config.world.seed) + "_" + padded(s, 2);
    scenes.push_back(generate_scene(w));
    edges += scenes.back().edges().size();
  }

  auto episodes = [&](const std::string& split, int count) {
    nlohmann::json arr = nlohmann::json::array();
    for (int k = 0; k < count; ++k) {
      const Scene& scene = scenes[static_cast<std::size_t>(k % config.scenes)];
      const auto seed = derive_seed(config.world.seed, "episode:" + split, static_cast<std::uint64_t>(k));
      arr.push_back(episode_to_json(scene, sample_episode(scene, config.world, seed, split + "-" + padded(k, 4))));
    }
    return arr;
  };
  const auto train = episodes("train", config.train_episodes);
  const auto val = episodes("val", config.val_episodes);

  for (const auto& s : scenes) write_text_atomic(config.out / "scenes" / (s.scan() + ".json"), dump(scene_to_json(s)));
  write_text_atomic(config.out / "episodes_train.json", dump(train));
  write_text_atomic(config.out / "episodes_val.json", dump(val));
  log << "wrote " << scenes.size() << " scenes (" << scenes.size() * static_cast<std::size_t>(config.world.nodes)
      << " nodes, " << edges << " edges), " << config.train_episodes << " train and " << config.val_episodes
      << " val episodes to " << config.out.string() << "\n";
}

void cmd_build_pp(const BuildPPConfig& config, std::ostream& log) {
  require_exists(config.episodes, "episode file");
  require_parent(config.out);
  if (config.stats) require_parent(*config.stats);

  const SceneMap scenes = load_scene_set(config.scenes);
  std::vector<std::string> errors;
  const auto episodes = load_episodes(read_json(config.episodes), scenes, &errors);
  for (const auto& e : errors) log << "warning: " << e << "\n";
  if (episodes.empty()) throw Error(Errc::kEmptyDataset, "no usable episodes in " + config.episodes.string());

  DeletionOptions options;
  options.check = config.check;
  const PPDataset pp = build_pp_dataset(scenes, episodes, config.split, options);
  for (const auto& e : pp.errors) log << "warning: " << e << "\n";
  const SplitStats stats = compute_stats(scenes, pp);

  write_text_atomic(config.out, dump(pp_dataset_to_json(scenes, pp)));
  if (config.stats) write_text_atomic(*config.stats, dump(stats_to_json(stats)));
  log << stats_to_text({stats});
}

void apply_train_config_file(const nlohmann::json& j, TrainRunConfig& c) {
  if (!j.is_object()) throw Error(Errc::kConfigError, "training config must be a JSON object");
  static const std::set<std::string> known{
      "mode",      "seed",      "iterations",      "batch_size",  "learning_rate", "clip_norm",
      "max_steps", "dim",       "vocab",           "il_weight",   "contrast_free_weight",
      "contrast_perturbed_weight", "tau",          "gamma",       "stop_gradient_targets",
      "use_pool",  "checkpoint_every", "scenes",   "dataset",     "out",
      "optimizer", "adam_beta1", "adam_beta2",     "adam_epsilon"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(Errc::kConfigError, "unknown config key '" + key + "'");
  }
  try {
    TrainConfig& t = c.train;
    if (j.contains("mode")) t.mode = train_mode_from_string(j["mode"].get<std::string>());
    if (j.contains("seed")) t.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("iterations")) t.iterations = j["iterations"].get<std::int64_t>();
    if (j.contains("batch_size")) t.batch_size = j["batch_size"].get<int>();
    if (j.contains("learning_rate")) t.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("clip_norm")) t.clip_norm = j["clip_norm"].get<double>();
    if (j.contains("max_steps")) t.max_steps = j["max_steps"].get<int>();
    if (j.contains("dim")) t.model.dim = j["dim"].get<int>();
    if (j.contains("vocab")) t.model.vocab = j["vocab"].get<int>();
    if (j.contains("il_weight")) t.weights.il = j["il_weight"].get<double>();
    if (j.contains("contrast_free_weight")) t.weights.contrast_free = j["contrast_free_weight"].get<double>();
    if (j.contains("contrast_perturbed_weight")) {
      t.weights.contrast_perturbed = j["contrast_perturbed_weight"].get<double>();
    }
    if (j.contains("tau")) t.weights.tau = j["tau"].get<double>();
    if (j.contains("gamma")) t.weights.gamma = j["gamma"].get<double>();
    if (j.contains("stop_gradient_targets")) t.weights.stop_gradient_targets = j["stop_gradient_targets"].get<bool>();
    if (j.contains("use_pool")) t.use_pool = j["use_pool"].get<bool>();
    if (j.contains("optimizer")) t.optimizer = optimizer_from_string(j["optimizer"].get<std::string>());
    if (j.contains("adam_beta1")) t.adam_beta1 = j["adam_beta1"].get<double>();
    if (j.contains("adam_beta2")) t.adam_beta2 = j["adam_beta2"].get<double>();
    if (j.contains("adam_epsilon")) t.adam_epsilon = j["adam_epsilon"].get<double>();
    if (j.contains("checkpoint_every")) c.checkpoint_every = j["checkpoint_every"].get<std::int64_t>();
    if (j.contains("scenes")) {
      c.scenes.clear();
      if (j["scenes"].is_string()) {
        c.scenes.emplace_back(j["scenes"].get<std::string>());
      } else {
        for (const auto& s : j["scenes"]) c.scenes.emplace_back(s.get<std::string>());
      }
    }
    if (j.contains("dataset")) c.dataset = j["dataset"].get<std::string>();
    if (j.contains("out")) c.out = j["out"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kConfigError, std::string("bad value in training config: ") + e.what());
  }
}

void cmd_train(const TrainRunConfig& config, std::ostream& log) {
  config.train.validate();
  if (config.checkpoint_every < 0) throw Error(Errc::kConfigError, "checkpoint cadence must be non-negative");
  if (config.scenes.empty()) throw Error(Errc::kConfigError, "training needs --scenes");
  require_exists(config.dataset, "dataset");
  for (const auto& s : config.scenes) require_exists(s, "scene input");
  if (config.resume) require_exists(*config.resume, "checkpoint");
  require_output_dir(config.out);

  const SceneMap scenes = load_scene_set(config.scenes);
  const PPDataset pp = load_pp(scenes, config.dataset);
  check_vocab(pp, config.train.model.vocab);

  Trainer trainer(scenes, pp, config.train, init_params(config.train.model, derive_seed(config.train.seed, "params")));
  const fs::path loss_file = config.out / "loss.jsonl";
  const fs::path ckpt_file = config.out / "checkpoint.json";
  std::vector<std::string> lines;
  if (config.resume) {
    Checkpoint ck = load_checkpoint(*config.resume);
    if (ck.trainer.is_null()) throw Error(Errc::kParseError, "checkpoint carries no trainer state");
    trainer.restore(std::move(ck.params), ck.trainer);
    if (fs::exists(loss_file)) {
      std::ifstream in(loss_file);
      for (std::string line; std::getline(in, line) && static_cast<std::int64_t>(lines.size()) < trainer.iteration();) {
        lines.push_back(line);
      }
    }
    log << "resumed at iteration " << trainer.iteration() << "\n";
  }

  auto flush = [&] {
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write_text_atomic(loss_file, text);
    save_checkpoint(ckpt_file, trainer.params(), trainer.state_to_json());
  };

  const std::int64_t every = config.checkpoint_every;
  const std::int64_t progress = std::max<std::int64_t>(1, config.train.iterations / 20);
  while (trainer.iteration() < config.train.iterations) {
    const LossReport r = trainer.step();
    lines.push_back(loss_report_to_json(r, &scenes).dump());
    if (trainer.iteration() % progress == 0) {
      log << "iter " << trainer.iteration() << " total " << r.total << " il " << r.il << " rl " << r.rl << " lf "
          << r.contrast_free << " lp " << r.contrast_perturbed << " pool " << r.pool_size << " ("
          << r.pool_proportion * 100.0 << "% of perturbable)\n";
    }
    if (every > 0 && trainer.iteration() % every == 0) flush();
  }
  flush();
  log << "trained " << trainer.iteration() << " iterations (" << to_string(config.train.mode) << ", seed "
      << config.train.seed << "); checkpoint " << ckpt_file.string() << "\n";
}

void cmd_eval(const EvalRunConfig& config, std::ostream& log) {
  if (config.scenes.empty()) throw Error(Errc::kConfigError, "evaluation needs --scenes");
  if (!(config.protocol.success_radius > 0.0)) throw Error(Errc::kConfigError, "success radius must be positive");
  if (config.protocol.max_steps < 1) throw Error(Errc::kConfigError, "max steps must be positive");
  require_exists(config.checkpoint, "checkpoint");
  require_exists(config.dataset, "dataset");
  for (const auto& s : config.scenes) require_exists(s, "scene input");
  require_parent(config.out);

  const Checkpoint ck = load_checkpoint(config.checkpoint);
  const SceneMap scenes = load_scene_set(config.scenes);
  const PPDataset pp = load_pp(scenes, config.dataset);
  check_vocab(pp, ck.params.vocab);
  const EvalReport report = evaluate(ck.params, scenes, pp, config.protocol);
  write_text_atomic(config.out, dump(eval_report_to_json(report)));
  const Metrics& m = report.metrics;
  log << std::fixed << std::setprecision(2) << to_string(config.protocol.mode) << " " << report.split << ": "
      << m.episodes << " episodes  TL " << m.tl << "  NE " << m.ne << "  SR " << m.sr * 100.0 << "  SPL "
      << m.spl * 100.0 << "\n";
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Navigation agents trained to recover from blocked paths", "proper"};
  app.require_subcommand(1);

  GenWorldConfig gen;
  auto* gen_cmd = app.add_subcommand("gen-world", "Generate synthetic scenes and train/val episodes");
  gen_cmd->add_option("--nodes", gen.world.nodes, "Nodes per scene")->capture_default_str();
  gen_cmd->add_option("--scenes", gen.scenes, "Number of scenes")->capture_default_str();
  gen_cmd->add_option("--episodes", gen.train_episodes, "Training episodes")->capture_default_str();
  gen_cmd->add_option("--val-episodes", gen.val_episodes, "Validation episodes")->capture_default_str();
  gen_cmd->add_option("--seed", gen.world.seed, "Root seed")->capture_default_str();
  gen_cmd->add_option("--radius", gen.world.radius, "Connection radius in meters")->capture_default_str();
  gen_cmd->add_option("--extent", gen.world.extent, "Side of the placement square in meters")->capture_default_str();
  gen_cmd->add_option("--landmarks", gen.world.landmarks, "Landmark vocabulary size")->capture_default_str();
  gen_cmd->add_option("--min-hops", gen.world.min_hops, "Minimum GT hop count")->capture_default_str();
  gen_cmd->add_option("--max-hops", gen.world.max_hops, "Maximum GT hop count")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  BuildPPConfig pp;
  std::string check = "current";
  auto* pp_cmd = app.add_subcommand("build-pp", "Enumerate deletable edges and perturbation-aware references");
  pp_cmd->add_option("--scenes", pp.scenes, "Scene files or directories (scene JSON or R2R connectivity)")
      ->required();
  pp_cmd->add_option("--episodes", pp.episodes, "Episode JSON file")->required();
  pp_cmd->add_option("--split", pp.split, "Split name")->capture_default_str();
  pp_cmd->add_option("--out", pp.out, "Output dataset JSON")->required();
  pp_cmd->add_option("--stats", pp.stats, "Also write split statistics JSON here");
  pp_cmd->add_option("--reachability", check, "Reachability test: current (c_t to goal) or start (start to goal)")
      ->check(CLI::IsMember({"current", "start"}))
      ->capture_default_str();

  TrainRunConfig tr;
  std::optional<fs::path> config_file;
  std::string mode = "proper";
  std::uint64_t seed = 0;
  std::int64_t iterations = 0;
  std::int64_t every = 0;
  int batch = 0, max_steps = 0, dim = 0, vocab = 0;
  double lr = 0, clip = 0, il_w = 0, lf_w = 0, lp_w = 0, tau = 0, gamma = 0;
  std::string optimizer = "sgd";
  std::vector<fs::path> train_scenes;
  fs::path dataset, out_dir;
  bool stop_grad = false, no_pool = false;
  auto* train_cmd = app.add_subcommand("train", "Train an agent; flags override the config file");
  train_cmd->add_option("--config", config_file, "Training config JSON");
  auto* o_scenes = train_cmd->add_option("--scenes", train_scenes, "Scene files or directories");
  auto* o_dataset = train_cmd->add_option("--dataset", dataset, "PP dataset JSON from build-pp");
  auto* o_out = train_cmd->add_option("--out", out_dir, "Output directory");
  auto* o_mode = train_cmd->add_option("--mode", mode, "baseline, proper or teacher2student")
                     ->check(CLI::IsMember({"baseline", "proper", "teacher2student"}));
  auto* o_seed = train_cmd->add_option("--seed", seed, "Root seed");
  auto* o_iter = train_cmd->add_option("--iterations", iterations, "Iteration budget (default 20000)");
  auto* o_batch = train_cmd->add_option("--batch-size", batch, "Episodes per iteration (default 4)");
  auto* o_lr = train_cmd->add_option("--lr", lr, "Learning rate (default 0.01)");
  auto* o_opt = train_cmd->add_option("--optimizer", optimizer, "sgd or adam (default sgd)")
                    ->check(CLI::IsMember({"sgd", "adam"}));
  auto* o_clip = train_cmd->add_option("--clip", clip, "Gradient norm clip (default 5)");
  auto* o_steps = train_cmd->add_option("--max-steps", max_steps, "Rollout step limit (default 15)");
  auto* o_dim = train_cmd->add_option("--dim", dim, "Hidden size (default 64)");
  auto* o_vocab = train_cmd->add_option("--vocab", vocab, "Token vocabulary size (default 46)");
  auto* o_il = train_cmd->add_option("--il-weight", il_w, "lambda_1, IL weight (default 0.2)");
  auto* o_lf = train_cmd->add_option("--free-weight", lf_w, "lambda_2, perturbation-free contrast (default 1)");
  auto* o_lp = train_cmd->add_option("--perturbed-weight", lp_w, "lambda_3, perturbation-based contrast (default 1)");
  auto* o_tau = train_cmd->add_option("--tau", tau, "InfoNCE temperature (default 0.1)");
  auto* o_gamma = train_cmd->add_option("--gamma", gamma, "Return discount (default 0.9)");
  auto* o_every = train_cmd->add_option("--checkpoint-every", every, "Checkpoint cadence, 0 for final only (default 1000)");
  auto* o_sg = train_cmd->add_flag("--stop-gradient-targets", stop_grad, "Detach contrastive positives and negatives");
  auto* o_np = train_cmd->add_flag("--no-pool", no_pool, "Disable the perturbed trajectory pool");
  train_cmd->add_option("--resume", tr.resume, "Resume from a checkpoint written by an earlier run");

  EvalRunConfig ev;
  std::string protocol = "per-free", decode = "greedy";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON")->required();
  eval_cmd->add_option("--scenes", ev.scenes, "Scene files or directories")->required();
  eval_cmd->add_option("--dataset", ev.dataset, "PP dataset JSON from build-pp")->required();
  eval_cmd->add_option("--protocol", protocol, "per-free or per-based")
      ->check(CLI::IsMember({"per-free", "per-based"}))
      ->capture_default_str();
  eval_cmd->add_option("--seed", ev.protocol.seed, "Seed for edge designation and sampling")->capture_default_str();
  eval_cmd->add_option("--radius", ev.protocol.success_radius, "Success radius in meters")->capture_default_str();
  eval_cmd->add_option("--max-steps", ev.protocol.max_steps, "Rollout step limit")->capture_default_str();
  eval_cmd->add_option("--decode", decode, "greedy or sample")
      ->check(CLI::IsMember({"greedy", "sample"}))
      ->capture_default_str();
  eval_cmd->add_flag("--multi-perturbation", ev.protocol.multi_perturbation,
                     "Per-based: cut every deletable edge on attempt");
  eval_cmd->add_option("--out", ev.out, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) {
      cmd_gen_world(gen, out);
    } else if (pp_cmd->parsed()) {
      pp.check = check == "start" ? ReachabilityCheck::kStartToGoal : ReachabilityCheck::kCurrentToGoal;
      cmd_build_pp(pp, out);
    } else if (train_cmd->parsed()) {
      if (config_file) {
        require_exists(*config_file, "config file");
        nlohmann::json j;
        try {
          j = read_json(*config_file);
        } catch (const Error& e) {
          throw Error(e.code() == Errc::kParseError ? Errc::kConfigError : e.code(), e.what());
        }
        apply_train_config_file(j, tr);
      }
      TrainConfig& t = tr.train;
      if (o_scenes->count()) tr.scenes = train_scenes;
      if (o_dataset->count()) tr.dataset = dataset;
      if (o_out->count()) tr.out = out_dir;
      if (o_mode->count()) t.mode = train_mode_from_string(mode);
      if (o_seed->count()) t.seed = seed;
      if (o_iter->count()) t.iterations = iterations;
      if (o_batch->count()) t.batch_size = batch;
      if (o_lr->count()) t.learning_rate = lr;
      if (o_opt->count()) t.optimizer = optimizer_from_string(optimizer);
      if (o_clip->count()) t.clip_norm = clip;
      if (o_steps->count()) t.max_steps = max_steps;
      if (o_dim->count()) t.model.dim = dim;
      if (o_vocab->count()) t.model.vocab = vocab;
      if (o_il->count()) t.weights.il = il_w;
      if (o_lf->count()) t.weights.contrast_free = lf_w;
      if (o_lp->count()) t.weights.contrast_perturbed = lp_w;
      if (o_tau->count()) t.weights.tau = tau;
      if (o_gamma->count()) t.weights.gamma = gamma;
      if (o_every->count()) tr.checkpoint_every = every;
      if (o_sg->count()) t.weights.stop_gradient_targets = stop_grad;
      if (o_np->count()) t.use_pool = !no_pool;
      if (tr.dataset.empty()) throw Error(Errc::kConfigError, "training needs --dataset");
      if (tr.out.empty()) throw Error(Errc::kConfigError, "training needs --out");
      cmd_train(tr, out);
    } else if (eval_cmd->parsed()) {
      ev.protocol.mode = eval_mode_from_string(protocol);
      ev.protocol.decode = decode == "sample" ? RolloutMode::kSample : RolloutMode::kGreedy;
      cmd_eval(ev, out);
    }
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"proper"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace proper::cli
