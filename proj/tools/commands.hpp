#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "proper/errors.hpp"
#include "proper/eval.hpp"
#include "proper/training.hpp"
#include "proper/worldgen.hpp"

namespace proper::cli {

namespace fs = std::filesystem;

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

int exit_code(Errc code);

struct GenWorldConfig {
  WorldConfig world;
  int scenes = 10;
  int train_episodes = 200;
  int val_episodes = 50;
  fs::path out;
};

struct BuildPPConfig {
  std::vector<fs::path> scenes;  // files or directories of scene files
  fs::path episodes;
  std::string split = "train";
  fs::path out;
  std::optional<fs::path> stats;
  ReachabilityCheck check = ReachabilityCheck::kCurrentToGoal;
};

struct TrainRunConfig {
  TrainConfig train;
  std::vector<fs::path> scenes;
  fs::path dataset;  // PP dataset JSON
  fs::path out;
  std::int64_t checkpoint_every = 1000;
  std::optional<fs::path> resume;
};

struct EvalRunConfig {
  EvalProtocol protocol;
  fs::path checkpoint;
  std::vector<fs::path> scenes;
  fs::path dataset;
  fs::path out;
};

// Writes <out>/scenes/<scan>.json, <out>/episodes_train.json and
// <out>/episodes_val.json. Episode k of a split lives in scene k mod scenes.
void cmd_gen_world(const GenWorldConfig& config, std::ostream& log);
void cmd_build_pp(const BuildPPConfig& config, std::ostream& log);
// Writes <out>/checkpoint.json at the cadence and at the end, and
// <out>/loss.jsonl with one record per iteration.
void cmd_train(const TrainRunConfig& config, std::ostream& log);
void cmd_eval(const EvalRunConfig& config, std::ostream& log);

// Training config file: every key optional, unknown keys rejected.
void apply_train_config_file(const nlohmann::json& j, TrainRunConfig& config);

SceneMap load_scene_set(const std::vector<fs::path>& inputs);

// Parses argv and runs a subcommand; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace proper::cli
