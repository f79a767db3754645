#pragma once

#include <filesystem>

#include <json.hpp>

#include "proper/agent.hpp"

namespace proper {

// {"format": "proper-checkpoint", "version": 1, "dim", "vocab",
//  "tensors": [{"name", "rows", "cols", "data": [column-major]}], "trainer"}
// Doubles are written in shortest round-trip form, so loading restores every
// parameter bit for bit.
struct Checkpoint {
  ModelParams params;
  nlohmann::json trainer;  // null when absent
};

nlohmann::json params_to_json(const ModelParams& params);
// Throws ParseError on missing tensors or shape mismatches.
ModelParams params_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const nlohmann::json& trainer = nullptr);
// Throws IoError when the file cannot be read, ParseError when malformed.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace proper
