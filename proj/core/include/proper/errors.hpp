#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace proper {

enum class Errc {
  kNoPath,
  kUnknownNode,
  kUnknownEdge,
  kInvalidPath,
  kEmptyScene,
  kInvalidEpisode,
  kNoDetour,
  kGenerationFailed,
  kNoValidPair,
  kParseError,
  kEmptyDataset,
  kUnknownToken,
  kLengthMismatch,
  kMissingRewards,
  kZeroNormVector,
  kNonFiniteLoss,
  kConfigError,
  kIoError,
};

inline std::string_view to_string(Errc code);

// Every failure raised by the library carries one of the codes above so the
// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kNoPath: return "NoPath";
    case Errc::kUnknownNode: return "UnknownNode";
    case Errc::kUnknownEdge: return "UnknownEdge";
    case Errc::kInvalidPath: return "InvalidPath";
    case Errc::kEmptyScene: return "EmptyScene";
    case Errc::kInvalidEpisode: return "InvalidEpisode";
    case Errc::kNoDetour: return "NoDetour";
    case Errc::kGenerationFailed: return "GenerationFailed";
    case Errc::kNoValidPair: return "NoValidPair";
    case Errc::kParseError: return "ParseError";
    case Errc::kEmptyDataset: return "EmptyDataset";
    case Errc::kUnknownToken: return "UnknownToken";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kMissingRewards: return "MissingRewards";
    case Errc::kZeroNormVector: return "ZeroNormVector";
    case Errc::kNonFiniteLoss: return "NonFiniteLoss";
    case Errc::kConfigError: return "ConfigError";
    case Errc::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace proper
