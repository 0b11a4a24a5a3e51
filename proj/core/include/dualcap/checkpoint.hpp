#pragma once

// Checkpoint directory: manifest.json (version, config echo, blob index,
// fingerprints, step, RNG states) next to blobs.bin, which holds every tensor
// as raw little-endian float32 in row-major order.

#include "dualcap/parameter.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dualcap {

inline constexpr std::string_view kCheckpointVersion = "dualcap-checkpoint/1";

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct CheckpointState {
  std::string stage;        // "lm", "pretrain" or "finetune"
  std::string config_json;  // resolved run config echo
  std::vector<NamedTensor> tensors;
  std::map<std::string, std::string> fingerprints;  // frozen components
  long long step = 0;
  std::map<std::string, std::string> rng_states;
  std::map<std::string, std::string> metadata;

  const Matrix& tensor(std::string_view name) const;
  bool has_tensor(std::string_view name) const;
};

/// Writes into a sibling temp directory, then renames it over `dir`.
void save_checkpoint(const std::filesystem::path& dir, const CheckpointState& state);
/// Throws VersionMismatchError, CorruptBlobError or MissingArtifactError.
CheckpointState load_checkpoint(const std::filesystem::path& dir);

/// Every fingerprint in `live` must be recorded in the checkpoint with the same value.
void verify_fingerprints(const CheckpointState& state, const std::map<std::string, std::string>& live);

/// Appends parameter values under their own names.
void add_parameters(CheckpointState& state, const ParamList& params);
/// Copies values into parameters by name; shapes must agree.
void restore_parameters(const CheckpointState& state, const ParamList& params);

}  // namespace dualcap
