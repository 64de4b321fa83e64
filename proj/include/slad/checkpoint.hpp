#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "slad/denoiser.hpp"
#include "slad/optimizer.hpp"

namespace slad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CheckpointKind { Teacher, Student };

/// Contents of a checkpoint file.
///
/// Layout: the 4 bytes "SLAD", a little-endian u32 format version, then named
/// sections until end of file. Each section is a u32 name length, the name,
/// a u64 payload length and the payload. Sections: "meta" (JSON text),
/// "theta" and "theta_minus" (tensor groups), and optionally "adam_m",
/// "adam_v" (tensor groups) for resuming. A tensor group is a u32 count, then
/// per tensor a u32 name length, name, u32 rank, u64 dims and float32 values,
/// all little-endian.
struct Checkpoint {
  CheckpointKind kind = CheckpointKind::Teacher;
  int embedding_version = kEmbeddingVersion;
  std::string config_hash;
  std::uint64_t seed = 0;
  /// Seed lineage: for a student, the teacher's seed and config hash.
  std::optional<std::uint64_t> parent_seed;
  std::string parent_hash;
  long step = 0;
  nlohmann::json schedule;  // ScheduleConfig JSON
  nlohmann::json model;     // DenoiserConfig JSON
  nlohmann::json dataset;   // DatasetSpec JSON
  ParamStore theta;
  ParamStore theta_minus;
  std::map<std::string, Tensor> adam_m;
  std::map<std::string, Tensor> adam_v;
  long adam_steps = 0;
};

std::string to_string(CheckpointKind kind);

/// Writes atomically (temporary file then rename).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Serialized bytes, as written by save_checkpoint.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace slad
