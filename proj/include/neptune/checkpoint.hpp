#pragma once

// Binary checkpoint format (all integers and floats little-endian):
//
//   "NPTN"                      magic
//   u16  version                (kCheckpointVersion)
//   u32  d, u32 k, u64 |E|, u64 |R|
//   u8   activation             (0 identity, 1 relu, 2 tanh)
//   f64  bn momentum, f64 bn epsilon
//   u64  entity vocab fingerprint, u64 relation vocab fingerprint (0 = none)
//   u32  config length, then the config as `key = value` text
//   f64[] entity_emb, relation_emb, core,
//         bn_input  {scale, shift, running_mean, running_var},
//         bn_hidden {scale, shift, running_mean, running_var}
//   u64  Adam step
//   f64[] Adam first moments, then second moments, per trainable group in
//         the order of trainable_groups()
//   u32  CRC-32 of every preceding byte

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "neptune/kg.hpp"
#include "neptune/model.hpp"
#include "neptune/training.hpp"

namespace neptune {

inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Bad magic bytes or checksum.
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
/// Checkpoint shapes or vocabularies disagree with the dataset.
class CheckpointMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  ModelParams params;
  AdamState adam;
  TrainConfig config;
  std::uint64_t entity_fingerprint = 0;
  std::uint64_t relation_fingerprint = 0;
};

std::string serialize_checkpoint(const Checkpoint& c);
/// Nothing is returned unless the whole buffer validates.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const ModelParams& p, const AdamState& s, const TrainConfig& cfg,
                           const KnowledgeGraph* g = nullptr);

/// Throws CheckpointMismatchError if entity/relation counts or (when
/// recorded) vocabulary fingerprints differ from `g`.
void check_compatible(const Checkpoint& c, const KnowledgeGraph& g);

std::uint32_t crc32(const void* data, std::size_t len);

}  // namespace neptune
