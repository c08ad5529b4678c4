#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "dacrs/config.hpp"
#include "dacrs/model.hpp"

namespace dacrs {

/// Trained model state. Parameters are held at 64 bits in memory but are
/// rounded to 32-bit values, which is the precision stored on disk.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  ModelConfig model;
  TrainConfig train;
  ModelParams<double> params;
  int epoch = 0;
  std::uint64_t rng_digest = 0;

  static Checkpoint from_params(const ModelParams<double>& params, const ModelConfig& model,
                                const TrainConfig& train, int epoch, std::uint64_t rng_digest);
};

/// Layout, little-endian:
///   "DACR" | u32 version | u32 manifest length | manifest JSON
///   | f32 payload, tensors in visit order, row-major | u64 FNV-1a of all prior bytes
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws LoadError on bad magic, version, truncation or digest mismatch and
/// ConfigError when `expected` is given and the stored model config differs.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

/// Digest over the serialized tensors; identifies a parameter set.
std::uint64_t checkpoint_hash(const Checkpoint& checkpoint);

}  // namespace dacrs
