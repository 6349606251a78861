#pragma once

#include <filesystem>
#include <optional>

#include "fhm/nn/trainer.hpp"
#include "fhm/nn/vae.hpp"

namespace fhm::nn {

/// Checkpoint layout (little-endian):
///   "VAE1" | u32 version | u32 tensor count
///   | per tensor: u16 name length, name bytes, u8 rank, u32 extents[rank],
///     f64 data[product(extents)]
///
/// The first tensor, "config", encodes the NetworkConfig so a checkpoint is
/// self-describing. Parameters follow under VaeParameters::for_each names.
/// Training checkpoints append "adam.state" = [step, epochs_done] and the
/// moments as "adam.m.<name>" / "adam.v.<name>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const VaeNetwork& net, const std::filesystem::path& path,
                     const AdamState* optimizer = nullptr);

/// Throws FormatError on bad magic, version, or a tensor whose shape does not
/// match the encoded architecture.
VaeNetwork load_checkpoint(const std::filesystem::path& path);

struct TrainingCheckpoint {
  VaeNetwork net;
  std::optional<AdamState> optimizer;
};

TrainingCheckpoint load_training_checkpoint(const std::filesystem::path& path);

}  // namespace fhm::nn
