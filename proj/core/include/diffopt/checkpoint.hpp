#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "diffopt/config.hpp"
#include "diffopt/diffusion_meta.hpp"

namespace diffopt {

/// Binary checkpoint layout, all integers and reals little-endian:
///
///   magic      8 bytes  "DOPTCKPT"
///   version    u32      kCheckpointVersion
///   step       i64      completed training steps
///   adam_step  i64
///   adam       5 x f64  lr, beta1, beta2, epsilon, weight_decay
///   config     u32 length + bytes (canonical key = value text)
///   rng        u32 length + bytes (engine state text)
///   tensors    u32 count, then per tensor:
///                u32 name length + name, u32 rank, rank x u64 dims,
///                prod(dims) x f64 in row-major order
///
/// Tensor names: "params/<name>", "adam.m/<name>", "adam.v/<name>" where
/// <name> is e.g. "eb1.feature.weight" (NoisePredictorParams order).
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  RunConfig config;
  TrainerState state;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on bad magic, version mismatch, truncation or
/// tensors that do not match the config's model shape.
Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace diffopt
