// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "macaw/autograd.hpp"
#include "macaw/config.hpp"
#include "macaw/tokenizer.hpp"
#include "macaw/training.hpp"

namespace macaw {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Complete training state. The data section of `config` is not persisted;
/// a loaded checkpoint carries default data settings.
struct Checkpoint {
  RunConfig config;
  Vocab vocab;
  ParamStore params;
  OptimizerState optimizer;
  std::uint64_t step = 0;
  std::string rng_state;
};

// Layout (little-endian):
//   "MCWC" | u32 version
//   u64 len | config JSON {model, train, modality}
//   u64 len | vocab JSON
//   u32 count | per tensor: u32 name_len, name, u32 rank, u64 dims[rank], f64 data[]
//   u32 count | optimizer tensors ("adam.m/<name>", "adam.v/<name>"), same record layout
//   u64 step
//   u64 len | RNG state
std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws BadMagic, VersionMismatch or CorruptPayload.
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace macaw
