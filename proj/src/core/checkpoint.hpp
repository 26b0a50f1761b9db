#pragma once

#include <string>

#include "core/param_store.hpp"

namespace ropnet::core {

// Versioned checkpoint container:
//   magic "ROPNETCKPT", version u32, entry count u64, then per entry:
//   name length u32 + UTF-8 name, rank u32, dims (u64 each),
//   little-endian float32 payload.
// Optimizer state is stored under the reserved "adam/" prefix
// ("adam/m/<name>", "adam/v/<name>", "adam/step").
inline constexpr char kCheckpointMagic[] = "ROPNETCKPT";
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParamStore<float>& store, const std::string& path,
                     bool with_optimizer_state = true);

// Replaces the store contents. Adam buffers absent from the file load as zero.
void load_checkpoint(ParamStore<float>& store, const std::string& path);

}  // namespace ropnet::core
