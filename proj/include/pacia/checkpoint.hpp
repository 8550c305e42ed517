#pragma once

#include <cstdint>
#include <string>

#include "pacia/model.hpp"

namespace pacia {

inline constexpr const char* kCheckpointFormat = "pacia-ckpt-v1";

// Self-describing JSON container: format tag, seed, model config echo and
// every parameter (name -> shape + values). Doubles round-trip exactly.
void save_checkpoint(const Model& model, std::uint64_t seed, const std::string& path);

struct LoadedCheckpoint {
    Model model;
    std::uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace pacia
