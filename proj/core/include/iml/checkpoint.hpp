#pragma once

#include <cstdint>
#include <string>

#include "iml/bilevel.hpp"

namespace iml {

struct LoadedCheckpoint {
  Checkpoint checkpoint;
  std::uint64_t config_hash = 0;
};

// Binary snapshot of parameters + hyperparameters + a config hash.
// Round-trips every double bit-exactly.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt,
                     std::uint64_t config_hash);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace iml
