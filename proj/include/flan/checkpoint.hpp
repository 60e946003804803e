#pragma once

// Model checkpoints: 4-byte magic "FLAN", one version byte, a textual
// self-describing JSON header line (architecture, partition, config hash),
// then every parameter as little-endian 64-bit floats in declaration order.
// load(save(m)) reproduces all parameters bit-exactly.

#include <string>

#include "flan/model.hpp"

namespace flan {

inline constexpr unsigned char kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const FlanModel& model,
                     const std::string& config_hash);

struct LoadedCheckpoint {
    FlanModel model;
    std::string config_hash;
};

// Throws IoError on bad magic, unsupported version, malformed header,
// truncated or oversized payload.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace flan
