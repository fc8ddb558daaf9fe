#pragma once

#include "uqasr/acoustic_model.hpp"

#include <json.hpp>

#include <filesystem>

namespace uqasr {

inline constexpr int kCheckpointFormatVersion = 1;

// On-disk layout: <dir>/meta.json plus one raw little-endian float32 file per
// named tensor (<name>.f32, column-major). `extra` is stored verbatim under
// meta["extra"].
void save_checkpoint(const std::filesystem::path& dir, const AcousticModel& model,
                     const nlohmann::json& extra = nlohmann::json::object());

struct Checkpoint {
  AcousticModel model;
  nlohmann::json meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Rounds every tensor through float32 so the in-memory model equals what a
// save/load cycle returns.
AcousticModel round_to_float32(const AcousticModel& model);

}  // namespace uqasr
