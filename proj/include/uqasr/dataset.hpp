#pragma once

#include "uqasr/config.hpp"
#include "uqasr/synth.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace uqasr {

struct UtteranceRecord {
  std::string id;
  std::filesystem::path wav;  // absolute, or relative to the manifest directory on disk
  Transcript transcript;
};

inline constexpr std::array<std::string_view, 3> kSplitNames{"train", "heldout", "eval"};

// Tab-separated `id  wav_path  transcript` lines, wav paths relative to the
// manifest's directory.
void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);

// Deterministic transcript + audio for utterance `index` of a split.
SynthUtterance synth_record(const DataConfig& cfg, uint64_t data_seed, std::string_view split, int index);

std::string utterance_id(std::string_view split, int index);

// Writes <dir>/<split>/*.wav and <dir>/<split>.tsv for every split.
void synthesize_dataset(const std::filesystem::path& dir, const DataConfig& cfg, uint64_t data_seed);

}  // namespace uqasr
