#include "uqasr/dataset.hpp"

#include "uqasr/rng.hpp"
#include "uqasr/synth.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace uqasr {

namespace fs = std::filesystem;

void write_manifest(const fs::path& path, const std::vector<UtteranceRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write manifest " + path.string());
  for (const auto& r : records) {
    out << r.id << '\t' << r.wav.generic_string() << '\t' << format_transcript(r.transcript) << '\n';
  }
}

std::vector<UtteranceRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("missing manifest " + path.string());
  std::vector<UtteranceRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, wav, transcript;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, wav, '\t') || !std::getline(fields, transcript)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected three tab-separated fields");
    }
    fs::path wav_path(wav);
    if (wav_path.is_relative()) wav_path = path.parent_path() / wav_path;
    records.push_back({id, wav_path, parse_transcript(transcript)});
  }
  return records;
}

std::string utterance_id(std::string_view split, int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return std::string(split) + "_" + buf;
}

SynthUtterance synth_record(const DataConfig& cfg, uint64_t data_seed, std::string_view split, int index) {
  const uint64_t seed = derive_seed(data_seed, split, static_cast<uint64_t>(index));
  Rng rng(derive_seed(seed, "digits"));
  std::uniform_int_distribution<int> length(cfg.min_digits, cfg.max_digits);
  std::uniform_int_distribution<int> digit(0, 9);
  std::vector<int> digits(static_cast<size_t>(length(rng)));
  for (int& d : digits) d = digit(rng);
  return concat_utterance(digits, derive_seed(seed, "audio"));
}

void synthesize_dataset(const fs::path& dir, const DataConfig& cfg, uint64_t data_seed) {
  const int sizes[] = {cfg.train_size, cfg.heldout_size, cfg.eval_size};
  for (size_t s = 0; s < kSplitNames.size(); ++s) {
    const std::string split(kSplitNames[s]);
    fs::create_directories(dir / split);
    std::vector<UtteranceRecord> records;
    for (int i = 0; i < sizes[s]; ++i) {
      const SynthUtterance utt = synth_record(cfg, data_seed, split, i);
      const std::string id = utterance_id(split, i);
      const fs::path rel = fs::path(split) / (id + ".wav");
      save_wav(utt.audio, dir / rel, ClipPolicy::Clip);
      records.push_back({id, rel, utt.transcript});
    }
    write_manifest(dir / (split + ".tsv"), records);
  }
}

}  // namespace uqasr
