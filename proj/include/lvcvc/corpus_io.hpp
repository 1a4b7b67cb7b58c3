#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lvcvc::io {

inline constexpr int kSampleRate = 16000;

/// Mono waveform at 16 kHz, samples in [-1, 1].
struct AudioClip {
  Eigen::VectorXf samples;
  int sample_rate = kSampleRate;

  Eigen::Index length() const { return samples.size(); }
};

// Reads a mono 16-bit PCM RIFF/WAV file. The sample rate must already be
// 16 kHz; there is no resampling in this codebase (resample offline first).
// Throws DataError on missing files, corrupt headers, non-mono audio,
// unsupported encodings, and wrong sample rates.
AudioClip read_wav(const std::string& path);

// Writes 16-bit PCM mono WAV at 16 kHz. Samples are clipped to [-1, 1]
// before quantization. Throws DataError if the destination is unwritable.
void write_wav(const AudioClip& clip, const std::string& path);

enum class Split { kTrain, kTest, kUnseen };

Split parse_split(const std::string& tag);
std::string split_name(Split s);

struct UtteranceRecord {
  std::string utt_id;
  std::string speaker_id;
  std::string path;
  Split split = Split::kTrain;
};

/// Per-speaker utterance lists in manifest order. A speaker is "unseen" when
/// all of its records carry the unseen split tag; mixing unseen with
/// train/test records for one speaker is rejected at load time.
class SpeakerRegistry {
 public:
  void add(const UtteranceRecord& rec);

  const std::vector<std::string>& speakers() const { return speaker_order_; }
  const std::vector<UtteranceRecord>& utterances(const std::string& speaker_id) const;
  const std::vector<UtteranceRecord>& all() const { return records_; }

  bool has_speaker(const std::string& speaker_id) const;
  bool is_unseen(const std::string& speaker_id) const;
  std::vector<std::string> seen_speakers() const;
  std::vector<std::string> unseen_speakers() const;

  // Records of one split, in manifest order.
  std::vector<UtteranceRecord> split_records(Split s) const;
  const UtteranceRecord& find(const std::string& utt_id) const;

 private:
  std::vector<UtteranceRecord> records_;
  std::vector<std::string> speaker_order_;
  std::map<std::string, std::vector<UtteranceRecord>> by_speaker_;
  std::map<std::string, std::size_t> by_utt_;
};

// Manifest files are UTF-8 JSON Lines: one object per utterance with exactly
// the fields {"utt_id", "speaker_id", "path", "split"}. Malformed lines are
// reported with their line number; duplicate utt_ids and unknown split tags
// are rejected.
SpeakerRegistry load_manifest(const std::string& path);

void save_manifest(const std::vector<UtteranceRecord>& records, const std::string& path);

// Builds a manifest from a directory tree laid out as root/<speaker>/<utt>.wav.
// `unseen_count` speakers are held out entirely; the rest are split into
// train and test per utterance at the given ratio using a seeded shuffle.
std::vector<UtteranceRecord> build_manifest_from_tree(const std::string& root,
                                                      std::uint64_t seed,
                                                      int unseen_count = 0,
                                                      double train_ratio = 0.9);

}  // namespace lvcvc::io
