#include "lvcvc/corpus_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "lvcvc/errors.hpp"
#include "lvcvc/rng.hpp"
#include "lvcvc/vendor_json.hpp"

namespace fs = std::filesystem;

namespace lvcvc::io {

namespace {

std::uint32_t read_u32le(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError("corrupt WAV header in '" + path + "'");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
}

std::uint16_t read_u16le(std::istream& is, const std::string& path) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2))
    throw DataError("corrupt WAV header in '" + path + "'");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16le(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open WAV file '" + path + "'");

  char tag[4];
  if (!is.read(tag, 4) || std::memcmp(tag, "RIFF", 4) != 0)
    throw DataError("'" + path + "' is not a RIFF file");
  read_u32le(is, path);  // overall size, unused
  if (!is.read(tag, 4) || std::memcmp(tag, "WAVE", 4) != 0)
    throw DataError("'" + path + "' is not a WAVE file");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  std::vector<std::int16_t> pcm;

  while (is.read(tag, 4)) {
    std::uint32_t chunk_size = read_u32le(is, path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw DataError("corrupt fmt chunk in '" + path + "'");
      format = read_u16le(is, path);
      channels = read_u16le(is, path);
      rate = read_u32le(is, path);
      read_u32le(is, path);  // byte rate
      read_u16le(is, path);  // block align
      bits = read_u16le(is, path);
      is.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw DataError("data chunk before fmt chunk in '" + path + "'");
      if (format != 1) throw DataError("'" + path + "': only PCM WAV is supported");
      if (channels != 1) throw DataError("'" + path + "': expected mono, got " +
                                         std::to_string(channels) + " channels");
      if (bits != 16) throw DataError("'" + path + "': only 16-bit PCM is supported");
      if (rate != kSampleRate)
        throw DataError("'" + path + "': wrong sample rate " + std::to_string(rate) +
                        " Hz, expected 16000 Hz (resample offline)");
      const std::size_t n = chunk_size / 2;
      if (n == 0) throw DataError("'" + path + "' contains no samples");
      pcm.resize(n);
      if (!is.read(reinterpret_cast<char*>(pcm.data()),
                   static_cast<std::streamsize>(n * 2)))
        throw DataError("truncated data chunk in '" + path + "'");
      AudioClip clip;
      clip.sample_rate = kSampleRate;
      clip.samples.resize(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        clip.samples[static_cast<Eigen::Index>(i)] = static_cast<float>(pcm[i]) / 32768.0f;
      return clip;
    } else {
      // Skip unknown chunks (word-aligned).
      is.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  throw DataError("'" + path + "' has no data chunk");
}

void write_wav(const AudioClip& clip, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");

  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 2;
  os.write("RIFF", 4);
  write_u32le(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_u32le(os, 16);
  write_u16le(os, 1);  // PCM
  write_u16le(os, 1);  // mono
  write_u32le(os, kSampleRate);
  write_u32le(os, kSampleRate * 2);  // byte rate
  write_u16le(os, 2);                // block align
  write_u16le(os, 16);               // bits
  os.write("data", 4);
  write_u32le(os, data_bytes);

  std::vector<std::int16_t> pcm(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    float x = std::clamp(clip.samples[static_cast<Eigen::Index>(i)], -1.0f, 1.0f);
    long q = std::lround(static_cast<double>(x) * 32768.0);
    q = std::clamp(q, -32768L, 32767L);
    pcm[i] = static_cast<std::int16_t>(q);
  }
  if (n > 0)
    os.write(reinterpret_cast<const char*>(pcm.data()),
             static_cast<std::streamsize>(data_bytes));
  if (!os) throw DataError("write failed for '" + path + "'");
}

Split parse_split(const std::string& tag) {
  if (tag == "train") return Split::kTrain;
  if (tag == "test") return Split::kTest;
  if (tag == "unseen") return Split::kUnseen;
  throw DataError("unknown split tag '" + tag + "' (expected train, test, or unseen)");
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kUnseen: return "unseen";
  }
  return "train";
}

void SpeakerRegistry::add(const UtteranceRecord& rec) {
  if (by_utt_.count(rec.utt_id))
    throw DataError("duplicate utt_id '" + rec.utt_id + "' in manifest");
  auto it = by_speaker_.find(rec.speaker_id);
  if (it == by_speaker_.end()) {
    speaker_order_.push_back(rec.speaker_id);
    by_speaker_[rec.speaker_id] = {rec};
  } else {
    const bool was_unseen = it->second.front().split == Split::kUnseen;
    const bool is_unseen = rec.split == Split::kUnseen;
    if (was_unseen != is_unseen)
      throw DataError("speaker '" + rec.speaker_id +
                      "' appears in both seen and unseen splits");
    it->second.push_back(rec);
  }
  by_utt_[rec.utt_id] = records_.size();
  records_.push_back(rec);
}

const std::vector<UtteranceRecord>& SpeakerRegistry::utterances(
    const std::string& speaker_id) const {
  auto it = by_speaker_.find(speaker_id);
  if (it == by_speaker_.end())
    throw DataError("unknown speaker '" + speaker_id + "'");
  return it->second;
}

bool SpeakerRegistry::has_speaker(const std::string& speaker_id) const {
  return by_speaker_.count(speaker_id) != 0;
}

bool SpeakerRegistry::is_unseen(const std::string& speaker_id) const {
  return utterances(speaker_id).front().split == Split::kUnseen;
}

std::vector<std::string> SpeakerRegistry::seen_speakers() const {
  std::vector<std::string> out;
  for (const auto& s : speaker_order_)
    if (!is_unseen(s)) out.push_back(s);
  return out;
}

std::vector<std::string> SpeakerRegistry::unseen_speakers() const {
  std::vector<std::string> out;
  for (const auto& s : speaker_order_)
    if (is_unseen(s)) out.push_back(s);
  return out;
}

std::vector<UtteranceRecord> SpeakerRegistry::split_records(Split s) const {
  std::vector<UtteranceRecord> out;
  for (const auto& r : records_)
    if (r.split == s) out.push_back(r);
  return out;
}

const UtteranceRecord& SpeakerRegistry::find(const std::string& utt_id) const {
  auto it = by_utt_.find(utt_id);
  if (it == by_utt_.end()) throw DataError("unknown utt_id '" + utt_id + "'");
  return records_[it->second];
}

SpeakerRegistry load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest '" + path + "'");
  SpeakerRegistry reg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest '" + path + "' line " + std::to_string(lineno) +
                      ": malformed record: " + e.what());
    }
    for (const std::string field : {"utt_id", "speaker_id", "path", "split"}) {
      if (!j.contains(field) || !j[field].is_string())
        throw DataError("manifest '" + path + "' line " + std::to_string(lineno) +
                        ": missing or non-string field '" + field + "'");
    }
    UtteranceRecord rec;
    rec.utt_id = j["utt_id"].get<std::string>();
    rec.speaker_id = j["speaker_id"].get<std::string>();
    rec.path = j["path"].get<std::string>();
    try {
      rec.split = parse_split(j["split"].get<std::string>());
      reg.add(rec);
    } catch (const DataError& e) {
      throw DataError("manifest '" + path + "' line " + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  return reg;
}

void save_manifest(const std::vector<UtteranceRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& r : records) {
    nlohmann::json j;
    j["utt_id"] = r.utt_id;
    j["speaker_id"] = r.speaker_id;
    j["path"] = r.path;
    j["split"] = split_name(r.split);
    os << j.dump() << "\n";
  }
  if (!os) throw DataError("write failed for '" + path + "'");
}

std::vector<UtteranceRecord> build_manifest_from_tree(const std::string& root,
                                                      std::uint64_t seed,
                                                      int unseen_count,
                                                      double train_ratio) {
  if (!fs::is_directory(root)) throw DataError("'" + root + "' is not a directory");
  std::vector<std::string> speakers;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) speakers.push_back(entry.path().filename().string());
  std::sort(speakers.begin(), speakers.end());
  if (static_cast<int>(speakers.size()) <= unseen_count)
    throw DataError("not enough speakers to hold out " + std::to_string(unseen_count));

  Rng rng(seed);
  // Seeded Fisher-Yates over the sorted speaker list.
  std::vector<std::string> shuffled = speakers;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
  std::vector<std::string> unseen(shuffled.begin(), shuffled.begin() + unseen_count);
  std::sort(unseen.begin(), unseen.end());

  std::vector<UtteranceRecord> out;
  for (const auto& spk : speakers) {
    std::vector<std::string> wavs;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / spk))
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        wavs.push_back(entry.path().string());
    std::sort(wavs.begin(), wavs.end());
    const bool spk_unseen =
        std::binary_search(unseen.begin(), unseen.end(), spk);

    std::vector<std::size_t> order(wavs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(wavs.size())));

    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      const std::string& w = wavs[order[rank]];
      UtteranceRecord rec;
      rec.utt_id = spk + "_" + fs::path(w).stem().string();
      rec.speaker_id = spk;
      rec.path = w;
      rec.split = spk_unseen ? Split::kUnseen
                             : (rank < n_train ? Split::kTrain : Split::kTest);
      out.push_back(rec);
    }
  }
  return out;
}

}  // namespace lvcvc::io
