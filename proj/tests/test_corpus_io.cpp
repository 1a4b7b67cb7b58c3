#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "lvcvc/array_file.hpp"
#include "lvcvc/corpus_io.hpp"
#include "lvcvc/errors.hpp"
#include "lvcvc/rng.hpp"
#include "support/toy_corpus.hpp"

using namespace lvcvc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("lvcvc_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Minimal header writer so tests can produce wrong-rate files.
void write_wav_with_rate(const std::string& path, std::uint32_t rate, int n) {
  std::ofstream os(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
  os.write("RIFF", 4);
  u32(36 + 2 * n);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(1);
  u32(rate);
  u32(rate * 2);
  u16(2);
  u16(16);
  os.write("data", 4);
  u32(2 * n);
  std::vector<std::int16_t> z(n, 0);
  os.write(reinterpret_cast<const char*>(z.data()), 2 * n);
}

std::string read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("wav round trip of a 1-second clip") {
  auto dir = temp_dir("wav_roundtrip");
  Rng rng(7);
  io::AudioClip clip;
  clip.samples.resize(16000);
  for (int i = 0; i < 16000; ++i)
    clip.samples[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  const std::string path = (dir / "clip.wav").string();
  io::write_wav(clip, path);
  io::AudioClip back = io::read_wav(path);
  CHECK(back.samples.size() == 16000);
  CHECK(back.sample_rate == 16000);
  // Quantization oracle: 16-bit rounding error is at most one step.
  const float max_err = (back.samples - clip.samples).cwiseAbs().maxCoeff();
  CHECK(max_err <= std::pow(2.0f, -15.0f));
}

TEST_CASE("wav rejects wrong sample rate") {
  auto dir = temp_dir("wav_rate");
  const std::string path = (dir / "wrong.wav").string();
  write_wav_with_rate(path, 44100, 64);
  CHECK_THROWS_WITH_AS(io::read_wav(path), doctest::Contains("wrong sample rate"),
                       DataError);
}

TEST_CASE("wav rejects missing file and truncated header") {
  CHECK_THROWS_AS(io::read_wav("/nonexistent/nope.wav"), DataError);
  auto dir = temp_dir("wav_corrupt");
  const std::string path = (dir / "trunc.wav").string();
  std::ofstream(path, std::ios::binary) << "RIFFxx";
  CHECK_THROWS_AS(io::read_wav(path), DataError);
}

TEST_CASE("wav clipping contract") {
  auto dir = temp_dir("wav_clip");
  io::AudioClip clip;
  clip.samples.resize(3);
  clip.samples << 0.0f, 1.5f, -2.0f;
  const std::string path = (dir / "clipped.wav").string();
  io::write_wav(clip, path);
  io::AudioClip back = io::read_wav(path);
  CHECK(back.samples[0] == 0.0f);
  CHECK(back.samples[1] == doctest::Approx(32767.0f / 32768.0f));
  CHECK(back.samples[2] == -1.0f);
}

TEST_CASE("all-zero clip survives round trip exactly") {
  auto dir = temp_dir("wav_zero");
  io::AudioClip clip;
  clip.samples = Eigen::VectorXf::Zero(100);
  const std::string path = (dir / "zero.wav").string();
  io::write_wav(clip, path);
  io::AudioClip back = io::read_wav(path);
  CHECK(back.samples.size() == 100);
  CHECK(back.samples.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("manifest with 2 speakers x 2 utterances") {
  auto dir = temp_dir("manifest_basic");
  const std::string path = (dir / "m.jsonl").string();
  std::vector<io::UtteranceRecord> recs;
  for (std::string spk : {"s1", "s2"})
    for (std::string u : {"a", "b"}) {
      io::UtteranceRecord r;
      r.utt_id = spk + "_" + u;
      r.speaker_id = spk;
      r.path = "/tmp/" + r.utt_id + ".wav";
      r.split = io::Split::kTrain;
      recs.push_back(r);
    }
  io::save_manifest(recs, path);
  io::SpeakerRegistry reg = io::load_manifest(path);
  CHECK(reg.speakers().size() == 2);
  CHECK(reg.all().size() == 4);
  CHECK(reg.utterances("s1").size() == 2);
  CHECK(reg.find("s2_b").speaker_id == "s2");
}

TEST_CASE("manifest rejects duplicate utt_id naming the id") {
  auto dir = temp_dir("manifest_dup");
  const std::string path = (dir / "m.jsonl").string();
  std::ofstream os(path);
  os << R"({"utt_id":"u1","speaker_id":"s1","path":"a.wav","split":"train"})" << "\n";
  os << R"({"utt_id":"u1","speaker_id":"s1","path":"b.wav","split":"train"})" << "\n";
  os.close();
  CHECK_THROWS_WITH_AS(io::load_manifest(path), doctest::Contains("u1"), DataError);
}

TEST_CASE("manifest reports malformed line with its number") {
  auto dir = temp_dir("manifest_malformed");
  const std::string path = (dir / "m.jsonl").string();
  std::ofstream os(path);
  os << R"({"utt_id":"u1","speaker_id":"s1","path":"a.wav","split":"train"})" << "\n";
  os << "not json\n";
  os.close();
  CHECK_THROWS_WITH_AS(io::load_manifest(path), doctest::Contains("line 2"), DataError);
}

TEST_CASE("manifest rejects unknown split tags") {
  auto dir = temp_dir("manifest_split");
  const std::string path = (dir / "m.jsonl").string();
  std::ofstream os(path);
  os << R"({"utt_id":"u1","speaker_id":"s1","path":"a.wav","split":"validation"})" << "\n";
  os.close();
  CHECK_THROWS_WITH_AS(io::load_manifest(path), doctest::Contains("validation"), DataError);
}

TEST_CASE("seen and unseen speaker sets are disjoint") {
  auto dir = temp_dir("manifest_splits");
  const std::string path = (dir / "m.jsonl").string();
  std::ofstream os(path);
  // 9:1-style seen speakers plus a held-out speaker.
  os << R"({"utt_id":"a1","speaker_id":"sa","path":"a1.wav","split":"train"})" << "\n";
  os << R"({"utt_id":"a2","speaker_id":"sa","path":"a2.wav","split":"test"})" << "\n";
  os << R"({"utt_id":"b1","speaker_id":"sb","path":"b1.wav","split":"train"})" << "\n";
  os << R"({"utt_id":"c1","speaker_id":"sc","path":"c1.wav","split":"unseen"})" << "\n";
  os.close();
  io::SpeakerRegistry reg = io::load_manifest(path);
  auto seen = reg.seen_speakers();
  auto unseen = reg.unseen_speakers();
  for (const auto& s : seen)
    for (const auto& u : unseen) CHECK(s != u);
  CHECK(seen.size() == 2);
  CHECK(unseen.size() == 1);
  // Unseen speakers contribute no training records.
  for (const auto& r : reg.split_records(io::Split::kTrain))
    CHECK(r.speaker_id != "sc");
}

TEST_CASE("speaker mixing seen and unseen splits is rejected") {
  auto dir = temp_dir("manifest_mixed");
  const std::string path = (dir / "m.jsonl").string();
  std::ofstream os(path);
  os << R"({"utt_id":"a1","speaker_id":"sa","path":"a1.wav","split":"train"})" << "\n";
  os << R"({"utt_id":"a2","speaker_id":"sa","path":"a2.wav","split":"unseen"})" << "\n";
  os.close();
  CHECK_THROWS_AS(io::load_manifest(path), DataError);
}

TEST_CASE("load_manifest is deterministic") {
  auto dir = temp_dir("manifest_det");
  const std::string manifest =
      testsupport::build_toy_corpus((dir / "corpus").string(), 2, 0.3f, 11);
  io::SpeakerRegistry a = io::load_manifest(manifest);
  io::SpeakerRegistry b = io::load_manifest(manifest);
  REQUIRE(a.all().size() == b.all().size());
  for (std::size_t i = 0; i < a.all().size(); ++i)
    CHECK(a.all()[i].utt_id == b.all()[i].utt_id);
  CHECK(a.speakers() == b.speakers());
}

TEST_CASE("build_manifest_from_tree splits 9:1 with seeded shuffle") {
  auto dir = temp_dir("tree");
  // 1 speaker with 10 clips, 1 speaker to hold out.
  for (int u = 0; u < 10; ++u) {
    fs::create_directories(dir / "spk0");
    io::AudioClip c;
    c.samples = Eigen::VectorXf::Zero(256);
    io::write_wav(c, (dir / "spk0" / ("u" + std::to_string(u) + ".wav")).string());
  }
  fs::create_directories(dir / "spk1");
  io::AudioClip c;
  c.samples = Eigen::VectorXf::Zero(256);
  io::write_wav(c, (dir / "spk1" / "u0.wav").string());

  auto recs = io::build_manifest_from_tree(dir.string(), 42, 1);
  int train = 0, test = 0, unseen = 0;
  for (const auto& r : recs) {
    if (r.split == io::Split::kTrain) ++train;
    if (r.split == io::Split::kTest) ++test;
    if (r.split == io::Split::kUnseen) ++unseen;
  }
  CHECK(train == 9);
  CHECK(test == 1);
  CHECK(unseen == 1);
  // Same seed reproduces the same assignment.
  auto recs2 = io::build_manifest_from_tree(dir.string(), 42, 1);
  REQUIRE(recs.size() == recs2.size());
  for (std::size_t i = 0; i < recs.size(); ++i)
    CHECK(io::split_name(recs[i].split) == io::split_name(recs2[i].split));
}

TEST_CASE("array file round trip and corruption error") {
  auto dir = temp_dir("array_file");
  const std::string path = (dir / "f.lvca").string();
  ArrayFile f;
  nlohmann::json meta;
  meta["kind"] = "test";
  f.set_meta(meta);
  Eigen::MatrixXf a = Eigen::MatrixXf::Random(5, 3);
  Eigen::MatrixXf b = Eigen::MatrixXf::Random(1, 7);
  f.add("alpha", a);
  f.add("beta", b);
  f.save(path);

  ArrayFile g = ArrayFile::load(path);
  CHECK(g.meta()["kind"] == "test");
  CHECK(g.get("alpha").isApprox(a));
  CHECK(g.get("beta").isApprox(b));
  CHECK(g.names() == std::vector<std::string>{"alpha", "beta"});

  // Byte-stable save.
  const std::string path2 = (dir / "g.lvca").string();
  g.save(path2);
  CHECK(read_bytes(path) == read_bytes(path2));

  // Truncation is an explicit error.
  std::string bytes = read_bytes(path);
  std::ofstream(dir / "trunc.lvca", std::ios::binary)
      << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(ArrayFile::load((dir / "trunc.lvca").string()), DataError);
}
