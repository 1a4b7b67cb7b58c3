#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lvcvc/errors.hpp"
#include "lvcvc/nn_init.hpp"
#include "lvcvc/speaker_model.hpp"
#include "support/toy_corpus.hpp"

using namespace lvcvc;
using ad::Mat;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lvcvc_spk_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

speaker::SpeakerEncoder small_encoder(std::uint64_t seed) {
  speaker::EncoderConfig config;
  config.channels = 16;
  config.embed_dim = 32;
  Rng rng(seed);
  return speaker::SpeakerEncoder(config, rng);
}

}  // namespace

TEST_CASE("embedding is deterministic and unit norm") {
  auto encoder = small_encoder(1);
  Rng rng(2);
  dsp::LogMelSpectrogram mel;
  mel.values = ad::normal_init(80, 40, 1.0f, rng);
  Eigen::VectorXf a = encoder.embed(mel);
  Eigen::VectorXf b = encoder.embed(mel);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(std::abs(a.norm() - 1.0f) <= 1e-5f);
}

TEST_CASE("embedding rejects empty input") {
  auto encoder = small_encoder(3);
  dsp::LogMelSpectrogram mel;
  mel.values = Eigen::MatrixXf(80, 0);
  CHECK_THROWS_AS(encoder.embed(mel), DataError);
}

TEST_CASE("encoder save and load round trip") {
  auto dir = temp_dir("enc_io");
  auto encoder = small_encoder(4);
  Rng rng(5);
  dsp::LogMelSpectrogram mel;
  mel.values = ad::normal_init(80, 25, 1.0f, rng);
  Eigen::VectorXf before = encoder.embed(mel);
  const std::string path = (dir / "enc.lvca").string();
  speaker::save_encoder(encoder, path);
  auto loaded = speaker::load_encoder(path);
  Eigen::VectorXf after = loaded.embed(mel);
  CHECK((before - after).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("toy pretraining separates the two synthetic speakers") {
  auto dir = temp_dir("pretrain");
  const std::string manifest =
      testsupport::build_toy_corpus((dir / "corpus").string(), 3, 1.0f, 21);
  auto registry = io::load_manifest(manifest);

  speaker::EncoderTrainConfig config;
  config.steps = 250;
  config.batch = 6;
  config.seed = 7;
  config.encoder.channels = 16;
  config.encoder.embed_dim = 32;
  auto result = speaker::pretrain_speaker_encoder(registry, config);

  CHECK(result.holdout_clips == 2);
  CHECK(result.holdout_accuracy >= 0.9);

  // Same-speaker embeddings agree; cross-speaker embeddings agree less.
  auto embed_clip = [&](const io::UtteranceRecord& rec) {
    return result.encoder.embed(dsp::compute_log_mel(io::read_wav(rec.path)));
  };
  const auto& a_utts = registry.utterances("spk_a");
  const auto& b_utts = registry.utterances("spk_b");
  Eigen::VectorXf a0 = embed_clip(a_utts[0]);
  Eigen::VectorXf a1 = embed_clip(a_utts[1]);
  Eigen::VectorXf b0 = embed_clip(b_utts[0]);
  Eigen::VectorXf b1 = embed_clip(b_utts[1]);
  const float same = 0.5f * (a0.dot(a1) + b0.dot(b1));
  const float cross = 0.25f * (a0.dot(b0) + a0.dot(b1) + a1.dot(b0) + a1.dot(b1));
  CHECK(a0.dot(a1) >= 0.7f);
  CHECK(b0.dot(b1) >= 0.7f);
  CHECK(cross < same);
}

TEST_CASE("pretraining is deterministic per seed") {
  auto dir = temp_dir("pretrain_det");
  const std::string manifest =
      testsupport::build_toy_corpus((dir / "corpus").string(), 2, 0.6f, 31);
  auto registry = io::load_manifest(manifest);
  speaker::EncoderTrainConfig config;
  config.steps = 40;
  config.batch = 4;
  config.seed = 11;
  config.encoder.channels = 8;
  config.encoder.embed_dim = 16;
  auto r1 = speaker::pretrain_speaker_encoder(registry, config);
  auto r2 = speaker::pretrain_speaker_encoder(registry, config);
  std::vector<ad::NamedParam> p1, p2;
  r1.encoder.params("e", p1);
  r2.encoder.params("e", p2);
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK((p1[i].param->value - p2[i].param->value).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("pretraining requires two speakers") {
  auto dir = temp_dir("pretrain_one");
  std::vector<io::UtteranceRecord> recs;
  io::UtteranceRecord r;
  r.utt_id = "u0";
  r.speaker_id = "only";
  r.path = (dir / "u0.wav").string();
  r.split = io::Split::kTrain;
  io::write_wav(testsupport::synth_utterance(testsupport::toy_speaker_a(), 0.4f, 1),
                r.path);
  recs.push_back(r);
  const std::string manifest = (dir / "m.jsonl").string();
  io::save_manifest(recs, manifest);
  auto registry = io::load_manifest(manifest);
  speaker::EncoderTrainConfig config;
  CHECK_THROWS_AS(speaker::pretrain_speaker_encoder(registry, config), DataError);
}

TEST_CASE("fit_gaussian degenerate cases") {
  Eigen::VectorXf e = Eigen::VectorXf::Random(16).normalized();
  auto single = speaker::fit_gaussian({e});
  CHECK((single.mean - e).cwiseAbs().maxCoeff() <= 1e-7f);
  CHECK(single.var.minCoeff() == speaker::kVarianceFloor);
  CHECK(single.var.maxCoeff() == speaker::kVarianceFloor);
  CHECK(single.count == 1);

  auto copies = speaker::fit_gaussian({e, e, e, e});
  CHECK((copies.mean - e).cwiseAbs().maxCoeff() <= 1e-7f);
  CHECK(copies.var.maxCoeff() == speaker::kVarianceFloor);
  CHECK(copies.count == 4);

  CHECK_THROWS_AS(speaker::fit_gaussian({}), DataError);
}

TEST_CASE("fit_gaussian matches per-coordinate statistics") {
  Rng rng(8);
  std::vector<Eigen::VectorXf> embs;
  const int n = 100, d = 12;
  for (int i = 0; i < n; ++i) embs.push_back(ad::normal_init(d, 1, 1.0f, rng).col(0));

  auto g = speaker::fit_gaussian(embs);
  for (int c = 0; c < d; ++c) {
    double mean = 0.0;
    for (const auto& e : embs) mean += e[c];
    mean /= n;
    double var = 0.0;
    for (const auto& e : embs) var += (e[c] - mean) * (e[c] - mean);
    var /= n;
    CHECK(g.mean[c] == doctest::Approx(mean).epsilon(1e-6));
    CHECK(g.var[c] == doctest::Approx(var).epsilon(1e-6));
  }

  // Permutation invariance.
  std::vector<Eigen::VectorXf> reversed(embs.rbegin(), embs.rend());
  auto g2 = speaker::fit_gaussian(reversed);
  CHECK((g.mean - g2.mean).cwiseAbs().maxCoeff() <= 1e-6f);
  CHECK((g.var - g2.var).cwiseAbs().maxCoeff() <= 1e-6f);
}

TEST_CASE("sample_embedding near-degenerate Gaussian returns the mean direction") {
  Eigen::VectorXf e = Eigen::VectorXf::Random(256).normalized();
  auto g = speaker::fit_gaussian({e});  // var = floor everywhere
  Rng rng(9);
  Eigen::VectorXf s = speaker::sample_embedding(g, rng);
  CHECK(std::abs(s.norm() - 1.0f) <= 1e-5f);
  CHECK((s - e / e.norm()).cwiseAbs().maxCoeff() <= 1e-2f);

  // Fixed seed reproduces the draw.
  Rng rng_a(33), rng_b(33);
  Eigen::VectorXf sa = speaker::sample_embedding(g, rng_a);
  Eigen::VectorXf sb = speaker::sample_embedding(g, rng_b);
  CHECK((sa - sb).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("sample_embedding Monte-Carlo direction matches the normalized mean") {
  const int d = 16;
  Rng init(10);
  speaker::SpeakerGaussian g;
  g.mean = ad::normal_init(d, 1, 1.0f, init).col(0).normalized();
  g.var = Eigen::VectorXf::Constant(d, 1e-4f);
  g.count = 50;

  const int n = 10000;
  Rng rng(11);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXf s = speaker::sample_embedding(g, rng);
    sum += s.cast<double>();
    sum_sq += s.cast<double>().cwiseProduct(s.cast<double>());
  }
  Eigen::VectorXd mean = sum / n;
  // Renormalization scales the expectation but cannot rotate it, so compare
  // directions coordinate-wise within 3 standard errors.
  Eigen::VectorXd dir = mean / mean.norm();
  for (int c = 0; c < d; ++c) {
    const double var_c = sum_sq[c] / n - mean[c] * mean[c];
    const double se = std::sqrt(std::max(var_c, 0.0) / n);
    CHECK(std::abs(dir[c] - static_cast<double>(g.mean[c])) <= 3.0 * se + 1e-5);
  }
}

TEST_CASE("gaussian store round trip") {
  auto dir = temp_dir("gstore");
  speaker::GaussianStore store;
  Rng rng(12);
  for (std::string spk : {"spk_a", "spk_b"}) {
    std::vector<Eigen::VectorXf> embs;
    for (int i = 0; i < 5; ++i)
      embs.push_back(ad::normal_init(24, 1, 1.0f, rng).col(0).normalized());
    store.gaussians[spk] = speaker::fit_gaussian(embs);
    store.median_bins[spk] = spk == "spk_a" ? 16 : 38;
  }
  const std::string path = (dir / "gauss.lvca").string();
  store.save(path);
  auto loaded = speaker::GaussianStore::load(path);
  for (const auto& [spk, g] : store.gaussians) {
    CHECK((loaded.gaussians.at(spk).mean - g.mean).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((loaded.gaussians.at(spk).var - g.var).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(loaded.gaussians.at(spk).count == g.count);
    CHECK(loaded.median_bins.at(spk) == store.median_bins.at(spk));
  }
}

TEST_CASE("cache with external speaker_embedding wins over the encoder") {
  auto encoder = small_encoder(13);
  Rng rng(14);
  ArrayFile cache;
  cache.add("X", ad::normal_init(80, 30, 1.0f, rng));
  Eigen::VectorXf external = 2.0f * ad::normal_init(32, 1, 1.0f, rng).col(0);
  cache.add("speaker_embedding", external);
  Eigen::VectorXf got = speaker::embedding_from_cache(cache, encoder);
  CHECK((got - external.normalized()).cwiseAbs().maxCoeff() <= 1e-6f);

  ArrayFile plain;
  plain.add("X", cache.get("X"));
  dsp::LogMelSpectrogram mel;
  mel.values = cache.get("X");
  Eigen::VectorXf from_enc = speaker::embedding_from_cache(plain, encoder);
  CHECK((from_enc - encoder.embed(mel)).cwiseAbs().maxCoeff() == 0.0f);
}
