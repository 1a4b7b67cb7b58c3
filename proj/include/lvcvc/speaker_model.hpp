#pragma once

#include <map>
#include <string>
#include <vector>

#include "lvcvc/array_file.hpp"
#include "lvcvc/autodiff.hpp"
#include "lvcvc/corpus_io.hpp"
#include "lvcvc/dsp_features.hpp"
#include "lvcvc/rng.hpp"

namespace lvcvc::speaker {

inline constexpr float kVarianceFloor = 1e-6f;

/// Diagonal Gaussian over unit-norm embeddings, fit per speaker on training
/// utterances.
struct SpeakerGaussian {
  Eigen::VectorXf mean;
  Eigen::VectorXf var;  // elementwise, floored at kVarianceFloor
  int count = 0;
};

struct EncoderConfig {
  int mel_bins = dsp::kNumMelBins;
  int channels = 32;
  int embed_dim = 256;
};

/// Frame-level convolutional speaker encoder with self-attentive pooling.
/// Stands in for an externally pretrained speaker-recognition model; its
/// weights are frozen during generator training, but gradients still flow
/// through it to the generator for the speaker-similarity criterion.
class SpeakerEncoder {
 public:
  SpeakerEncoder() = default;
  SpeakerEncoder(const EncoderConfig& config, Rng& rng);

  // Differentiable path: mel (80 x frames, frames >= 1) -> unit-norm d x 1.
  ad::Var embed(ad::Tape& tape, ad::Var mel) const;
  // Plain path for feature extraction.
  Eigen::VectorXf embed(const dsp::LogMelSpectrogram& mel) const;

  const EncoderConfig& config() const { return config_; }
  void params(const std::string& prefix, std::vector<ad::NamedParam>& out) const;

 private:
  EncoderConfig config_;
  ad::Parameter conv1_w_, conv1_b_, conv2_w_, conv2_b_, conv3_w_, conv3_b_;
  ad::Parameter att_w_, att_b_, att_v_;
  ad::Parameter proj_w_, proj_b_;
};

void save_encoder(const SpeakerEncoder& encoder, const std::string& path);
SpeakerEncoder load_encoder(const std::string& path);

struct EncoderTrainConfig {
  int steps = 300;
  int batch = 6;
  int crop_frames = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  EncoderConfig encoder;
};

struct PretrainResult {
  SpeakerEncoder encoder;
  double holdout_accuracy = 0.0;
  int holdout_clips = 0;
};

// Trains the encoder with a speaker-classification head on the registry's
// train split (wavs are read and analyzed directly) and reports accuracy on
// the test split. Deterministic per seed. Requires >= 2 speakers with
// training utterances.
PretrainResult pretrain_speaker_encoder(const io::SpeakerRegistry& registry,
                                        const EncoderTrainConfig& config);

// Maximum-likelihood mean and per-coordinate variance (floored).
SpeakerGaussian fit_gaussian(const std::vector<Eigen::VectorXf>& embeddings);

// mean + sqrt(var) * standard normal, renormalized to the unit sphere.
Eigen::VectorXf sample_embedding(const SpeakerGaussian& gaussian, Rng& rng);

/// speaker_id -> Gaussian plus the speaker's median-F0 bin (needed to build
/// conversion targets from a bare speaker id).
struct GaussianStore {
  std::map<std::string, SpeakerGaussian> gaussians;
  std::map<std::string, int> median_bins;

  void save(const std::string& path) const;
  static GaussianStore load(const std::string& path);
};

// Embedding for one cached utterance: the cache's "speaker_embedding" array
// when present (external-import hook), otherwise the encoder applied to the
// cached mel spectrogram.
Eigen::VectorXf embedding_from_cache(const ArrayFile& cache, const SpeakerEncoder& encoder);

// Fits one Gaussian per seen speaker over its train-split utterance
// embeddings (read from `cache_dir/<utt_id>.lvca`) and records the median of
// the utterances' median-F0 bins.
GaussianStore build_gaussian_store(const io::SpeakerRegistry& registry,
                                   const std::string& cache_dir,
                                   const SpeakerEncoder& encoder);

}  // namespace lvcvc::speaker
