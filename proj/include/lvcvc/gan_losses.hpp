#pragma once

#include <string>
#include <vector>

#include "lvcvc/autodiff.hpp"
#include "lvcvc/diff_dsp.hpp"
#include "lvcvc/rng.hpp"

namespace lvcvc::gan {

/// Multi-resolution spectrogram discriminator settings. The default triples
/// are (n_fft, hop, win_length).
struct MrsdConfig {
  std::vector<dsp::StftResolution> resolutions = {
      {1024, 120, 600}, {2048, 240, 1200}, {512, 50, 240}};
  int body_channels = 8;
};

/// Multi-period waveform discriminator settings.
struct MpwdConfig {
  std::vector<int> periods = {2, 3, 5, 7, 11};
  int body_channels = 8;
};

// Rows of the period-p reshaping of a waveform after tail reflect padding.
int mpwd_rows(int samples, int period);

// ---- training criteria ----

// Spectral convergence ||s - s_hat||_F / ||s||_F on magnitude spectrograms.
// Throws std::invalid_argument on shape mismatch or an all-zero reference.
ad::Var loss_sc(ad::Var ref_mag, ad::Var est_mag);

// Mean absolute log-magnitude difference over all elements; magnitudes are
// floored at dsp::kLogFloor before the log.
ad::Var loss_mag(ad::Var ref_mag, ad::Var est_mag);

// (1/M) sum of loss_sc + loss_mag over per-resolution magnitude pairs.
ad::Var loss_aux_from_mags(const std::vector<std::pair<ad::Var, ad::Var>>& mag_pairs);

// Full auxiliary loss: magnitude STFTs of both waveforms at every MRSD
// resolution (uncentered frames), then loss_aux_from_mags.
ad::Var loss_aux(ad::Var x, ad::Var x_hat, const MrsdConfig& config);

// Tape-free value of loss_aux for evaluation reports.
double loss_aux_value(const Eigen::VectorXf& x, const Eigen::VectorXf& x_hat,
                      const MrsdConfig& config);

// Speaker similarity criterion over N converted embeddings:
// 1 - (1/N) sum cos(e_n, target), so minimizing pulls embeddings toward the
// target direction. `raw_cosine` switches to the paper-literal mean cosine.
ad::Var loss_ssc(const std::vector<ad::Var>& converted_embeddings, ad::Var target,
                 bool raw_cosine = false);

// LSGAN adversarial part of the generator loss: (1/K) sum mean((D_k - 1)^2).
ad::Var loss_generator_adv(const std::vector<ad::Var>& fake_scores);

// Full generator criterion. `ssc_term` may be an invalid Var when
// lambda_ssc == 0.
ad::Var loss_generator(const std::vector<ad::Var>& fake_scores, ad::Var x, ad::Var x_hat,
                       ad::Var ssc_term, float lambda_aux, float lambda_ssc,
                       const MrsdConfig& config);

// (1/K) sum [ mean((D_k(real) - 1)^2) + mean(D_k(fake)^2) ].
ad::Var loss_discriminator(const std::vector<ad::Var>& real_scores,
                           const std::vector<ad::Var>& fake_scores);

// ---- discriminators ----

/// Strided 2D conv stack with leaky-rectifier activations ending in a
/// 1-channel score map. Used by both discriminator families.
class ConvStack2d {
 public:
  struct LayerSpec {
    int out_channels, kh, kw, sh, sw, ph, pw;
  };

  ConvStack2d() = default;
  ConvStack2d(int in_channels, const std::vector<LayerSpec>& layers, Rng& rng);

  // x: in_channels x (height*width) -> 1 x pixels score map.
  ad::Var forward(ad::Tape& tape, ad::Var x, int height, int width) const;
  void params(const std::string& prefix, std::vector<ad::NamedParam>& out) const;

 private:
  int in_channels_ = 1;
  std::vector<LayerSpec> layers_;
  std::vector<ad::Parameter> weights_, biases_;
};

/// MRSD: one sub-discriminator per STFT resolution, judging magnitude
/// spectrograms.
class MrsDiscriminator {
 public:
  MrsDiscriminator() = default;
  MrsDiscriminator(const MrsdConfig& config, Rng& rng);

  // One score map per resolution. Throws DataError when the waveform is
  // shorter than a resolution's window.
  std::vector<ad::Var> forward(ad::Tape& tape, ad::Var wave) const;
  const MrsdConfig& config() const { return config_; }
  void params(const std::string& prefix, std::vector<ad::NamedParam>& out) const;

 private:
  MrsdConfig config_;
  std::vector<ConvStack2d> bodies_;
};

/// MPWD: one sub-discriminator per period, judging the period-strided
/// reshaping of the waveform (rows = time steps of stride p, width = p).
class MpwDiscriminator {
 public:
  MpwDiscriminator() = default;
  MpwDiscriminator(const MpwdConfig& config, Rng& rng);

  std::vector<ad::Var> forward(ad::Tape& tape, ad::Var wave) const;
  const MpwdConfig& config() const { return config_; }
  void params(const std::string& prefix, std::vector<ad::NamedParam>& out) const;

 private:
  MpwdConfig config_;
  std::vector<ConvStack2d> bodies_;
};

/// The full mixture: K = M + |periods| sub-discriminators.
class DiscriminatorSet {
 public:
  DiscriminatorSet() = default;
  DiscriminatorSet(const MrsdConfig& mrsd, const MpwdConfig& mpwd, Rng& rng);

  std::vector<ad::Var> forward(ad::Tape& tape, ad::Var wave) const;
  int sub_discriminator_count() const;
  const MrsdConfig& mrsd_config() const { return mrsd_.config(); }
  void params(const std::string& prefix, std::vector<ad::NamedParam>& out) const;

 private:
  MrsDiscriminator mrsd_;
  MpwDiscriminator mpwd_;
};

}  // namespace lvcvc::gan
