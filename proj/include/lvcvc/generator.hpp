#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvcvc/autodiff.hpp"
#include "lvcvc/dsp_features.hpp"
#include "lvcvc/lvc_core.hpp"
#include "lvcvc/rng.hpp"

namespace lvcvc::gen {

struct GeneratorConfig {
  int z_dim = 64;
  int channels = 16;
  std::vector<int> upsample_rates = {8, 8, 4};
  int kp_hidden = 64;
  int kp_residual_blocks = 2;
  int cond_channels = 657;
  lvc::LvcStackConfig stack;

  int hop() const {
    int h = 1;
    for (int r : upsample_rates) h *= r;
    return h;
  }
};

/// Standard-normal input sequence, one column per conditioning frame.
struct NoiseSequence {
  Eigen::MatrixXf values;  // z_dim x frames
  std::uint64_t seed = 0;

  Eigen::Index frames() const { return values.cols(); }
};

// Deterministic per seed. Throws DataError for frames < 1.
NoiseSequence sample_noise(int frames, std::uint64_t seed, int z_dim = 64);

/// Per-stack activations captured after each transposed-convolution stack
/// (channels x samples, lengths frames * 8, * 64, * 256 with defaults).
struct IntermediateTaps {
  std::vector<Eigen::MatrixXf> stacks;
};

/// Waveform generator: noise goes through one transposed convolution plus a
/// gated LVC block per stack, with per-stack kernel predictors reading the
/// conditioning bundle; a 1x1 convolution and tanh produce samples in
/// [-1, 1]. Output length is exactly hop() * frames.
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorConfig& config, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var z, ad::Var cond,
                  std::vector<ad::Var>* taps = nullptr) const;

  Eigen::VectorXf generate(const NoiseSequence& z,
                           const dsp::ConditioningBundle& cond) const;
  Eigen::VectorXf generate_with_taps(const NoiseSequence& z,
                                     const dsp::ConditioningBundle& cond,
                                     IntermediateTaps& taps) const;

  const GeneratorConfig& config() const { return config_; }
  int conditioning_channels() const { return config_.cond_channels; }
  void params(const std::string& prefix, std::vector<ad::NamedParam>& out) const;

 private:
  GeneratorConfig config_;
  std::vector<ad::Parameter> convt_w_, convt_b_;
  std::vector<lvc::KernelPredictor> predictors_;
  ad::Parameter out_w_, out_b_;
};

}  // namespace lvcvc::gen
