#pragma once

#include <memory>

#include "lvcvc/autodiff.hpp"
#include "lvcvc/dsp_features.hpp"

namespace lvcvc::dsp {

/// One STFT analysis setting. hop < win_length <= n_fft.
struct StftResolution {
  int n_fft = 1024;
  int hop = 256;
  int win_length = 1024;

  int bins() const { return n_fft / 2 + 1; }
};

void validate(const StftResolution& res);

/// Precomputed Hann window and real-DFT bases for one resolution, shared
/// across forward passes (these matrices are expensive to rebuild per step).
class StftBasis {
 public:
  explicit StftBasis(const StftResolution& res);
  static std::shared_ptr<const StftBasis> get(const StftResolution& res);

  const StftResolution& resolution() const { return res_; }
  const Eigen::VectorXf& window() const { return window_; }
  const ad::Mat& cos_basis() const { return cos_; }
  const ad::Mat& sin_basis() const { return sin_; }

 private:
  StftResolution res_;
  Eigen::VectorXf window_;
  ad::Mat cos_, sin_;
};

// Frame count of a waveform of `samples` samples under a resolution.
// Centered analysis pads by reflection and yields 1 + samples/hop frames;
// uncentered analysis requires samples >= win_length and yields
// 1 + (samples - win_length)/hop.
int stft_frame_count(int samples, const StftResolution& res, bool centered);

// Differentiable magnitude STFT of a 1 x T waveform: bins x frames.
// A small epsilon inside the square root keeps gradients finite at silence.
ad::Var stft_magnitude(ad::Var wave, const StftBasis& basis, bool centered);

// Differentiable 80-bin log-mel matching compute_log_mel (centered frames,
// magnitude floor, natural log); input 1 x T, output 80 x frames.
ad::Var diff_log_mel(ad::Var wave);

// Reflect-pad a 1 x T waveform at the tail up to a multiple of `period`.
ad::Var reflect_pad_to_multiple(ad::Var wave, int period);

}  // namespace lvcvc::dsp
