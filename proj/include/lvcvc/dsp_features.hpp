#pragma once

#include <Eigen/Dense>
#include <string>

#include "lvcvc/corpus_io.hpp"

namespace lvcvc::dsp {

// Spectrogram analysis settings shared across the codebase.
inline constexpr int kNumMelBins = 80;
inline constexpr int kNfft = 1024;
inline constexpr int kHop = 256;
inline constexpr int kWinLength = 1024;
inline constexpr float kLogFloor = 1e-5f;  // magnitude floor before log
inline constexpr int kLifterCoeffs = 20;

inline constexpr float kF0SearchMinHz = 50.0f;
inline constexpr float kF0SearchMaxHz = 600.0f;
inline constexpr float kPeriodicityThreshold = 0.3f;

inline constexpr int kPnormVoicedBins = 256;  // +1 unvoiced class
inline constexpr int kPnormClasses = kPnormVoicedBins + 1;
inline constexpr float kPnormClipSigma = 3.0f;

inline constexpr int kMedianF0Bins = 64;
inline constexpr float kMedianF0LowHz = 65.4f;   // note C2
inline constexpr float kMedianF0HighHz = 523.3f;  // note C5

inline constexpr float kWarpMin = 0.85f;
inline constexpr float kWarpMax = 1.15f;

/// 80 log-mel magnitudes per frame, stored bins x frames (column = frame).
struct LogMelSpectrogram {
  Eigen::MatrixXf values;

  Eigen::Index frames() const { return values.cols(); }
};

/// Low-quefrency-liftered envelope, same bins x frames axes as the
/// spectrogram it came from.
struct SpectralEnvelope {
  Eigen::MatrixXf values;

  Eigen::Index frames() const { return values.cols(); }
};

/// Per-frame F0 in Hz; 0 marks unvoiced frames.
struct F0Contour {
  Eigen::VectorXf f0_hz;

  Eigen::Index frames() const { return f0_hz.size(); }
};

/// Per-frame quantized normalized log-F0 class: 0..255 voiced, 256 unvoiced.
struct NormalizedQuantizedF0 {
  Eigen::VectorXi classes;

  Eigen::Index frames() const { return classes.size(); }
  // Dense one-hot view, kPnormClasses x frames (each column sums to 1).
  Eigen::MatrixXf one_hot() const;
};

/// Speaker median log-F0 bucketed into 64 bins over C2..C5.
struct MedianF0OneHot {
  int bin = 0;

  Eigen::VectorXf one_hot() const;
};

/// Frame-aligned channel stack fed to the kernel predictors, stored
/// channels x frames.
struct ConditioningBundle {
  Eigen::MatrixXf values;

  Eigen::Index channels() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
};

/// Row ranges of each feature block inside a ConditioningBundle. The pnorm
/// and median-F0 blocks can be removed entirely (ablated models shrink their
/// channel count rather than carrying zeros).
struct ConditioningLayout {
  int embed_dim = 256;
  bool use_pnorm = true;
  bool use_median_f0 = true;

  int envelope_rows() const { return kNumMelBins; }
  int pnorm_rows() const { return use_pnorm ? kPnormClasses : 0; }
  int embed_rows() const { return embed_dim; }
  int median_rows() const { return use_median_f0 ? kMedianF0Bins : 0; }
  int channels() const {
    return envelope_rows() + pnorm_rows() + embed_rows() + median_rows();
  }
  int envelope_offset() const { return 0; }
  int pnorm_offset() const { return envelope_rows(); }
  int embed_offset() const { return envelope_rows() + pnorm_rows(); }
  int median_offset() const { return embed_offset() + embed_rows(); }
};

// -- Analysis primitives (shared with the loss-side STFTs) --

// Periodic Hann window of length n.
Eigen::VectorXf hann_window(int n);

// Real-DFT basis restricted to a centered window of win_length samples
// inside an n_fft transform: (n_fft/2 + 1) x win_length each.
Eigen::MatrixXf dft_cos_matrix(int n_fft, int win_length);
Eigen::MatrixXf dft_sin_matrix(int n_fft, int win_length);

// Triangular mel filterbank, n_mels x (n_fft/2 + 1), HTK mel scale,
// spanning 0..sample_rate/2.
Eigen::MatrixXf mel_filterbank(int n_mels, int n_fft, int sample_rate);

// Orthonormal DCT-II matrix over n points (rows are basis vectors), and the
// rank-n_coeffs liftering projection built from it.
Eigen::MatrixXf dct_matrix(int n);
Eigen::MatrixXf lifter_projection(int n, int n_coeffs);

// Centered frame matrix: win_length x frames with reflect padding at the
// clip edges; frame t is centered on sample t*hop.
Eigen::MatrixXf frame_centered(const Eigen::VectorXf& samples, int win_length, int hop);

// -- Feature operations --

// 80-dim log-mel spectrogram: Hann 1024 / hop 256, centered frames
// (1 + floor(len/256) of them), magnitudes floored at kLogFloor before the
// natural log. Throws DataError for clips shorter than one hop.
LogMelSpectrogram compute_log_mel(const io::AudioClip& clip);

// Low-quefrency liftering: orthonormal DCT across the 80 mel bins, keep the
// n_coeffs lowest quefrencies, invert. A linear, idempotent projection.
SpectralEnvelope lifter_envelope(const LogMelSpectrogram& mel, int n_coeffs = kLifterCoeffs);
SpectralEnvelope lifter_envelope(const SpectralEnvelope& env, int n_coeffs = kLifterCoeffs);

// Frequency-axis warp on the mel-bin axis: out(b) = in(b / alpha), linear
// interpolation, edge value beyond bin 79. alpha must lie in [0.85, 1.15].
SpectralEnvelope warp_envelope(const SpectralEnvelope& env, float alpha);

// Autocorrelation pitch tracker over [50, 600] Hz, one value per spectrogram
// frame, voicing by periodicity threshold. Degenerate audio yields unvoiced
// frames rather than errors.
F0Contour estimate_f0(const io::AudioClip& clip);

// Per-utterance z-normalized log F0 over voiced frames, clipped to +-3 sigma
// and quantized into 256 uniform bins; unvoiced frames take class 256.
NormalizedQuantizedF0 pnorm_f0(const F0Contour& contour);

// Median voiced log-F0 mapped into the 64-bin C2..C5 range (clamped).
// Throws DataError when no frame is voiced.
MedianF0OneHot median_f0_onehot(const F0Contour& contour);

// Channel concatenation (envelope | pnorm one-hot | embedding broadcast |
// median one-hot broadcast). Frame counts of the envelope and pnorm must
// match. Blocks disabled in the layout are omitted.
ConditioningBundle build_conditioning(const SpectralEnvelope& env,
                                      const NormalizedQuantizedF0& pnorm,
                                      const Eigen::VectorXf& speaker_embedding,
                                      const MedianF0OneHot& median_f0,
                                      const ConditioningLayout& layout = {});

// Probe helpers: copies with the speaker rows (embedding + median F0) or the
// content rows (envelope + pnorm) zeroed.
ConditioningBundle zero_speaker_rows(const ConditioningBundle& bundle,
                                     const ConditioningLayout& layout);
ConditioningBundle zero_content_rows(const ConditioningBundle& bundle,
                                     const ConditioningLayout& layout);

/// Everything cmd-extract caches for one utterance.
struct FeatureSet {
  LogMelSpectrogram mel;
  SpectralEnvelope envelope;
  F0Contour f0;
  NormalizedQuantizedF0 pnorm;
  MedianF0OneHot median_f0;
};

FeatureSet extract_features(const io::AudioClip& clip);

// Cache files are LVCA containers with arrays X (80 x frames),
// H (80 x frames), p_norm (1 x frames class indices), f0_hz (1 x frames),
// m (1 x 1 bin index), and optionally speaker_embedding (d x 1).
void save_feature_cache(const FeatureSet& features, const std::string& utt_id,
                        const std::string& path);
FeatureSet load_feature_cache(const std::string& path);

}  // namespace lvcvc::dsp
