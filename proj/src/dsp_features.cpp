#include "lvcvc/dsp_features.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lvcvc/array_file.hpp"
#include "lvcvc/errors.hpp"

namespace lvcvc::dsp {

namespace {

// Fold an out-of-range index back into [0, n) by reflection about the ends
// (librosa-style reflect, no edge repeat).
Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

float htk_mel(float hz) { return 2595.0f * std::log10(1.0f + hz / 700.0f); }
float htk_hz(float mel) { return 700.0f * (std::pow(10.0f, mel / 2595.0f) - 1.0f); }

}  // namespace

Eigen::VectorXf hann_window(int n) {
  Eigen::VectorXf w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5f - 0.5f * std::cos(2.0 * M_PI * i / n);
  return w;
}

Eigen::MatrixXf dft_cos_matrix(int n_fft, int win_length) {
  const int bins = n_fft / 2 + 1;
  const int pad = (n_fft - win_length) / 2;
  Eigen::MatrixXf c(bins, win_length);
  for (int k = 0; k < bins; ++k)
    for (int j = 0; j < win_length; ++j)
      c(k, j) = static_cast<float>(std::cos(2.0 * M_PI * k * (j + pad) / n_fft));
  return c;
}

Eigen::MatrixXf dft_sin_matrix(int n_fft, int win_length) {
  const int bins = n_fft / 2 + 1;
  const int pad = (n_fft - win_length) / 2;
  Eigen::MatrixXf s(bins, win_length);
  for (int k = 0; k < bins; ++k)
    for (int j = 0; j < win_length; ++j)
      s(k, j) = static_cast<float>(-std::sin(2.0 * M_PI * k * (j + pad) / n_fft));
  return s;
}

Eigen::MatrixXf mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int bins = n_fft / 2 + 1;
  const float f_max = sample_rate / 2.0f;
  const float mel_lo = htk_mel(0.0f);
  const float mel_hi = htk_mel(f_max);
  std::vector<float> centers(n_mels + 2);
  for (int m = 0; m < n_mels + 2; ++m)
    centers[m] = htk_hz(mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1));

  Eigen::MatrixXf fb = Eigen::MatrixXf::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const float lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int k = 0; k < bins; ++k) {
      const float f = static_cast<float>(k) * sample_rate / n_fft;
      float w = 0.0f;
      if (f > lo && f < hi)
        w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb(m, k) = w;
    }
  }
  return fb;
}

namespace {

Eigen::MatrixXd dct_matrix_d(int n) {
  Eigen::MatrixXd d(n, n);
  const double scale0 = std::sqrt(1.0 / n);
  const double scale = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k)
    for (int b = 0; b < n; ++b)
      d(k, b) = (k == 0 ? scale0 : scale) * std::cos(M_PI * (2.0 * b + 1.0) * k / (2.0 * n));
  return d;
}

// Projection applied in double so idempotence survives float32 storage.
Eigen::MatrixXd lifter_projection_d(int n, int n_coeffs) {
  if (n_coeffs < 1 || n_coeffs > n)
    throw DataError("lifter coefficient count " + std::to_string(n_coeffs) +
                    " out of range [1, " + std::to_string(n) + "]");
  const Eigen::MatrixXd d = dct_matrix_d(n);
  const Eigen::MatrixXd kept = d.topRows(n_coeffs);
  return kept.transpose() * kept;
}

}  // namespace

Eigen::MatrixXf dct_matrix(int n) { return dct_matrix_d(n).cast<float>(); }

Eigen::MatrixXf lifter_projection(int n, int n_coeffs) {
  return lifter_projection_d(n, n_coeffs).cast<float>();
}

Eigen::MatrixXf frame_centered(const Eigen::VectorXf& samples, int win_length, int hop) {
  const Eigen::Index len = samples.size();
  const Eigen::Index frames = 1 + len / hop;
  Eigen::MatrixXf out(win_length, frames);
  const int half = win_length / 2;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index start = t * hop - half;
    for (int j = 0; j < win_length; ++j)
      out(j, t) = samples[reflect_index(start + j, len)];
  }
  return out;
}

LogMelSpectrogram compute_log_mel(const io::AudioClip& clip) {
  if (clip.samples.size() < kHop)
    throw DataError("clip too short for analysis: " +
                    std::to_string(clip.samples.size()) + " samples");
  static const Eigen::VectorXf window = hann_window(kWinLength);
  static const Eigen::MatrixXf cos_m = dft_cos_matrix(kNfft, kWinLength);
  static const Eigen::MatrixXf sin_m = dft_sin_matrix(kNfft, kWinLength);
  static const Eigen::MatrixXf mel_fb = mel_filterbank(kNumMelBins, kNfft, io::kSampleRate);

  Eigen::MatrixXf frames = frame_centered(clip.samples, kWinLength, kHop);
  frames.array().colwise() *= window.array();
  const Eigen::MatrixXf re = cos_m * frames;
  const Eigen::MatrixXf im = sin_m * frames;
  const Eigen::MatrixXf mag = (re.array().square() + im.array().square()).sqrt();

  LogMelSpectrogram out;
  out.values = (mel_fb * mag).array().max(kLogFloor).log().matrix();
  return out;
}

SpectralEnvelope lifter_envelope(const LogMelSpectrogram& mel, int n_coeffs) {
  SpectralEnvelope out;
  out.values = (lifter_projection_d(kNumMelBins, n_coeffs) * mel.values.cast<double>())
                   .cast<float>();
  return out;
}

SpectralEnvelope lifter_envelope(const SpectralEnvelope& env, int n_coeffs) {
  SpectralEnvelope out;
  out.values = (lifter_projection_d(kNumMelBins, n_coeffs) * env.values.cast<double>())
                   .cast<float>();
  return out;
}

SpectralEnvelope warp_envelope(const SpectralEnvelope& env, float alpha) {
  if (alpha < kWarpMin || alpha > kWarpMax)
    throw DataError("warp factor " + std::to_string(alpha) + " out of [0.85, 1.15]");
  const Eigen::Index bins = env.values.rows();
  SpectralEnvelope out;
  out.values.resize(bins, env.values.cols());
  for (Eigen::Index b = 0; b < bins; ++b) {
    const float src = static_cast<float>(b) / alpha;
    if (src >= static_cast<float>(bins - 1)) {
      out.values.row(b) = env.values.row(bins - 1);
      continue;
    }
    const Eigen::Index lo = static_cast<Eigen::Index>(src);
    const float frac = src - static_cast<float>(lo);
    out.values.row(b) = (1.0f - frac) * env.values.row(lo) + frac * env.values.row(lo + 1);
  }
  return out;
}

F0Contour estimate_f0(const io::AudioClip& clip) {
  const int lag_min = static_cast<int>(io::kSampleRate / kF0SearchMaxHz);       // 26
  const int lag_max = static_cast<int>(io::kSampleRate / kF0SearchMinHz + 0.5f);  // 320
  const int win = kWinLength;

  Eigen::MatrixXf frames = frame_centered(clip.samples, win, kHop);
  F0Contour out;
  out.f0_hz = Eigen::VectorXf::Zero(frames.cols());

  for (Eigen::Index t = 0; t < frames.cols(); ++t) {
    Eigen::VectorXf x = frames.col(t);
    x.array() -= x.mean();
    const double r0 = static_cast<double>(x.squaredNorm());
    if (r0 < 1e-8) continue;  // silence

    // Biased normalized autocorrelation decays with lag, which keeps the
    // peak at the fundamental rather than at octave multiples.
    int best_lag = 0;
    double best_val = 0.0;
    std::vector<double> rho(lag_max + 2, 0.0);
    for (int lag = lag_min - 1; lag <= lag_max + 1 && lag < win; ++lag) {
      double r = 0.0;
      for (int n = 0; n + lag < win; ++n)
        r += static_cast<double>(x[n]) * static_cast<double>(x[n + lag]);
      rho[static_cast<std::size_t>(lag)] = r / r0;
    }
    for (int lag = lag_min; lag <= lag_max && lag < win - 1; ++lag) {
      if (rho[lag] > best_val) {
        best_val = rho[lag];
        best_lag = lag;
      }
    }
    if (best_lag == 0 || best_val < kPeriodicityThreshold) continue;

    // Parabolic refinement around the peak.
    double lag_refined = best_lag;
    if (best_lag > lag_min && best_lag < lag_max) {
      const double a = rho[best_lag - 1], b = rho[best_lag], c = rho[best_lag + 1];
      const double denom = a - 2.0 * b + c;
      if (std::abs(denom) > 1e-12) {
        double delta = 0.5 * (a - c) / denom;
        delta = std::clamp(delta, -0.5, 0.5);
        lag_refined = best_lag + delta;
      }
    }
    const float f0 = std::clamp(static_cast<float>(io::kSampleRate / lag_refined),
                                kF0SearchMinHz, kF0SearchMaxHz);
    out.f0_hz[t] = f0;
  }
  return out;
}

NormalizedQuantizedF0 pnorm_f0(const F0Contour& contour) {
  if (contour.frames() < 1) throw DataError("empty F0 contour");
  std::vector<double> voiced_log;
  for (Eigen::Index t = 0; t < contour.frames(); ++t)
    if (contour.f0_hz[t] > 0.0f) voiced_log.push_back(std::log(contour.f0_hz[t]));

  double mean = 0.0, stddev = 0.0;
  if (!voiced_log.empty()) {
    for (double v : voiced_log) mean += v;
    mean /= static_cast<double>(voiced_log.size());
    for (double v : voiced_log) stddev += (v - mean) * (v - mean);
    stddev = std::sqrt(stddev / static_cast<double>(voiced_log.size()));
  }

  NormalizedQuantizedF0 out;
  out.classes.resize(contour.frames());
  for (Eigen::Index t = 0; t < contour.frames(); ++t) {
    if (contour.f0_hz[t] <= 0.0f) {
      out.classes[t] = kPnormVoicedBins;  // unvoiced class
      continue;
    }
    double z = stddev > 1e-9 ? (std::log(contour.f0_hz[t]) - mean) / stddev : 0.0;
    z = std::clamp(z, -static_cast<double>(kPnormClipSigma),
                   static_cast<double>(kPnormClipSigma));
    int bin = static_cast<int>(std::floor(kPnormVoicedBins * (z + kPnormClipSigma) /
                                          (2.0 * kPnormClipSigma)));
    out.classes[t] = std::clamp(bin, 0, kPnormVoicedBins - 1);
  }
  return out;
}

Eigen::MatrixXf NormalizedQuantizedF0::one_hot() const {
  Eigen::MatrixXf out = Eigen::MatrixXf::Zero(kPnormClasses, classes.size());
  for (Eigen::Index t = 0; t < classes.size(); ++t) out(classes[t], t) = 1.0f;
  return out;
}

MedianF0OneHot median_f0_onehot(const F0Contour& contour) {
  std::vector<float> voiced_log;
  for (Eigen::Index t = 0; t < contour.frames(); ++t)
    if (contour.f0_hz[t] > 0.0f) voiced_log.push_back(std::log(contour.f0_hz[t]));
  if (voiced_log.empty())
    throw DataError("no voiced frames: cannot compute median F0");

  std::sort(voiced_log.begin(), voiced_log.end());
  const std::size_t n = voiced_log.size();
  const float median_log =
      n % 2 == 1 ? voiced_log[n / 2]
                 : 0.5f * (voiced_log[n / 2 - 1] + voiced_log[n / 2]);

  const float lo = std::log(kMedianF0LowHz);
  const float hi = std::log(kMedianF0HighHz);
  int bin = static_cast<int>(std::floor(kMedianF0Bins * (median_log - lo) / (hi - lo)));
  MedianF0OneHot out;
  out.bin = std::clamp(bin, 0, kMedianF0Bins - 1);
  return out;
}

Eigen::VectorXf MedianF0OneHot::one_hot() const {
  Eigen::VectorXf v = Eigen::VectorXf::Zero(kMedianF0Bins);
  v[bin] = 1.0f;
  return v;
}

ConditioningBundle build_conditioning(const SpectralEnvelope& env,
                                      const NormalizedQuantizedF0& pnorm,
                                      const Eigen::VectorXf& speaker_embedding,
                                      const MedianF0OneHot& median_f0,
                                      const ConditioningLayout& layout) {
  if (env.frames() != pnorm.frames())
    throw DataError("conditioning frame mismatch: envelope has " +
                    std::to_string(env.frames()) + " frames, pnorm has " +
                    std::to_string(pnorm.frames()));
  if (speaker_embedding.size() != layout.embed_dim)
    throw DataError("speaker embedding dimension " +
                    std::to_string(speaker_embedding.size()) + " != layout embed_dim " +
                    std::to_string(layout.embed_dim));
  const Eigen::Index frames = env.frames();
  ConditioningBundle out;
  out.values.resize(layout.channels(), frames);
  out.values.middleRows(layout.envelope_offset(), layout.envelope_rows()) = env.values;
  if (layout.use_pnorm)
    out.values.middleRows(layout.pnorm_offset(), layout.pnorm_rows()) = pnorm.one_hot();
  out.values.middleRows(layout.embed_offset(), layout.embed_rows()) =
      speaker_embedding.replicate(1, frames);
  if (layout.use_median_f0)
    out.values.middleRows(layout.median_offset(), layout.median_rows()) =
        median_f0.one_hot().replicate(1, frames);
  return out;
}

ConditioningBundle zero_speaker_rows(const ConditioningBundle& bundle,
                                     const ConditioningLayout& layout) {
  ConditioningBundle out = bundle;
  out.values.middleRows(layout.embed_offset(), layout.embed_rows()).setZero();
  if (layout.use_median_f0)
    out.values.middleRows(layout.median_offset(), layout.median_rows()).setZero();
  return out;
}

ConditioningBundle zero_content_rows(const ConditioningBundle& bundle,
                                     const ConditioningLayout& layout) {
  ConditioningBundle out = bundle;
  out.values.middleRows(layout.envelope_offset(), layout.envelope_rows()).setZero();
  if (layout.use_pnorm)
    out.values.middleRows(layout.pnorm_offset(), layout.pnorm_rows()).setZero();
  return out;
}

FeatureSet extract_features(const io::AudioClip& clip) {
  FeatureSet f;
  f.mel = compute_log_mel(clip);
  f.envelope = lifter_envelope(f.mel);
  f.f0 = estimate_f0(clip);
  f.pnorm = pnorm_f0(f.f0);
  f.median_f0 = median_f0_onehot(f.f0);
  return f;
}

void save_feature_cache(const FeatureSet& features, const std::string& utt_id,
                        const std::string& path) {
  ArrayFile file;
  nlohmann::json meta;
  meta["kind"] = "feature_cache";
  meta["utt_id"] = utt_id;
  meta["mel_bins"] = kNumMelBins;
  meta["hop"] = kHop;
  file.set_meta(meta);
  file.add("X", features.mel.values);
  file.add("H", features.envelope.values);
  file.add("p_norm", features.pnorm.classes.cast<float>().transpose());
  file.add("f0_hz", features.f0.f0_hz.transpose());
  Eigen::MatrixXf m(1, 1);
  m(0, 0) = static_cast<float>(features.median_f0.bin);
  file.add("m", m);
  file.save(path);
}

FeatureSet load_feature_cache(const std::string& path) {
  const ArrayFile file = ArrayFile::load(path);
  FeatureSet f;
  f.mel.values = file.get("X");
  f.envelope.values = file.get("H");
  const Eigen::MatrixXf pn = file.get("p_norm");
  f.pnorm.classes = pn.row(0).transpose().cast<int>();
  f.f0.f0_hz = file.get("f0_hz").row(0).transpose();
  f.median_f0.bin = static_cast<int>(file.get("m")(0, 0));
  return f;
}

}  // namespace lvcvc::dsp
