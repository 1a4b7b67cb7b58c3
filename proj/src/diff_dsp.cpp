#include "lvcvc/diff_dsp.hpp"

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

#include "lvcvc/errors.hpp"

namespace lvcvc::dsp {

void validate(const StftResolution& res) {
  if (!(res.hop >= 1 && res.hop < res.win_length && res.win_length <= res.n_fft))
    throw DataError("invalid STFT resolution: need hop < win_length <= n_fft, got (" +
                    std::to_string(res.n_fft) + ", " + std::to_string(res.hop) + ", " +
                    std::to_string(res.win_length) + ")");
}

StftBasis::StftBasis(const StftResolution& res) : res_(res) {
  validate(res);
  window_ = hann_window(res.win_length);
  cos_ = dft_cos_matrix(res.n_fft, res.win_length);
  sin_ = dft_sin_matrix(res.n_fft, res.win_length);
}

std::shared_ptr<const StftBasis> StftBasis::get(const StftResolution& res) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>, std::shared_ptr<const StftBasis>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  const auto key = std::make_tuple(res.n_fft, res.hop, res.win_length);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto basis = std::make_shared<const StftBasis>(res);
  cache[key] = basis;
  return basis;
}

int stft_frame_count(int samples, const StftResolution& res, bool centered) {
  if (centered) return 1 + samples / res.hop;
  if (samples < res.win_length)
    throw DataError("clip too short for STFT: " + std::to_string(samples) +
                    " samples < window " + std::to_string(res.win_length));
  return 1 + (samples - res.win_length) / res.hop;
}

namespace {

Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  const Eigen::Index period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

std::shared_ptr<const Eigen::MatrixXi> frame_index_table(int samples,
                                                         const StftResolution& res,
                                                         bool centered) {
  const int frames = stft_frame_count(samples, res, centered);
  auto table = std::make_shared<Eigen::MatrixXi>(res.win_length, frames);
  for (int f = 0; f < frames; ++f) {
    const Eigen::Index start =
        centered ? static_cast<Eigen::Index>(f) * res.hop - res.win_length / 2
                 : static_cast<Eigen::Index>(f) * res.hop;
    for (int j = 0; j < res.win_length; ++j) {
      Eigen::Index idx = start + j;
      if (centered) idx = reflect_index(idx, samples);
      (*table)(j, f) = static_cast<int>(idx);
    }
  }
  return table;
}

}  // namespace

ad::Var stft_magnitude(ad::Var wave, const StftBasis& basis, bool centered) {
  if (wave.rows() != 1) throw std::invalid_argument("stft_magnitude: expected 1 x T");
  const int samples = static_cast<int>(wave.cols());
  const StftResolution& res = basis.resolution();
  auto table = frame_index_table(samples, res, centered);
  ad::Var frames = ad::gather(wave, table, res.win_length,
                              static_cast<int>(table->cols()));
  frames = ad::colwise_mul_const(frames, basis.window());
  ad::Tape& tape = *wave.tape;
  ad::Var re = ad::matmul(tape.constant(basis.cos_basis()), frames);
  ad::Var im = ad::matmul(tape.constant(basis.sin_basis()), frames);
  ad::Var power = ad::add(ad::square_v(re), ad::square_v(im));
  return ad::sqrt_v(ad::add_scalar(power, 1e-9f));
}

ad::Var diff_log_mel(ad::Var wave) {
  static const ad::Mat mel_fb = mel_filterbank(kNumMelBins, kNfft, io::kSampleRate);
  StftResolution res{kNfft, kHop, kWinLength};
  ad::Var mag = stft_magnitude(wave, *StftBasis::get(res), /*centered=*/true);
  ad::Var mel = ad::matmul(wave.tape->constant(mel_fb), mag);
  return ad::log_v(ad::clamp_min(mel, kLogFloor));
}

ad::Var reflect_pad_to_multiple(ad::Var wave, int period) {
  if (wave.rows() != 1) throw std::invalid_argument("reflect_pad_to_multiple: expected 1 x T");
  const int samples = static_cast<int>(wave.cols());
  const int padded = ((samples + period - 1) / period) * period;
  if (padded == samples) return wave;
  auto table = std::make_shared<Eigen::MatrixXi>(1, padded);
  for (int i = 0; i < padded; ++i)
    (*table)(0, i) = static_cast<int>(reflect_index(i, samples));
  return ad::gather(wave, table, 1, padded);
}

}  // namespace lvcvc::dsp
