#include "lvcvc/gan_losses.hpp"

#include <stdexcept>

#include "lvcvc/errors.hpp"
#include "lvcvc/nn_init.hpp"

namespace lvcvc::gan {

using ad::Mat;
using ad::Tape;
using ad::Var;

int mpwd_rows(int samples, int period) {
  return (samples + period - 1) / period;
}

Var loss_sc(Var ref_mag, Var est_mag) {
  if (ref_mag.rows() != est_mag.rows() || ref_mag.cols() != est_mag.cols())
    throw std::invalid_argument("loss_sc: shape mismatch");
  const float ref_norm = ref_mag.value().norm();
  if (ref_norm == 0.0f)
    throw std::invalid_argument("loss_sc: all-zero reference spectrogram");
  Var diff = sub(ref_mag, est_mag);
  Var num = ad::sqrt_v(ad::sum(ad::square_v(diff)));
  Var den = ad::sqrt_v(ad::sum(ad::square_v(ref_mag)));
  return ad::mul(num, ad::reciprocal_v(den));
}

Var loss_mag(Var ref_mag, Var est_mag) {
  if (ref_mag.rows() != est_mag.rows() || ref_mag.cols() != est_mag.cols())
    throw std::invalid_argument("loss_mag: shape mismatch");
  Var log_ref = ad::log_v(ad::clamp_min(ref_mag, dsp::kLogFloor));
  Var log_est = ad::log_v(ad::clamp_min(est_mag, dsp::kLogFloor));
  return ad::mean(ad::abs_v(sub(log_ref, log_est)));
}

Var loss_aux_from_mags(const std::vector<std::pair<Var, Var>>& mag_pairs) {
  if (mag_pairs.empty()) throw std::invalid_argument("loss_aux: no resolutions");
  Var total;
  for (const auto& [ref, est] : mag_pairs) {
    Var term = ad::add(loss_sc(ref, est), loss_mag(ref, est));
    total = total.valid() ? ad::add(total, term) : term;
  }
  return ad::scale(total, 1.0f / static_cast<float>(mag_pairs.size()));
}

Var loss_aux(Var x, Var x_hat, const MrsdConfig& config) {
  if (x.cols() != x_hat.cols() || x.rows() != 1 || x_hat.rows() != 1)
    throw std::invalid_argument("loss_aux: waveform length mismatch");
  std::vector<std::pair<Var, Var>> pairs;
  for (const auto& res : config.resolutions) {
    auto basis = dsp::StftBasis::get(res);
    pairs.emplace_back(dsp::stft_magnitude(x, *basis, false),
                       dsp::stft_magnitude(x_hat, *basis, false));
  }
  return loss_aux_from_mags(pairs);
}

double loss_aux_value(const Eigen::VectorXf& x, const Eigen::VectorXf& x_hat,
                      const MrsdConfig& config) {
  Tape tape;
  Var vx = tape.constant(x.transpose());
  Var vy = tape.constant(x_hat.transpose());
  return static_cast<double>(loss_aux(vx, vy, config).scalar());
}

Var loss_ssc(const std::vector<Var>& converted_embeddings, Var target, bool raw_cosine) {
  if (converted_embeddings.empty())
    throw std::invalid_argument("loss_ssc: no converted embeddings");
  Var total;
  for (const Var& e : converted_embeddings) {
    Var c = ad::cosine_similarity(e, target);
    total = total.valid() ? ad::add(total, c) : c;
  }
  Var mean_cos = ad::scale(total, 1.0f / static_cast<float>(converted_embeddings.size()));
  if (raw_cosine) return mean_cos;
  return ad::add_scalar(ad::scale(mean_cos, -1.0f), 1.0f);
}

Var loss_generator_adv(const std::vector<Var>& fake_scores) {
  if (fake_scores.empty()) throw std::invalid_argument("loss_generator: no score maps");
  Var total;
  for (const Var& s : fake_scores) {
    Var term = ad::mean(ad::square_v(ad::add_scalar(s, -1.0f)));
    total = total.valid() ? ad::add(total, term) : term;
  }
  return ad::scale(total, 1.0f / static_cast<float>(fake_scores.size()));
}

Var loss_generator(const std::vector<Var>& fake_scores, Var x, Var x_hat, Var ssc_term,
                   float lambda_aux, float lambda_ssc, const MrsdConfig& config) {
  Var loss = loss_generator_adv(fake_scores);
  if (lambda_aux != 0.0f)
    loss = ad::add(loss, ad::scale(loss_aux(x, x_hat, config), lambda_aux));
  if (lambda_ssc != 0.0f) {
    if (!ssc_term.valid())
      throw std::invalid_argument("loss_generator: lambda_ssc set but no ssc term");
    loss = ad::add(loss, ad::scale(ssc_term, lambda_ssc));
  }
  return loss;
}

Var loss_discriminator(const std::vector<Var>& real_scores,
                       const std::vector<Var>& fake_scores) {
  if (real_scores.empty() || real_scores.size() != fake_scores.size())
    throw std::invalid_argument("loss_discriminator: score map count mismatch");
  Var total;
  for (std::size_t k = 0; k < real_scores.size(); ++k) {
    Var real_term = ad::mean(ad::square_v(ad::add_scalar(real_scores[k], -1.0f)));
    Var fake_term = ad::mean(ad::square_v(fake_scores[k]));
    Var term = ad::add(real_term, fake_term);
    total = total.valid() ? ad::add(total, term) : term;
  }
  return ad::scale(total, 1.0f / static_cast<float>(real_scores.size()));
}

// ---- discriminator bodies ----

ConvStack2d::ConvStack2d(int in_channels, const std::vector<LayerSpec>& layers, Rng& rng)
    : in_channels_(in_channels), layers_(layers) {
  int in_ch = in_channels;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const int fan_in = in_ch * l.kh * l.kw;
    weights_.emplace_back("w" + std::to_string(i),
                          ad::fan_in_init(l.out_channels, fan_in, rng));
    biases_.emplace_back("b" + std::to_string(i), Mat::Zero(l.out_channels, 1));
    in_ch = l.out_channels;
  }
}

Var ConvStack2d::forward(Tape& tape, Var x, int height, int width) const {
  int in_ch = in_channels_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    ad::Conv2dSpec spec;
    spec.in_channels = in_ch;
    spec.height = height;
    spec.width = width;
    spec.kh = l.kh;
    spec.kw = l.kw;
    spec.sh = l.sh;
    spec.sw = l.sw;
    spec.ph = l.ph;
    spec.pw = l.pw;
    x = ad::conv2d(x, tape.param(weights_[i]), tape.param(biases_[i]), spec);
    if (i + 1 < layers_.size()) x = ad::leaky_relu(x, 0.2f);
    height = spec.out_height();
    width = spec.out_width();
    in_ch = l.out_channels;
  }
  return x;
}

void ConvStack2d::params(const std::string& prefix, std::vector<ad::NamedParam>& out) const {
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back({prefix + ".w" + std::to_string(i), &weights_[i]});
    out.push_back({prefix + ".b" + std::to_string(i), &biases_[i]});
  }
}

MrsDiscriminator::MrsDiscriminator(const MrsdConfig& config, Rng& rng) : config_(config) {
  if (config.resolutions.empty())
    throw DataError("MRSD needs at least one STFT resolution");
  const int c = config.body_channels;
  const std::vector<ConvStack2d::LayerSpec> layers = {
      {c, 3, 3, 2, 2, 1, 1},
      {c, 3, 3, 2, 2, 1, 1},
      {c, 3, 3, 2, 2, 1, 1},
      {1, 3, 3, 1, 1, 1, 1},
  };
  for (std::size_t i = 0; i < config.resolutions.size(); ++i) {
    dsp::validate(config.resolutions[i]);
    for (std::size_t j = 0; j < i; ++j) {
      const auto &a = config.resolutions[i], &b = config.resolutions[j];
      if (a.n_fft == b.n_fft && a.hop == b.hop && a.win_length == b.win_length)
        throw DataError("duplicate MRSD resolution (" + std::to_string(a.n_fft) + ", " +
                        std::to_string(a.hop) + ", " + std::to_string(a.win_length) + ")");
    }
    bodies_.emplace_back(1, layers, rng);
  }
}

std::vector<Var> MrsDiscriminator::forward(Tape& tape, Var wave) const {
  std::vector<Var> scores;
  for (std::size_t i = 0; i < config_.resolutions.size(); ++i) {
    const auto& res = config_.resolutions[i];
    auto basis = dsp::StftBasis::get(res);
    Var mag = dsp::stft_magnitude(wave, *basis, false);
    const int frames = static_cast<int>(mag.cols());
    // conv2d wants a single channel row with pixel (bin, frame) at column
    // bin*frames + frame; transposing first makes the col-major flat order
    // line up.
    Var image = ad::reshape(ad::transpose_v(mag), 1, res.bins() * frames);
    scores.push_back(bodies_[i].forward(tape, image, res.bins(), frames));
  }
  return scores;
}

void MrsDiscriminator::params(const std::string& prefix,
                              std::vector<ad::NamedParam>& out) const {
  for (std::size_t i = 0; i < bodies_.size(); ++i)
    bodies_[i].params(prefix + ".r" + std::to_string(i), out);
}

namespace {

int gcd_of(int a, int b) { return b == 0 ? a : gcd_of(b, a % b); }

}  // namespace

MpwDiscriminator::MpwDiscriminator(const MpwdConfig& config, Rng& rng) : config_(config) {
  if (config.periods.empty()) throw DataError("MPWD needs at least one period");
  for (std::size_t i = 0; i < config.periods.size(); ++i) {
    if (config.periods[i] < 2)
      throw DataError("MPWD periods must be >= 2");
    for (std::size_t j = 0; j < i; ++j)
      if (gcd_of(config.periods[i], config.periods[j]) != 1)
        throw DataError("MPWD periods must be pairwise coprime, got " +
                        std::to_string(config.periods[j]) + " and " +
                        std::to_string(config.periods[i]));
  }
  const int c = config.body_channels;
  const std::vector<ConvStack2d::LayerSpec> layers = {
      {c, 5, 1, 3, 1, 2, 0},
      {2 * c, 5, 1, 3, 1, 2, 0},
      {2 * c, 5, 1, 3, 1, 2, 0},
      {1, 3, 1, 1, 1, 1, 0},
  };
  for (std::size_t i = 0; i < config.periods.size(); ++i)
    bodies_.emplace_back(1, layers, rng);
}

std::vector<Var> MpwDiscriminator::forward(Tape& tape, Var wave) const {
  if (wave.rows() != 1) throw std::invalid_argument("mpwd: expected 1 x T waveform");
  std::vector<Var> scores;
  for (std::size_t i = 0; i < config_.periods.size(); ++i) {
    const int p = config_.periods[i];
    if (wave.cols() < p)
      throw DataError("clip too short for period " + std::to_string(p));
    Var padded = dsp::reflect_pad_to_multiple(wave, p);
    const int rows = static_cast<int>(padded.cols()) / p;
    // Column-major flat layout makes the period-p reshape a pure metadata
    // change: row h of the p-wide image is samples [h*p, (h+1)*p).
    scores.push_back(bodies_[i].forward(tape, padded, rows, p));
  }
  return scores;
}

void MpwDiscriminator::params(const std::string& prefix,
                              std::vector<ad::NamedParam>& out) const {
  for (std::size_t i = 0; i < bodies_.size(); ++i)
    bodies_[i].params(prefix + ".p" + std::to_string(config_.periods[i]), out);
}

DiscriminatorSet::DiscriminatorSet(const MrsdConfig& mrsd, const MpwdConfig& mpwd, Rng& rng)
    : mrsd_(mrsd, rng), mpwd_(mpwd, rng) {}

std::vector<Var> DiscriminatorSet::forward(Tape& tape, Var wave) const {
  std::vector<Var> scores = mrsd_.forward(tape, wave);
  std::vector<Var> period_scores = mpwd_.forward(tape, wave);
  scores.insert(scores.end(), period_scores.begin(), period_scores.end());
  return scores;
}

int DiscriminatorSet::sub_discriminator_count() const {
  return static_cast<int>(mrsd_.config().resolutions.size() +
                          mpwd_.config().periods.size());
}

void DiscriminatorSet::params(const std::string& prefix,
                              std::vector<ad::NamedParam>& out) const {
  mrsd_.params(prefix + ".mrsd", out);
  mpwd_.params(prefix + ".mpwd", out);
}

}  // namespace lvcvc::gan
