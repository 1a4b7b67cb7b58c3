#include "lvcvc/generator.hpp"

#include "lvcvc/errors.hpp"
#include "lvcvc/nn_init.hpp"

namespace lvcvc::gen {

using ad::Mat;
using ad::Tape;
using ad::Var;

NoiseSequence sample_noise(int frames, std::uint64_t seed, int z_dim) {
  if (frames < 1) throw DataError("sample_noise: need at least one frame");
  Rng rng(seed);
  NoiseSequence z;
  z.seed = seed;
  z.values.resize(z_dim, frames);
  for (int f = 0; f < frames; ++f)
    for (int d = 0; d < z_dim; ++d)
      z.values(d, f) = static_cast<float>(rng.normal());
  return z;
}

Generator::Generator(const GeneratorConfig& config, Rng& rng) : config_(config) {
  if (config.hop() != dsp::kHop)
    throw DataError("generator upsample rates multiply to " +
                    std::to_string(config.hop()) + ", expected hop " +
                    std::to_string(dsp::kHop));
  int in_ch = config.z_dim;
  for (std::size_t i = 0; i < config.upsample_rates.size(); ++i) {
    const int rate = config.upsample_rates[i];
    const int kernel = 2 * rate;
    convt_w_.emplace_back("convt" + std::to_string(i) + ".w",
                          ad::fan_in_init(config.channels, kernel * in_ch, rng));
    convt_b_.emplace_back("convt" + std::to_string(i) + ".b",
                          Mat::Zero(config.channels, 1));
    lvc::KernelPredictor::Config kp;
    kp.cond_channels = config.cond_channels;
    kp.hidden = config.kp_hidden;
    kp.residual_blocks = config.kp_residual_blocks;
    kp.stack = config.stack;
    kp.stack.channels = config.channels;
    predictors_.emplace_back(kp, rng);
    in_ch = config.channels;
  }
  out_w_ = ad::Parameter("out.w", ad::fan_in_init(1, config.channels, rng));
  out_b_ = ad::Parameter("out.b", Mat::Zero(1, 1));
}

Var Generator::forward(Tape& tape, Var z, Var cond, std::vector<Var>* taps) const {
  if (z.rows() != config_.z_dim)
    throw DataError("generator: noise has " + std::to_string(z.rows()) +
                    " channels, expected " + std::to_string(config_.z_dim));
  if (z.cols() != cond.cols())
    throw DataError("generator: noise frames " + std::to_string(z.cols()) +
                    " != conditioning frames " + std::to_string(cond.cols()));
  if (cond.rows() != config_.cond_channels)
    throw DataError("generator: conditioning has " + std::to_string(cond.rows()) +
                    " channels, expected " + std::to_string(config_.cond_channels));

  lvc::LvcStackConfig stack = config_.stack;
  stack.channels = config_.channels;
  Var x = z;
  for (std::size_t i = 0; i < config_.upsample_rates.size(); ++i) {
    x = ad::conv_transpose1d(x, tape.param(convt_w_[i]), tape.param(convt_b_[i]),
                             config_.upsample_rates[i]);
    Var kernels = predictors_[i].forward(tape, cond);
    x = lvc::lvc_block(x, kernels, stack);
    if (taps != nullptr) taps->push_back(x);
  }
  Var out = ad::conv1d(x, tape.param(out_w_), tape.param(out_b_), 1);
  return ad::tanh_v(out);
}

Eigen::VectorXf Generator::generate(const NoiseSequence& z,
                                    const dsp::ConditioningBundle& cond) const {
  Tape tape;
  Var wave = forward(tape, tape.constant(z.values), tape.constant(cond.values));
  return wave.value().row(0).transpose();
}

Eigen::VectorXf Generator::generate_with_taps(const NoiseSequence& z,
                                              const dsp::ConditioningBundle& cond,
                                              IntermediateTaps& taps) const {
  Tape tape;
  std::vector<Var> tap_vars;
  Var wave =
      forward(tape, tape.constant(z.values), tape.constant(cond.values), &tap_vars);
  taps.stacks.clear();
  for (const Var& t : tap_vars) taps.stacks.push_back(t.value());
  return wave.value().row(0).transpose();
}

void Generator::params(const std::string& prefix, std::vector<ad::NamedParam>& out) const {
  for (std::size_t i = 0; i < convt_w_.size(); ++i) {
    out.push_back({prefix + ".convt" + std::to_string(i) + ".w", &convt_w_[i]});
    out.push_back({prefix + ".convt" + std::to_string(i) + ".b", &convt_b_[i]});
    predictors_[i].params(prefix + ".kp" + std::to_string(i), out);
  }
  out.push_back({prefix + ".out.w", &out_w_});
  out.push_back({prefix + ".out.b", &out_b_});
}

}  // namespace lvcvc::gen
