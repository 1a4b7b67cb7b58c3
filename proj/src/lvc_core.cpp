#include "lvcvc/lvc_core.hpp"

#include <stdexcept>

#include "lvcvc/nn_init.hpp"

namespace lvcvc::lvc {

using ad::Mat;
using ad::Tape;
using ad::Var;

Mat lvc_apply(const Mat& x, const Mat& kernels, const Mat& bias, int kernel_size,
              int dilation) {
  Tape tape;
  return ad::lvc_apply(tape.input(x, false), tape.input(kernels, false),
                       tape.input(bias, false), kernel_size, dilation)
      .value();
}

Mat lvc_apply_oracle(const Mat& x, const Mat& kernels, const Mat& bias, int kernel_size,
                     int dilation) {
  const int c_in = static_cast<int>(x.rows());
  const int total = static_cast<int>(x.cols());
  const int frames = static_cast<int>(kernels.cols());
  if (frames < 1 || total % frames != 0)
    throw std::invalid_argument("lvc_apply_oracle: length not divisible by frame count");
  const int c_out = static_cast<int>(kernels.rows()) / (c_in * kernel_size);
  const int interval = total / frames;
  const int half = (kernel_size - 1) / 2;

  Mat out(c_out, total);
  for (int frame = 0; frame < frames; ++frame) {
    for (int p = frame * interval; p < (frame + 1) * interval; ++p) {
      for (int o = 0; o < c_out; ++o) {
        double acc = bias(o, frame);
        for (int c = 0; c < c_in; ++c) {
          for (int j = 0; j < kernel_size; ++j) {
            const int q = p + (j - half) * dilation;
            if (q < 0 || q >= total) continue;
            const float w = kernels((c * kernel_size + j) * c_out + o, frame);
            acc += static_cast<double>(w) * static_cast<double>(x(c, q));
          }
        }
        out(o, p) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Var lvc_block(Var x, Var kernel_set, const LvcStackConfig& config) {
  KernelSetLayout layout;
  layout.channels = config.channels;
  layout.kernel_size = config.kernel_size;
  layout.layers = config.layers();
  if (kernel_set.rows() != layout.rows())
    throw std::invalid_argument("lvc_block: kernel set has " +
                                std::to_string(kernel_set.rows()) + " rows, expected " +
                                std::to_string(layout.rows()));
  if (x.rows() != config.channels)
    throw std::invalid_argument("lvc_block: channel mismatch");

  for (int layer = 0; layer < layout.layers; ++layer) {
    const int dilation = config.dilations[layer];
    Var w_f = ad::slice_rows(kernel_set, layout.filter_weight_offset(layer),
                             layout.weight_block());
    Var b_f = ad::slice_rows(kernel_set, layout.filter_bias_offset(layer),
                             layout.bias_block());
    Var w_g = ad::slice_rows(kernel_set, layout.gate_weight_offset(layer),
                             layout.weight_block());
    Var b_g = ad::slice_rows(kernel_set, layout.gate_bias_offset(layer),
                             layout.bias_block());
    Var filt = ad::tanh_v(ad::lvc_apply(x, w_f, b_f, config.kernel_size, dilation));
    Var gate = ad::sigmoid_v(ad::lvc_apply(x, w_g, b_g, config.kernel_size, dilation));
    x = ad::add(x, ad::mul(filt, gate));
  }
  return x;
}

KernelPredictor::KernelPredictor(const Config& config, Rng& rng) : config_(config) {
  const int hidden = config.hidden;
  const int cond = config.cond_channels;
  in_w_ = ad::Parameter("in.w", ad::fan_in_init(hidden, cond * 5, rng));
  in_b_ = ad::Parameter("in.b", Mat::Zero(hidden, 1));
  for (int r = 0; r < config.residual_blocks; ++r) {
    const std::string tag = "res" + std::to_string(r);
    res_w1_.emplace_back(tag + ".w1", ad::fan_in_init(hidden, hidden * 3, rng));
    res_b1_.emplace_back(tag + ".b1", Mat::Zero(hidden, 1));
    res_w2_.emplace_back(tag + ".w2", ad::fan_in_init(hidden, hidden * 3, rng));
    res_b2_.emplace_back(tag + ".b2", Mat::Zero(hidden, 1));
  }
  // Small head init keeps the gated blocks near pass-through at step 0.
  head_w_ = ad::Parameter("head.w",
                          ad::fan_in_init(layout().rows(), hidden * 3, rng, 0.1f));
  head_b_ = ad::Parameter("head.b", Mat::Zero(layout().rows(), 1));
}

KernelSetLayout KernelPredictor::layout() const {
  KernelSetLayout layout;
  layout.channels = config_.stack.channels;
  layout.kernel_size = config_.stack.kernel_size;
  layout.layers = config_.stack.layers();
  return layout;
}

Var KernelPredictor::forward(Tape& tape, Var cond) const {
  if (cond.cols() < 1) throw std::invalid_argument("kernel predictor: empty conditioning");
  if (cond.rows() != config_.cond_channels)
    throw std::invalid_argument("kernel predictor: conditioning has " +
                                std::to_string(cond.rows()) + " channels, expected " +
                                std::to_string(config_.cond_channels));
  Var h = ad::leaky_relu(
      ad::conv1d(cond, tape.param(in_w_), tape.param(in_b_), 5, 1));
  for (std::size_t r = 0; r < res_w1_.size(); ++r) {
    Var y = ad::leaky_relu(
        ad::conv1d(h, tape.param(res_w1_[r]), tape.param(res_b1_[r]), 3, 1));
    y = ad::conv1d(y, tape.param(res_w2_[r]), tape.param(res_b2_[r]), 3, 1);
    h = ad::leaky_relu(ad::add(h, y));
  }
  return ad::conv1d(h, tape.param(head_w_), tape.param(head_b_), 3, 1);
}

void KernelPredictor::zero_output_head() {
  head_w_.value.setZero();
  head_b_.value.setZero();
}

void KernelPredictor::params(const std::string& prefix,
                             std::vector<ad::NamedParam>& out) const {
  out.push_back({prefix + ".in.w", &in_w_});
  out.push_back({prefix + ".in.b", &in_b_});
  for (std::size_t r = 0; r < res_w1_.size(); ++r) {
    const std::string tag = prefix + ".res" + std::to_string(r);
    out.push_back({tag + ".w1", &res_w1_[r]});
    out.push_back({tag + ".b1", &res_b1_[r]});
    out.push_back({tag + ".w2", &res_w2_[r]});
    out.push_back({tag + ".b2", &res_b2_[r]});
  }
  out.push_back({prefix + ".head.w", &head_w_});
  out.push_back({prefix + ".head.b", &head_b_});
}

}  // namespace lvcvc::lvc
