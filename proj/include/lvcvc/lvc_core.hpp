#pragma once

#include <array>
#include <string>
#include <vector>

#include "lvcvc/autodiff.hpp"
#include "lvcvc/rng.hpp"

namespace lvcvc::lvc {

/// Geometry of one transposed-convolution stack's LVC layers.
struct LvcStackConfig {
  int channels = 16;
  int kernel_size = 3;
  std::vector<int> dilations = {1, 3, 9, 27};

  int layers() const { return static_cast<int>(dilations.size()); }
};

/// Row layout of a packed kernel set. Column t of the kernel matrix holds,
/// for each layer in dilation order, the filter weights, filter bias, gate
/// weights, and gate bias predicted for conditioning frame t. Weight blocks
/// are flattened column-major as (channels x channels*kernel_size), matching
/// the im2col patch ordering c*k + j.
struct KernelSetLayout {
  int channels = 16;
  int kernel_size = 3;
  int layers = 4;

  int weight_block() const { return channels * channels * kernel_size; }
  int bias_block() const { return channels; }
  int per_layer() const { return 2 * (weight_block() + bias_block()); }
  int rows() const { return layers * per_layer(); }

  int filter_weight_offset(int layer) const { return layer * per_layer(); }
  int filter_bias_offset(int layer) const {
    return filter_weight_offset(layer) + weight_block();
  }
  int gate_weight_offset(int layer) const {
    return filter_bias_offset(layer) + bias_block();
  }
  int gate_bias_offset(int layer) const {
    return gate_weight_offset(layer) + weight_block();
  }
};

// Plain (tape-free) location-variable convolution. x is C_in x T, kernels is
// (C_out*C_in*k) x T_h with T divisible by T_h, bias is C_out x T_h. Each
// conditioning frame's kernel convolves its own interval of x; taps read
// true neighboring samples across interval boundaries and zero at the
// sequence edges.
ad::Mat lvc_apply(const ad::Mat& x, const ad::Mat& kernels, const ad::Mat& bias,
                  int kernel_size, int dilation);

// Reference semantics: an explicit loop over (interval, position, channel,
// tap). Ground truth for boundary handling; intentionally slow.
ad::Mat lvc_apply_oracle(const ad::Mat& x, const ad::Mat& kernels, const ad::Mat& bias,
                         int kernel_size, int dilation);

// Gated residual block: for each layer l in dilation order,
//   y = tanh(lvc(x, W_f)) * sigmoid(lvc(x, W_g));  x = x + y.
ad::Var lvc_block(ad::Var x, ad::Var kernel_set, const LvcStackConfig& config);

/// Maps a conditioning sequence to the packed kernel set for every LVC layer
/// of one stack: an input conv, a few residual conv blocks, and a linear
/// conv head whose output is the kernel matrix.
class KernelPredictor {
 public:
  struct Config {
    int cond_channels = 657;
    int hidden = 64;
    int residual_blocks = 2;
    LvcStackConfig stack;
  };

  KernelPredictor() = default;
  KernelPredictor(const Config& config, Rng& rng);

  // cond: cond_channels x frames (frames >= 1) -> layout().rows() x frames.
  ad::Var forward(ad::Tape& tape, ad::Var cond) const;

  KernelSetLayout layout() const;
  const Config& config() const { return config_; }

  // Initialization contract: a zeroed head emits all-zero kernels and biases.
  void zero_output_head();

  void params(const std::string& prefix, std::vector<ad::NamedParam>& out) const;

 private:
  Config config_;
  ad::Parameter in_w_, in_b_;
  std::vector<ad::Parameter> res_w1_, res_b1_, res_w2_, res_b2_;
  ad::Parameter head_w_, head_b_;
};

}  // namespace lvcvc::lvc
