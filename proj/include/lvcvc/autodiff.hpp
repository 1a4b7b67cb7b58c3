#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace lvcvc::ad {

using Mat = Eigen::MatrixXf;

/// Trainable tensor. `grad` is accumulated by Tape::backward and consumed by
/// the optimizer; it is mutable so models can expose const forward passes.
struct Parameter {
  std::string name;
  Mat value;
  mutable Mat grad;

  Parameter() = default;
  Parameter(std::string n, Mat v)
      : name(std::move(n)), value(std::move(v)),
        grad(Mat::Zero(value.rows(), value.cols())) {}

  void zero_grad() const { grad.setZero(); }
};

struct NamedParam {
  std::string name;
  const Parameter* param;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  float scalar() const { return value()(0, 0); }
};

/// Define-by-run reverse-mode tape over float32 Eigen matrices. A tape is
/// built per forward pass and discarded after one backward sweep.
class Tape {
 public:
  // Leaf that never receives a gradient (data, targets, constants).
  Var constant(Mat v);
  // Leaf that can receive a gradient (used by gradient checks).
  Var input(Mat v, bool needs_grad);
  // Leaf bound to a parameter; repeated binds of the same parameter return
  // the same node so gradients from multiple uses accumulate. While the tape
  // is frozen, parameters bind as constants: gradients still flow through
  // the ops that use them but never reach the parameters themselves.
  Var param(const Parameter& p);
  void set_frozen(bool frozen) { frozen_ = frozen; }

  // Seeds d(loss)/d(loss) = 1, sweeps the tape once in reverse, then flushes
  // leaf gradients into their bound Parameters. `loss` must be 1x1.
  void backward(Var loss);

  // Gradient of a non-parameter input after backward (zero matrix if the
  // node was never reached).
  Mat input_grad(Var v) const;

  // --- op-author surface ---
  int emit(Mat value, bool needs_grad, std::function<void(Tape&)> backfn);
  void set_backfn(int id, std::function<void(Tape&)> backfn);
  const Mat& val(int id) const { return nodes_[id].value; }
  Mat& grad_ref(int id);             // lazily zero-allocated
  const Mat& grad_at(int id) const;  // empty until touched
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&)> backfn;
  };
  std::vector<Node> nodes_;
  std::map<const Parameter*, int> param_nodes_;
  std::map<const Parameter*, int> frozen_nodes_;
  bool frozen_ = false;
  bool swept_ = false;
};

/// Scoped freeze of parameter binding on a tape.
struct FreezeGuard {
  Tape& tape;
  explicit FreezeGuard(Tape& t) : tape(t) { tape.set_frozen(true); }
  ~FreezeGuard() { tape.set_frozen(false); }
};

// Elementwise / scalar ops.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_scalar(Var a, float c);
Var scale(Var a, float c);
Var scale_by(Var a, Var s);  // s is 1x1, broadcast multiply
Var tanh_v(Var a);
Var sigmoid_v(Var a);
Var leaky_relu(Var a, float slope = 0.2f);
Var exp_v(Var a);
Var log_v(Var a);
Var sqrt_v(Var a);
Var square_v(Var a);
Var abs_v(Var a);
Var reciprocal_v(Var a);
Var clamp_min(Var a, float lo);

// Shape / reduction ops.
Var matmul(Var a, Var b);
Var transpose_v(Var a);
Var reshape(Var a, int rows, int cols);  // col-major reinterpretation
Var sum(Var a);
Var mean(Var a);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, int row0, int n);
Var bias_add(Var x, Var b);                         // b: rows x 1
Var colwise_mul_const(Var x, const Eigen::VectorXf& w);
Var softmax_row(Var a);                             // a: 1 x N
Var cross_entropy_logits(Var logits, int target);   // logits: C x 1

// value(i,j) = index(i,j) >= 0 ? flat(x)[index(i,j)] : 0, col-major flat.
Var gather(Var x, std::shared_ptr<const Eigen::MatrixXi> index, int rows, int cols);

// 'same'-padded stride-1 dilated conv over channels x time.
// w: (C_out x C_in*k) with patch row c*k + j; b: C_out x 1.
Var conv1d(Var x, Var w, Var b, int k, int dilation = 1);

// Stride-r transposed conv, kernel 2r, symmetric trim of r/2 per side so the
// output is exactly r times longer. w: (C_out x 2r*C_in), tap-major blocks.
Var conv_transpose1d(Var x, Var w, Var b, int stride);

struct Conv2dSpec {
  int in_channels = 1, height = 0, width = 0;
  int kh = 3, kw = 3, sh = 1, sw = 1, ph = 0, pw = 0;

  int out_height() const { return (height + 2 * ph - kh) / sh + 1; }
  int out_width() const { return (width + 2 * pw - kw) / sw + 1; }
};

// x: (C_in x H*W) with pixel (h, w) at column h*W + w.
// w: (C_out x C_in*kh*kw) with patch row (c*kh + i)*kw + j; b: C_out x 1.
Var conv2d(Var x, Var w, Var b, const Conv2dSpec& spec);

// Location-variable convolution: x (C_in x T) under per-frame kernels.
// kernels: (C_out*C_in*k) x T_h, column t holding W_t column-major as
// (C_out x C_in*k); bias: C_out x T_h. T must be divisible by T_h; each
// frame's kernel convolves its own interval, reading true neighbor samples
// across interval boundaries and zero padding at the sequence edges.
Var lvc_apply(Var x, Var kernels, Var bias, int k, int dilation);

// Cosine similarity of two column vectors (1x1 result). Throws
// std::invalid_argument on zero-norm inputs.
Var cosine_similarity(Var a, Var b);

// L2 normalization of a column vector.
Var l2_normalize(Var a);

// -- plain (tape-free) helpers shared with oracles and inference --
Mat im2col1d(const Mat& x, int k, int dilation);
void col2im1d_accum(const Mat& gpatches, int k, int dilation, Mat& gx);

}  // namespace lvcvc::ad
