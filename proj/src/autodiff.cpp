#include "lvcvc/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace lvcvc::ad {

namespace {

using StridedMap = Eigen::Map<Mat, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
using ConstStridedMap =
    Eigen::Map<const Mat, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

void check_same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument("autodiff ops require vars from one tape");
}

void check_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

// Rows {offset, offset+stride, ...} of a col-major matrix as a view.
StridedMap strided_rows(Mat& m, int offset, int stride, int count) {
  return StridedMap(m.data() + offset, count, m.cols(),
                    Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(m.rows(), stride));
}

ConstStridedMap strided_rows(const Mat& m, int offset, int stride, int count) {
  return ConstStridedMap(m.data() + offset, count, m.cols(),
                         Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(m.rows(), stride));
}

// Columns {offset, offset+stride, ...} of a col-major matrix as a view.
StridedMap strided_cols(Mat& m, int offset, int stride, int count) {
  return StridedMap(m.data() + offset * m.rows(), m.rows(), count,
                    Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(stride * m.rows(), 1));
}

ConstStridedMap strided_cols(const Mat& m, int offset, int stride, int count) {
  return ConstStridedMap(m.data() + offset * m.rows(), m.rows(), count,
                         Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(stride * m.rows(), 1));
}

}  // namespace

const Mat& Var::value() const {
  if (!valid()) throw std::invalid_argument("use of invalid Var");
  return tape->val(id);
}

Var Tape::constant(Mat v) { return input(std::move(v), false); }

Var Tape::input(Mat v, bool needs_grad) {
  const int id = emit(std::move(v), needs_grad, nullptr);
  return Var{this, id};
}

Var Tape::param(const Parameter& p) {
  if (frozen_) {
    auto fit = frozen_nodes_.find(&p);
    if (fit != frozen_nodes_.end()) return Var{this, fit->second};
    const int id = emit(p.value, false, nullptr);
    frozen_nodes_[&p] = id;
    return Var{this, id};
  }
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{this, it->second};
  const int id = emit(p.value, true, nullptr);
  param_nodes_[&p] = id;
  return Var{this, id};
}

int Tape::emit(Mat value, bool needs_grad, std::function<void(Tape&)> backfn) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backfn = std::move(backfn);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::set_backfn(int id, std::function<void(Tape&)> backfn) {
  if (nodes_[id].needs_grad) nodes_[id].backfn = std::move(backfn);
}

Mat& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

const Mat& Tape::grad_at(int id) const { return nodes_[id].grad; }

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: var from another tape");
  if (swept_) throw std::logic_error("backward: tape already swept");
  swept_ = true;
  const Mat& lv = val(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("backward: loss must be 1x1");
  grad_ref(loss.id)(0, 0) = 1.0f;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backfn) continue;
    n.backfn(*this);
  }
  for (const auto& [p, id] : param_nodes_) {
    if (nodes_[id].grad.size() > 0) p->grad += nodes_[id].grad;
  }
}

Mat Tape::input_grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---------- op helpers ----------

namespace {

// Creates a node and, when gradients are required, wires a backfn that
// receives (tape, self grad) plus the parent ids it captured.
Var make_node(Tape& t, Mat value, bool needs_grad,
              const std::function<std::function<void(Tape&)>(int self)>& make_backfn) {
  const int self = t.emit(std::move(value), needs_grad, nullptr);
  if (needs_grad) t.set_backfn(self, make_backfn(self));
  return Var{&t, self};
}

}  // namespace

// ---------- elementwise ----------

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "add");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  return make_node(t, a.value() + b.value(), ng, [ia, ib](int self) {
    return [self, ia, ib](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      if (tp.needs_grad(ia)) tp.grad_ref(ia) += g;
      if (tp.needs_grad(ib)) tp.grad_ref(ib) += g;
    };
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  return make_node(t, a.value() - b.value(), ng, [ia, ib](int self) {
    return [self, ia, ib](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      if (tp.needs_grad(ia)) tp.grad_ref(ia) += g;
      if (tp.needs_grad(ib)) tp.grad_ref(ib) -= g;
    };
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  return make_node(t, a.value().cwiseProduct(b.value()), ng, [ia, ib](int self) {
    return [self, ia, ib](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      if (tp.needs_grad(ia)) tp.grad_ref(ia) += g.cwiseProduct(tp.val(ib));
      if (tp.needs_grad(ib)) tp.grad_ref(ib) += g.cwiseProduct(tp.val(ia));
    };
  });
}

Var add_scalar(Var a, float c) {
  Tape& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  return make_node(t, (a.value().array() + c).matrix(), ng, [ia](int self) {
    return [self, ia](Tape& tp) { tp.grad_ref(ia) += tp.grad_at(self); };
  });
}

Var scale(Var a, float c) {
  Tape& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  return make_node(t, a.value() * c, ng, [ia, c](int self) {
    return [self, ia, c](Tape& tp) { tp.grad_ref(ia) += c * tp.grad_at(self); };
  });
}

Var scale_by(Var a, Var s) {
  check_same_tape(a, s);
  if (s.rows() != 1 || s.cols() != 1)
    throw std::invalid_argument("scale_by: scalar var must be 1x1");
  Tape& t = *a.tape;
  const int ia = a.id, is = s.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(is);
  return make_node(t, a.value() * s.scalar(), ng, [ia, is](int self) {
    return [self, ia, is](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      if (tp.needs_grad(ia)) tp.grad_ref(ia) += g * tp.val(is)(0, 0);
      if (tp.needs_grad(is))
        tp.grad_ref(is)(0, 0) += g.cwiseProduct(tp.val(ia)).sum();
    };
  });
}

namespace {

template <typename FwdArr, typename BwdArr>
Var pointwise(Var a, FwdArr fwd, BwdArr bwd_from_inout) {
  Tape& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  Mat value = fwd(a.value().array()).matrix();
  return make_node(t, std::move(value), ng, [ia, bwd_from_inout](int self) {
    return [self, ia, bwd_from_inout](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      tp.grad_ref(ia).array() +=
          g.array() * bwd_from_inout(tp.val(ia).array(), tp.val(self).array());
    };
  });
}

}  // namespace

Var tanh_v(Var a) {
  return pointwise(
      a, [](const auto& x) { return x.tanh(); },
      [](const auto&, const auto& y) { return 1.0f - y.square(); });
}

Var sigmoid_v(Var a) {
  return pointwise(
      a, [](const auto& x) { return 1.0f / (1.0f + (-x).exp()); },
      [](const auto&, const auto& y) { return y * (1.0f - y); });
}

Var leaky_relu(Var a, float slope) {
  return pointwise(
      a, [slope](const auto& x) { return (x > 0.0f).select(x, slope * x); },
      [slope](const auto& x, const auto&) {
        return (x > 0.0f).select(Eigen::ArrayXXf::Ones(x.rows(), x.cols()),
                                 Eigen::ArrayXXf::Constant(x.rows(), x.cols(), slope));
      });
}

Var exp_v(Var a) {
  return pointwise(
      a, [](const auto& x) { return x.exp(); },
      [](const auto&, const auto& y) { return y; });
}

Var log_v(Var a) {
  return pointwise(
      a, [](const auto& x) { return x.log(); },
      [](const auto& x, const auto&) { return x.inverse(); });
}

Var sqrt_v(Var a) {
  return pointwise(
      a, [](const auto& x) { return x.sqrt(); },
      [](const auto&, const auto& y) { return 0.5f * (y.max(1e-12f)).inverse(); });
}

Var square_v(Var a) {
  return pointwise(
      a, [](const auto& x) { return x.square(); },
      [](const auto& x, const auto&) { return 2.0f * x; });
}

Var abs_v(Var a) {
  return pointwise(
      a, [](const auto& x) { return x.abs(); },
      [](const auto& x, const auto&) { return x.sign(); });
}

Var reciprocal_v(Var a) {
  return pointwise(
      a, [](const auto& x) { return x.inverse(); },
      [](const auto&, const auto& y) { return -y.square(); });
}

Var clamp_min(Var a, float lo) {
  return pointwise(
      a, [lo](const auto& x) { return x.max(lo); },
      [lo](const auto& x, const auto&) {
        return (x > lo).select(Eigen::ArrayXXf::Ones(x.rows(), x.cols()),
                               Eigen::ArrayXXf::Zero(x.rows(), x.cols()));
      });
}

// ---------- shape / reduction ----------

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id;
  const bool ng = t.needs_grad(ia) || t.needs_grad(ib);
  return make_node(t, a.value() * b.value(), ng, [ia, ib](int self) {
    return [self, ia, ib](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      if (tp.needs_grad(ia)) tp.grad_ref(ia).noalias() += g * tp.val(ib).transpose();
      if (tp.needs_grad(ib)) tp.grad_ref(ib).noalias() += tp.val(ia).transpose() * g;
    };
  });
}

Var transpose_v(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  return make_node(t, a.value().transpose(), ng, [ia](int self) {
    return [self, ia](Tape& tp) {
      tp.grad_ref(ia) += tp.grad_at(self).transpose();
    };
  });
}

Var reshape(Var a, int rows, int cols) {
  if (static_cast<Eigen::Index>(rows) * cols != a.value().size())
    throw std::invalid_argument("reshape: element count mismatch");
  Tape& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  Mat v = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return make_node(t, std::move(v), ng, [ia, rows, cols](int self) {
    return [self, ia, rows, cols](Tape& tp) {
      Mat& ga = tp.grad_ref(ia);
      ga += Eigen::Map<const Mat>(tp.grad_at(self).data(), ga.rows(), ga.cols());
      (void)rows;
      (void)cols;
    };
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  Mat v(1, 1);
  v(0, 0) = static_cast<float>(a.value().cast<double>().sum());
  return make_node(t, std::move(v), ng, [ia](int self) {
    return [self, ia](Tape& tp) {
      tp.grad_ref(ia).array() += tp.grad_at(self)(0, 0);
    };
  });
}

Var mean(Var a) {
  const float n = static_cast<float>(a.value().size());
  return scale(sum(a), 1.0f / n);
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
  Tape& t = *parts[0].tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  bool ng = false;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
    ng = ng || t.needs_grad(p.id);
  }
  Mat v(rows, cols);
  std::vector<int> ids;
  std::vector<int> offsets;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(static_cast<int>(r));
    r += p.rows();
  }
  return make_node(t, std::move(v), ng, [ids, offsets](int self) {
    return [self, ids, offsets](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!tp.needs_grad(ids[i])) continue;
        Mat& gi = tp.grad_ref(ids[i]);
        gi += g.middleRows(offsets[i], gi.rows());
      }
    };
  });
}

Var slice_rows(Var a, int row0, int n) {
  if (row0 < 0 || n < 0 || row0 + n > a.rows())
    throw std::invalid_argument("slice_rows: range out of bounds");
  Tape& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  return make_node(t, a.value().middleRows(row0, n), ng, [ia, row0, n](int self) {
    return [self, ia, row0, n](Tape& tp) {
      tp.grad_ref(ia).middleRows(row0, n) += tp.grad_at(self);
    };
  });
}

Var bias_add(Var x, Var b) {
  check_same_tape(x, b);
  if (b.cols() != 1 || b.rows() != x.rows())
    throw std::invalid_argument("bias_add: bias must be rows x 1");
  Tape& t = *x.tape;
  const int ix = x.id, ib = b.id;
  const bool ng = t.needs_grad(ix) || t.needs_grad(ib);
  Mat v = x.value();
  v.colwise() += Eigen::VectorXf(b.value().col(0));
  return make_node(t, std::move(v), ng, [ix, ib](int self) {
    return [self, ix, ib](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      if (tp.needs_grad(ix)) tp.grad_ref(ix) += g;
      if (tp.needs_grad(ib)) tp.grad_ref(ib).col(0) += g.rowwise().sum();
    };
  });
}

Var colwise_mul_const(Var x, const Eigen::VectorXf& w) {
  if (w.size() != x.rows())
    throw std::invalid_argument("colwise_mul_const: weight length mismatch");
  Tape& t = *x.tape;
  const int ix = x.id;
  const bool ng = t.needs_grad(ix);
  Mat v = x.value();
  v.array().colwise() *= w.array();
  return make_node(t, std::move(v), ng, [ix, w](int self) {
    return [self, ix, w](Tape& tp) {
      Mat g = tp.grad_at(self);
      g.array().colwise() *= w.array();
      tp.grad_ref(ix) += g;
    };
  });
}

Var softmax_row(Var a) {
  if (a.rows() != 1) throw std::invalid_argument("softmax_row: expected 1 x N");
  Tape& t = *a.tape;
  const int ia = a.id;
  const bool ng = t.needs_grad(ia);
  Eigen::ArrayXXf x = a.value().array();
  const float m = x.maxCoeff();
  Eigen::ArrayXXf e = (x - m).exp();
  Mat y = (e / e.sum()).matrix();
  return make_node(t, std::move(y), ng, [ia](int self) {
    return [self, ia](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      const Mat& y = tp.val(self);
      const float dot = g.cwiseProduct(y).sum();
      tp.grad_ref(ia).array() += y.array() * (g.array() - dot);
    };
  });
}

Var cross_entropy_logits(Var logits, int target) {
  if (logits.cols() != 1) throw std::invalid_argument("cross_entropy_logits: expected C x 1");
  if (target < 0 || target >= logits.rows())
    throw std::invalid_argument("cross_entropy_logits: target out of range");
  Tape& t = *logits.tape;
  const int il = logits.id;
  const bool ng = t.needs_grad(il);
  const Eigen::ArrayXf x = logits.value().col(0).array();
  const float m = x.maxCoeff();
  const float lse = m + std::log((x - m).exp().sum());
  Mat v(1, 1);
  v(0, 0) = lse - x[target];
  return make_node(t, std::move(v), ng, [il, target](int self) {
    return [self, il, target](Tape& tp) {
      const float g = tp.grad_at(self)(0, 0);
      const Eigen::ArrayXf x = tp.val(il).col(0).array();
      const float m = x.maxCoeff();
      Eigen::ArrayXf p = (x - m).exp();
      p /= p.sum();
      p[target] -= 1.0f;
      tp.grad_ref(il).col(0).array() += g * p;
    };
  });
}

Var gather(Var x, std::shared_ptr<const Eigen::MatrixXi> index, int rows, int cols) {
  if (!index || index->rows() != rows || index->cols() != cols)
    throw std::invalid_argument("gather: index shape mismatch");
  Tape& t = *x.tape;
  const int ix = x.id;
  const bool ng = t.needs_grad(ix);
  const Mat& xv = x.value();
  const float* flat = xv.data();
  const Eigen::Index n = xv.size();
  Mat v(rows, cols);
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < rows; ++i) {
      const int idx = (*index)(i, j);
      if (idx < 0) {
        v(i, j) = 0.0f;
      } else {
        if (idx >= n) throw std::invalid_argument("gather: index out of range");
        v(i, j) = flat[idx];
      }
    }
  }
  return make_node(t, std::move(v), ng, [ix, index, rows, cols](int self) {
    return [self, ix, index, rows, cols](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      Mat& gx = tp.grad_ref(ix);
      float* gflat = gx.data();
      for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) {
          const int idx = (*index)(i, j);
          if (idx >= 0) gflat[idx] += g(i, j);
        }
    };
  });
}

// ---------- convolution ----------

Mat im2col1d(const Mat& x, int k, int dilation) {
  const int C = static_cast<int>(x.rows());
  const int T = static_cast<int>(x.cols());
  const int half = (k - 1) / 2;
  Mat patches = Mat::Zero(static_cast<Eigen::Index>(C) * k, T);
  for (int j = 0; j < k; ++j) {
    const int off = (j - half) * dilation;
    const int p0 = std::max(0, -off);
    const int p1 = std::min(T, T - off);
    if (p1 <= p0) continue;
    strided_rows(patches, j, k, C).middleCols(p0, p1 - p0) = x.middleCols(p0 + off, p1 - p0);
  }
  return patches;
}

void col2im1d_accum(const Mat& gpatches, int k, int dilation, Mat& gx) {
  const int C = static_cast<int>(gx.rows());
  const int T = static_cast<int>(gx.cols());
  const int half = (k - 1) / 2;
  for (int j = 0; j < k; ++j) {
    const int off = (j - half) * dilation;
    const int p0 = std::max(0, -off);
    const int p1 = std::min(T, T - off);
    if (p1 <= p0) continue;
    gx.middleCols(p0 + off, p1 - p0) += strided_rows(gpatches, j, k, C).middleCols(p0, p1 - p0);
  }
}

Var conv1d(Var x, Var w, Var b, int k, int dilation) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("conv1d: kernel size must be odd");
  const int C_in = static_cast<int>(x.rows());
  if (w.cols() != static_cast<Eigen::Index>(C_in) * k)
    throw std::invalid_argument("conv1d: weight shape mismatch");
  const int C_out = static_cast<int>(w.rows());
  if (b.rows() != C_out || b.cols() != 1)
    throw std::invalid_argument("conv1d: bias shape mismatch");

  Tape& t = *x.tape;
  const int ix = x.id, iw = w.id, ib = b.id;
  const bool ng = t.needs_grad(ix) || t.needs_grad(iw) || t.needs_grad(ib);

  auto patches = std::make_shared<Mat>(im2col1d(x.value(), k, dilation));
  Mat v = w.value() * (*patches);
  v.colwise() += Eigen::VectorXf(b.value().col(0));
  return make_node(t, std::move(v), ng, [ix, iw, ib, k, dilation, patches](int self) {
    return [self, ix, iw, ib, k, dilation, patches](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      if (tp.needs_grad(iw)) tp.grad_ref(iw).noalias() += g * patches->transpose();
      if (tp.needs_grad(ib)) tp.grad_ref(ib).col(0) += g.rowwise().sum();
      if (tp.needs_grad(ix)) {
        Mat gpatches = tp.val(iw).transpose() * g;
        col2im1d_accum(gpatches, k, dilation, tp.grad_ref(ix));
      }
    };
  });
}

Var conv_transpose1d(Var x, Var w, Var b, int stride) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  if (stride < 2 || stride % 2 != 0)
    throw std::invalid_argument("conv_transpose1d: stride must be even and >= 2");
  const int kernel = 2 * stride;
  const int trim = stride / 2;
  const int C_in = static_cast<int>(x.rows());
  const int T = static_cast<int>(x.cols());
  if (w.cols() != static_cast<Eigen::Index>(kernel) * C_in)
    throw std::invalid_argument("conv_transpose1d: weight shape mismatch");
  const int C_out = static_cast<int>(w.rows());
  if (b.rows() != C_out || b.cols() != 1)
    throw std::invalid_argument("conv_transpose1d: bias shape mismatch");

  Tape& t = *x.tape;
  const int ix = x.id, iw = w.id, ib = b.id;
  const bool ng = t.needs_grad(ix) || t.needs_grad(iw) || t.needs_grad(ib);

  Mat full = Mat::Zero(C_out, static_cast<Eigen::Index>(T + 1) * stride);
  for (int j = 0; j < kernel; ++j) {
    strided_cols(full, j, stride, T).noalias() +=
        w.value().middleCols(static_cast<Eigen::Index>(j) * C_in, C_in) * x.value();
  }
  Mat v = full.middleCols(trim, static_cast<Eigen::Index>(T) * stride);
  v.colwise() += Eigen::VectorXf(b.value().col(0));

  return make_node(t, std::move(v), ng, [ix, iw, ib, stride, kernel, trim, T, C_in](int self) {
    return [self, ix, iw, ib, stride, kernel, trim, T, C_in](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      const int C_out = static_cast<int>(g.rows());
      Mat gfull = Mat::Zero(C_out, static_cast<Eigen::Index>(T + 1) * stride);
      gfull.middleCols(trim, static_cast<Eigen::Index>(T) * stride) = g;
      if (tp.needs_grad(ib)) tp.grad_ref(ib).col(0) += g.rowwise().sum();
      const Mat& gfull_c = gfull;
      for (int j = 0; j < kernel; ++j) {
        const Mat gj = strided_cols(gfull_c, j, stride, T);
        if (tp.needs_grad(iw))
          tp.grad_ref(iw).middleCols(static_cast<Eigen::Index>(j) * C_in, C_in).noalias() +=
              gj * tp.val(ix).transpose();
        if (tp.needs_grad(ix))
          tp.grad_ref(ix).noalias() +=
              tp.val(iw).middleCols(static_cast<Eigen::Index>(j) * C_in, C_in).transpose() * gj;
      }
    };
  });
}

namespace {

Mat im2col2d(const Mat& x, const Conv2dSpec& s) {
  const int C = s.in_channels;
  const int Ho = s.out_height(), Wo = s.out_width();
  Mat patches = Mat::Zero(static_cast<Eigen::Index>(C) * s.kh * s.kw,
                          static_cast<Eigen::Index>(Ho) * Wo);
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < s.kh; ++i) {
      for (int j = 0; j < s.kw; ++j) {
        const Eigen::Index prow = (static_cast<Eigen::Index>(c) * s.kh + i) * s.kw + j;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * s.sh - s.ph + i;
          if (ih < 0 || ih >= s.height) continue;
          for (int ow = 0; ow < Wo; ++ow) {
            const int iw_ = ow * s.sw - s.pw + j;
            if (iw_ < 0 || iw_ >= s.width) continue;
            patches(prow, static_cast<Eigen::Index>(oh) * Wo + ow) =
                x(c, static_cast<Eigen::Index>(ih) * s.width + iw_);
          }
        }
      }
    }
  }
  return patches;
}

void col2im2d_accum(const Mat& gpatches, const Conv2dSpec& s, Mat& gx) {
  const int C = s.in_channels;
  const int Ho = s.out_height(), Wo = s.out_width();
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < s.kh; ++i) {
      for (int j = 0; j < s.kw; ++j) {
        const Eigen::Index prow = (static_cast<Eigen::Index>(c) * s.kh + i) * s.kw + j;
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih = oh * s.sh - s.ph + i;
          if (ih < 0 || ih >= s.height) continue;
          for (int ow = 0; ow < Wo; ++ow) {
            const int iw_ = ow * s.sw - s.pw + j;
            if (iw_ < 0 || iw_ >= s.width) continue;
            gx(c, static_cast<Eigen::Index>(ih) * s.width + iw_) +=
                gpatches(prow, static_cast<Eigen::Index>(oh) * Wo + ow);
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, const Conv2dSpec& spec) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  if (x.rows() != spec.in_channels ||
      x.cols() != static_cast<Eigen::Index>(spec.height) * spec.width)
    throw std::invalid_argument("conv2d: input shape mismatch");
  if (w.cols() != static_cast<Eigen::Index>(spec.in_channels) * spec.kh * spec.kw)
    throw std::invalid_argument("conv2d: weight shape mismatch");
  const int C_out = static_cast<int>(w.rows());
  if (b.rows() != C_out || b.cols() != 1)
    throw std::invalid_argument("conv2d: bias shape mismatch");
  if (spec.out_height() < 1 || spec.out_width() < 1)
    throw std::invalid_argument("conv2d: output would be empty");

  Tape& t = *x.tape;
  const int ix = x.id, iw = w.id, ib = b.id;
  const bool ng = t.needs_grad(ix) || t.needs_grad(iw) || t.needs_grad(ib);

  auto patches = std::make_shared<Mat>(im2col2d(x.value(), spec));
  Mat v = w.value() * (*patches);
  v.colwise() += Eigen::VectorXf(b.value().col(0));
  return make_node(t, std::move(v), ng, [ix, iw, ib, spec, patches](int self) {
    return [self, ix, iw, ib, spec, patches](Tape& tp) {
      const Mat& g = tp.grad_at(self);
      if (tp.needs_grad(iw)) tp.grad_ref(iw).noalias() += g * patches->transpose();
      if (tp.needs_grad(ib)) tp.grad_ref(ib).col(0) += g.rowwise().sum();
      if (tp.needs_grad(ix)) {
        Mat gpatches = tp.val(iw).transpose() * g;
        col2im2d_accum(gpatches, spec, tp.grad_ref(ix));
      }
    };
  });
}

Var lvc_apply(Var x, Var kernels, Var bias, int k, int dilation) {
  check_same_tape(x, kernels);
  check_same_tape(x, bias);
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("lvc_apply: kernel size must be odd");
  const int C_in = static_cast<int>(x.rows());
  const int T = static_cast<int>(x.cols());
  const int T_h = static_cast<int>(kernels.cols());
  if (T_h < 1 || T % T_h != 0)
    throw std::invalid_argument("lvc_apply: signal length " + std::to_string(T) +
                                " not divisible by frame count " + std::to_string(T_h));
  if (kernels.rows() % (static_cast<Eigen::Index>(C_in) * k) != 0)
    throw std::invalid_argument("lvc_apply: kernel rows not a multiple of C_in*k");
  const int C_out = static_cast<int>(kernels.rows() / (static_cast<Eigen::Index>(C_in) * k));
  if (bias.rows() != C_out || bias.cols() != T_h)
    throw std::invalid_argument("lvc_apply: bias must be C_out x frames");
  const int interval = T / T_h;

  Tape& t = *x.tape;
  const int ix = x.id, ik = kernels.id, ib = bias.id;
  const bool ng = t.needs_grad(ix) || t.needs_grad(ik) || t.needs_grad(ib);

  auto patches = std::make_shared<Mat>(im2col1d(x.value(), k, dilation));
  Mat v(C_out, T);
  for (int f = 0; f < T_h; ++f) {
    Eigen::Map<const Mat> wf(kernels.value().col(f).data(), C_out,
                             static_cast<Eigen::Index>(C_in) * k);
    v.middleCols(static_cast<Eigen::Index>(f) * interval, interval).noalias() =
        wf * patches->middleCols(static_cast<Eigen::Index>(f) * interval, interval);
    v.middleCols(static_cast<Eigen::Index>(f) * interval, interval).colwise() +=
        Eigen::VectorXf(bias.value().col(f));
  }

  return make_node(
      t, std::move(v), ng, [ix, ik, ib, k, dilation, C_in, C_out, T_h, interval, patches](int self) {
        return [self, ix, ik, ib, k, dilation, C_in, C_out, T_h, interval, patches](Tape& tp) {
          const Mat& g = tp.grad_at(self);
          const bool want_x = tp.needs_grad(ix);
          Mat gpatches;
          if (want_x) gpatches.setZero(patches->rows(), patches->cols());
          for (int f = 0; f < T_h; ++f) {
            const auto gblock = g.middleCols(static_cast<Eigen::Index>(f) * interval, interval);
            if (tp.needs_grad(ik)) {
              Eigen::Map<Mat> gw(tp.grad_ref(ik).col(f).data(), C_out,
                                 static_cast<Eigen::Index>(C_in) * k);
              gw.noalias() +=
                  gblock * patches->middleCols(static_cast<Eigen::Index>(f) * interval, interval)
                               .transpose();
            }
            if (tp.needs_grad(ib)) tp.grad_ref(ib).col(f) += gblock.rowwise().sum();
            if (want_x) {
              Eigen::Map<const Mat> wf(tp.val(ik).col(f).data(), C_out,
                                       static_cast<Eigen::Index>(C_in) * k);
              gpatches.middleCols(static_cast<Eigen::Index>(f) * interval, interval).noalias() =
                  wf.transpose() * gblock;
            }
          }
          if (want_x) col2im1d_accum(gpatches, k, dilation, tp.grad_ref(ix));
        };
      });
}

Var cosine_similarity(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "cosine_similarity");
  if (a.cols() != 1) throw std::invalid_argument("cosine_similarity: expected column vectors");
  const float na = a.value().norm(), nb = b.value().norm();
  if (na == 0.0f || nb == 0.0f)
    throw std::invalid_argument("cosine_similarity: zero-norm input");
  Var dot = sum(mul(a, b));
  Var norm_a = sqrt_v(sum(square_v(a)));
  Var norm_b = sqrt_v(sum(square_v(b)));
  return mul(dot, reciprocal_v(mul(norm_a, norm_b)));
}

Var l2_normalize(Var a) {
  if (a.cols() != 1) throw std::invalid_argument("l2_normalize: expected a column vector");
  Var norm = sqrt_v(add_scalar(sum(square_v(a)), 1e-12f));
  return scale_by(a, reciprocal_v(norm));
}

}  // namespace lvcvc::ad
