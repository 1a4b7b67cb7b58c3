#include <doctest.h>

#include <cmath>

#include "lvcvc/autodiff.hpp"
#include "lvcvc/rng.hpp"
#include "support/gradcheck.hpp"

using namespace lvcvc;
using ad::Mat;
using ad::Tape;
using ad::Var;
using testsupport::check_gradients;

namespace {

Mat randn(int r, int c, Rng& rng, float scale = 1.0f) {
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = scale * static_cast<float>(rng.normal());
  return m;
}

}  // namespace

TEST_CASE("matmul value and gradients") {
  Rng rng(1);
  Mat a = randn(3, 4, rng), b = randn(4, 2, rng);
  {
    Tape t;
    Var v = ad::matmul(t.input(a, false), t.input(b, false));
    CHECK((v.value() - a * b).cwiseAbs().maxCoeff() <= 1e-6f);
  }
  auto rep = check_gradients(
      {a, b}, [](Tape& t, const std::vector<Var>& in) {
        (void)t;
        return ad::mean(ad::square_v(ad::matmul(in[0], in[1])));
      },
      20, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("pointwise chain gradients") {
  Rng rng(2);
  Mat x = randn(4, 5, rng, 0.5f);
  auto rep = check_gradients(
      {x}, [](Tape&, const std::vector<Var>& in) {
        Var a = ad::tanh_v(in[0]);
        Var b = ad::sigmoid_v(ad::scale(in[0], 0.7f));
        Var c = ad::leaky_relu(ad::add(a, b), 0.2f);
        Var d = ad::exp_v(ad::scale(c, 0.3f));
        return ad::mean(ad::mul(d, d));
      },
      40, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("log, sqrt, abs, reciprocal, clamp gradients away from kinks") {
  Rng rng(3);
  Mat x = randn(3, 6, rng).cwiseAbs().array().matrix();
  x.array() += 0.5f;  // keep clear of 0 and of the clamp knee
  auto rep = check_gradients(
      {x}, [](Tape&, const std::vector<Var>& in) {
        Var a = ad::log_v(in[0]);
        Var b = ad::sqrt_v(in[0]);
        Var c = ad::abs_v(in[0]);
        Var d = ad::reciprocal_v(in[0]);
        Var e = ad::clamp_min(in[0], 0.1f);
        return ad::sum(ad::add(ad::add(a, b), ad::add(c, ad::add(d, e))));
      },
      40, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("reductions, slicing and concatenation gradients") {
  Rng rng(4);
  Mat x = randn(6, 3, rng), y = randn(2, 3, rng);
  auto rep = check_gradients(
      {x, y}, [](Tape&, const std::vector<Var>& in) {
        Var top = ad::slice_rows(in[0], 0, 2);
        Var cat = ad::concat_rows({top, in[1], ad::slice_rows(in[0], 3, 2)});
        Var t = ad::transpose_v(cat);
        return ad::mean(ad::square_v(t));
      },
      30, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("bias_add and colwise_mul_const gradients") {
  Rng rng(5);
  Mat x = randn(4, 7, rng), b = randn(4, 1, rng);
  Eigen::VectorXf w = Eigen::VectorXf::LinSpaced(4, 0.5f, 2.0f);
  auto rep = check_gradients(
      {x, b}, [w](Tape&, const std::vector<Var>& in) {
        return ad::mean(ad::square_v(
            ad::colwise_mul_const(ad::bias_add(in[0], in[1]), w)));
      },
      30, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("softmax_row sums to one and has correct gradients") {
  Rng rng(6);
  Mat x = randn(1, 9, rng);
  {
    Tape t;
    Var y = ad::softmax_row(t.input(x, false));
    CHECK(y.value().sum() == doctest::Approx(1.0f));
  }
  Mat v = randn(1, 9, rng);
  auto rep = check_gradients(
      {x}, [v](Tape& t, const std::vector<Var>& in) {
        return ad::sum(ad::mul(ad::softmax_row(in[0]), t.constant(v)));
      },
      20, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("cross entropy matches log-softmax and its gradient") {
  Rng rng(7);
  Mat logits = randn(5, 1, rng);
  {
    Tape t;
    Var ce = ad::cross_entropy_logits(t.input(logits, false), 2);
    double lse = 0.0;
    const double m = logits.maxCoeff();
    for (int i = 0; i < 5; ++i) lse += std::exp(logits(i, 0) - m);
    const double expect = m + std::log(lse) - logits(2, 0);
    CHECK(ce.scalar() == doctest::Approx(expect).epsilon(1e-5));
  }
  auto rep = check_gradients(
      {logits}, [](Tape&, const std::vector<Var>& in) {
        return ad::cross_entropy_logits(in[0], 2);
      },
      15, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("gather picks flat entries and routes gradients back") {
  Rng rng(8);
  Mat x = randn(1, 6, rng);
  auto idx = std::make_shared<Eigen::MatrixXi>(2, 3);
  *idx << 0, 2, 4, 1, -1, 5;
  {
    Tape t;
    Var y = ad::gather(t.input(x, false), idx, 2, 3);
    CHECK(y.value()(0, 0) == x(0, 0));
    CHECK(y.value()(1, 1) == 0.0f);  // -1 means zero fill
    CHECK(y.value()(1, 2) == x(0, 5));
  }
  auto rep = check_gradients(
      {x}, [idx](Tape&, const std::vector<Var>& in) {
        return ad::mean(ad::square_v(ad::gather(in[0], idx, 2, 3)));
      },
      12, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("conv1d identity kernel reproduces the input") {
  Rng rng(9);
  Mat x = randn(2, 10, rng);
  Mat w = Mat::Zero(2, 2 * 3);  // (C_out x C_in*k), delta at center tap
  w(0, 0 * 3 + 1) = 1.0f;
  w(1, 1 * 3 + 1) = 1.0f;
  Mat b = Mat::Zero(2, 1);
  Tape t;
  Var y = ad::conv1d(t.input(x, false), t.input(w, false), t.input(b, false), 3, 1);
  CHECK((y.value() - x).cwiseAbs().maxCoeff() <= 1e-6f);
}

TEST_CASE("conv1d gradients (dilated)") {
  Rng rng(10);
  Mat x = randn(3, 12, rng);
  Mat w = randn(4, 3 * 3, rng, 0.5f);
  Mat b = randn(4, 1, rng, 0.1f);
  auto rep = check_gradients(
      {x, w, b}, [](Tape&, const std::vector<Var>& in) {
        return ad::mean(ad::square_v(ad::conv1d(in[0], in[1], in[2], 3, 2)));
      },
      30, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("conv_transpose1d length law and gradients") {
  Rng rng(11);
  const int stride = 4;
  Mat x = randn(3, 5, rng);
  Mat w = randn(2, 2 * stride * 3, rng, 0.4f);
  Mat b = randn(2, 1, rng, 0.1f);
  {
    Tape t;
    Var y = ad::conv_transpose1d(t.input(x, false), t.input(w, false),
                                 t.input(b, false), stride);
    CHECK(y.rows() == 2);
    CHECK(y.cols() == 5 * stride);
  }
  auto rep = check_gradients(
      {x, w, b}, [stride](Tape&, const std::vector<Var>& in) {
        return ad::mean(ad::square_v(ad::conv_transpose1d(in[0], in[1], in[2], stride)));
      },
      30, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("conv2d output shape and gradients") {
  Rng rng(12);
  ad::Conv2dSpec spec;
  spec.in_channels = 2;
  spec.height = 7;
  spec.width = 5;
  spec.kh = 3;
  spec.kw = 3;
  spec.sh = 2;
  spec.sw = 1;
  spec.ph = 1;
  spec.pw = 1;
  Mat x = randn(2, 35, rng);
  Mat w = randn(3, 2 * 9, rng, 0.4f);
  Mat b = randn(3, 1, rng, 0.1f);
  {
    Tape t;
    Var y = ad::conv2d(t.input(x, false), t.input(w, false), t.input(b, false), spec);
    CHECK(y.rows() == 3);
    CHECK(y.cols() == spec.out_height() * spec.out_width());
    CHECK(spec.out_height() == 4);
    CHECK(spec.out_width() == 5);
  }
  auto rep = check_gradients(
      {x, w, b}, [spec](Tape&, const std::vector<Var>& in) {
        return ad::mean(ad::square_v(ad::conv2d(in[0], in[1], in[2], spec)));
      },
      40, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("cosine similarity and l2 normalize") {
  Rng rng(13);
  Mat a = randn(6, 1, rng), b = randn(6, 1, rng);
  {
    Tape t;
    Var c = ad::cosine_similarity(t.input(a, false), t.input(b, false));
    const float expect = a.col(0).dot(b.col(0)) / (a.norm() * b.norm());
    CHECK(c.scalar() == doctest::Approx(expect).epsilon(1e-5));
    Var n = ad::l2_normalize(t.input(a, false));
    CHECK(n.value().norm() == doctest::Approx(1.0f).epsilon(1e-5));
  }
  auto rep = check_gradients(
      {a, b}, [](Tape&, const std::vector<Var>& in) {
        return ad::cosine_similarity(ad::l2_normalize(in[0]), in[1]);
      },
      24, rng);
  CHECK(rep.max_rel_err <= 1e-2f);
}

TEST_CASE("parameters bound twice accumulate both uses") {
  ad::Parameter p("w", Mat::Ones(2, 2));
  Tape t;
  Var w1 = t.param(p);
  Var w2 = t.param(p);
  CHECK(w1.id == w2.id);  // same leaf
  Var loss = ad::sum(ad::add(ad::scale(w1, 2.0f), ad::scale(w2, 3.0f)));
  t.backward(loss);
  // d/dw (2w + 3w) = 5 in every coordinate.
  CHECK((p.grad.array() - 5.0f).abs().maxCoeff() <= 1e-6f);
}

TEST_CASE("backward only flows where gradients are requested") {
  Rng rng(14);
  Mat x = randn(2, 2, rng);
  Tape t;
  Var a = t.input(x, false);   // data: no gradient
  Var b = t.input(x, true);    // differentiable input
  Var loss = ad::sum(ad::mul(a, b));
  t.backward(loss);
  CHECK(t.input_grad(a).size() == 4);  // zeros, never touched
  CHECK(t.input_grad(a).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((t.input_grad(b) - x).cwiseAbs().maxCoeff() <= 1e-6f);
}
