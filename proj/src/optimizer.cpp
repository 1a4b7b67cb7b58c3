#include "lvcvc/optimizer.hpp"

#include <cmath>

#include "lvcvc/errors.hpp"

namespace lvcvc::ad {

AdamW::AdamW(std::vector<NamedParam> params, const Config& config)
    : params_(std::move(params)), config_(config) {
  for (const auto& np : params_) {
    m_.push_back(Mat::Zero(np.param->value.rows(), np.param->value.cols()));
    v_.push_back(Mat::Zero(np.param->value.rows(), np.param->value.cols()));
  }
}

void AdamW::zero_grad() {
  for (const auto& np : params_) np.param->zero_grad();
}

void AdamW::rebind(std::vector<NamedParam> params) {
  if (params.size() != params_.size())
    throw DataError("optimizer rebind: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name != params_[i].name)
      throw DataError("optimizer rebind: parameter order changed at " + params[i].name);
  params_ = std::move(params);
}

void AdamW::step() {
  ++t_;
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float bias1 = 1.0f - std::pow(b1, static_cast<float>(t_));
  const float bias2 = 1.0f - std::pow(b2, static_cast<float>(t_));
  const float lr = static_cast<float>(config_.lr);
  const float eps = static_cast<float>(config_.eps);
  const float wd = static_cast<float>(config_.weight_decay);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Parameter& p = *params_[i].param;
    // The optimizer is the single designated mutator of parameter values.
    Mat& value = const_cast<Mat&>(p.value);
    m_[i] = b1 * m_[i] + (1.0f - b1) * p.grad;
    v_[i] = b2 * v_[i].array().matrix() +
            (1.0f - b2) * p.grad.cwiseProduct(p.grad);
    const Mat m_hat = m_[i] / bias1;
    const Mat v_hat = v_[i] / bias2;
    value.array() -=
        lr * (m_hat.array() / (v_hat.array().sqrt() + eps) + wd * value.array());
  }
}

void AdamW::state_to(ArrayFile& file, const std::string& prefix) const {
  Mat t(1, 1);
  t(0, 0) = static_cast<float>(t_);
  file.add(prefix + "t", t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    file.add(prefix + params_[i].name + ".m", m_[i]);
    file.add(prefix + params_[i].name + ".v", v_[i]);
  }
}

void AdamW::state_from(const ArrayFile& file, const std::string& prefix) {
  t_ = static_cast<long>(file.get(prefix + "t")(0, 0));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Mat& m = file.get(prefix + params_[i].name + ".m");
    const Mat& v = file.get(prefix + params_[i].name + ".v");
    if (m.rows() != m_[i].rows() || m.cols() != m_[i].cols())
      throw DataError("optimizer state shape mismatch for " + params_[i].name);
    m_[i] = m;
    v_[i] = v;
  }
}

}  // namespace lvcvc::ad
