#pragma once

#include <functional>
#include <vector>

#include "lvcvc/autodiff.hpp"
#include "lvcvc/rng.hpp"

namespace lvcvc::testsupport {

struct GradCheckReport {
  float max_rel_err = 0.0f;
  int checked = 0;
};

/// Central-difference check of a scalar loss against the tape's analytic
/// gradients. `build` must construct the loss from the given input vars on
/// the given tape. Relative error uses max(|analytic|, |numeric|, floor')
/// with floor' = floor * max(1, |loss|): float32 forward evaluations put
/// noise of order |loss|*eps/step on the difference quotient, so coordinates
/// whose gradient sits below that level are held to absolute agreement
/// instead of a noise-dominated ratio.
inline GradCheckReport check_gradients(
    const std::vector<ad::Mat>& inputs,
    const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>& build,
    int samples_per_input, Rng& rng, float step = 1e-2f, float floor = 1e-3f) {
  // Analytic pass.
  std::vector<ad::Mat> analytic;
  float loss_scale = 1.0f;
  {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& m : inputs) vars.push_back(tape.input(m, true));
    ad::Var loss = build(tape, vars);
    loss_scale = std::max(1.0f, std::abs(loss.scalar()));
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(tape.input_grad(v));
  }

  auto eval = [&](const std::vector<ad::Mat>& xs) -> double {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& m : xs) vars.push_back(tape.input(m, false));
    return static_cast<double>(build(tape, vars).scalar());
  };

  GradCheckReport report;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    const Eigen::Index n = inputs[which].size();
    if (n == 0) continue;
    for (int s = 0; s < samples_per_input; ++s) {
      const Eigen::Index flat = static_cast<Eigen::Index>(rng.uniform_index(n));
      const Eigen::Index i = flat % inputs[which].rows();
      const Eigen::Index j = flat / inputs[which].rows();
      const float x0 = inputs[which](i, j);
      const float h = step * std::max(1.0f, std::abs(x0));

      std::vector<ad::Mat> xs = inputs;
      xs[which](i, j) = x0 + h;
      const double up = eval(xs);
      xs[which](i, j) = x0 - h;
      const double down = eval(xs);
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[which](i, j);
      const double denom =
          std::max({std::abs(a), std::abs(numeric),
                    static_cast<double>(floor) * static_cast<double>(loss_scale)});
      const float rel = static_cast<float>(std::abs(a - numeric) / denom);
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace lvcvc::testsupport
