#pragma once

#include <string>
#include <vector>

#include "lvcvc/array_file.hpp"
#include "lvcvc/autodiff.hpp"

namespace lvcvc::ad {

/// AdamW with decoupled weight decay. Moment buffers are keyed by parameter
/// index; state round-trips through ArrayFile for checkpointing.
class AdamW {
 public:
  struct Config {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  AdamW(std::vector<NamedParam> params, const Config& config);

  void zero_grad();
  void step();
  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  long step_count() const { return t_; }

  // Re-points the parameter list after the owning model object has been
  // copied or moved; moment buffers stay as they are.
  void rebind(std::vector<NamedParam> params);

  void state_to(ArrayFile& file, const std::string& prefix) const;
  void state_from(const ArrayFile& file, const std::string& prefix);

 private:
  std::vector<NamedParam> params_;
  Config config_;
  std::vector<Mat> m_, v_;
  long t_ = 0;
};

}  // namespace lvcvc::ad
