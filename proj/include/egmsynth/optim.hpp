#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace egmsynth {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Keep parameters float32-representable after every step.
  bool float_params = true;
};

class Adam {
 public:
  Adam(std::size_t n_params, AdamConfig config);

  void step(std::span<double> params, std::span<const double> grads);

  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace egmsynth
