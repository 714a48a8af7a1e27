#pragma once

#include <cstdint>
#include <vector>

#include "trajattn/params.hpp"

namespace trajattn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Coupled L2: added to the raw gradient before the moment updates.
  double weight_decay = 0.0;
};

// Adam over a fixed parameter list. step() consumes the gradients accumulated
// in the parameters' grad buffers and zeroes them afterwards. A non-finite
// gradient anywhere aborts the step before any state is mutated.
class Adam {
 public:
  Adam(AdamConfig config, ParameterList params);

  void step();
  void zero_grad();

  std::int64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  ParameterList params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t steps_ = 0;
};

}  // namespace trajattn
