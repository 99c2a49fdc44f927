#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace fsr {

// Momentum SGD over a fixed parameter list. Velocity buffers are created
// zeroed, one per parameter, and always track the parameter shapes.
class SgdState {
 public:
  SgdState(std::vector<Tensor> params, double learning_rate, double momentum);

  // v <- momentum * v + grad; param <- param - learning_rate * v.
  // Rejects parameters whose gradient has never been populated.
  void step();

  void zero_grad();

  double learning_rate() const { return learning_rate_; }
  double momentum() const { return momentum_; }
  const std::vector<double>& velocity(std::size_t i) const { return velocity_[i]; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double learning_rate_;
  double momentum_;
};

}  // namespace fsr
