#include "core/sgd.hpp"

#include <stdexcept>
#include <string>

namespace fsr {

SgdState::SgdState(std::vector<Tensor> params, double learning_rate, double momentum)
    : params_(std::move(params)), learning_rate_(learning_rate), momentum_(momentum) {
  if (learning_rate < 0.0) throw std::invalid_argument("sgd: learning rate must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("sgd: momentum must be in [0,1)");
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void SgdState::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad())
      throw std::runtime_error("sgd: parameter " + std::to_string(i) + " has no gradient");
    const double* g = p.grad().data();
    double* v = velocity_[i].data();
    double* w = p.data();
    const std::size_t n = p.numel();
    for (std::size_t j = 0; j < n; ++j) {
      v[j] = momentum_ * v[j] + g[j];
      w[j] -= learning_rate_ * v[j];
    }
  }
}

void SgdState::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace fsr
