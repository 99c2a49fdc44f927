#include "core/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace fsr {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad) : shape_(std::move(shape)) {
  buf_ = std::make_shared<detail::TensorBuf>();
  buf_->value.assign(shape_numel(shape_), 0.0);
  buf_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) : shape_(std::move(shape)) {
  if (values.size() != shape_numel(shape_))
    throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape_));
  buf_ = std::make_shared<detail::TensorBuf>();
  buf_->value = std::move(values);
  buf_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

int Tensor::dim(int i) const {
  int r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r) throw std::invalid_argument("dim index out of range for shape " + shape_str(shape_));
  return shape_[static_cast<std::size_t>(i)];
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() requires a scalar tensor, got " + shape_str(shape_));
  return buf_->value[0];
}

double* Tensor::grad_data() {
  if (!buf_) throw std::logic_error("grad_data() on an undefined tensor");
  if (buf_->grad.empty()) buf_->grad.assign(buf_->value.size(), 0.0);
  return buf_->grad.data();
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("gradient not populated");
  return buf_->grad;
}

void Tensor::zero_grad() {
  if (buf_) buf_->grad.assign(buf_->value.size(), 0.0);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.buf_ = buf_;
  return t;
}

void backward(const Tensor& loss, Tape& tape) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward requires a scalar loss, got " + shape_str(loss.shape()));
  Tensor seed = loss;
  seed.grad_data()[0] += 1.0;
  for (auto it = tape.steps_.rbegin(); it != tape.steps_.rend(); ++it) (*it)();
}

}  // namespace fsr
