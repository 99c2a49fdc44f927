#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace fsr {

// Dimension sizes, outermost first. Row-major storage throughout.
using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorBuf {
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
};
}  // namespace detail

// Dense 64-bit float tensor. Copies are shallow: they alias the same
// storage, which is what lets reshapes be free and lets tape closures
// hold onto operands cheaply. Gradients accumulate into `grad` and are
// cleared explicitly (zero_grad) between optimizer steps.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v);

  bool defined() const { return buf_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const;  // negative counts from the back
  std::size_t numel() const { return buf_ ? buf_->value.size() : 0; }

  double* data() { return buf_->value.data(); }
  const double* data() const { return buf_->value.data(); }
  std::vector<double>& values() { return buf_->value; }
  const std::vector<double>& values() const { return buf_->value; }
  double item() const;  // scalar tensors only

  bool requires_grad() const { return buf_ && buf_->requires_grad; }
  void set_requires_grad(bool on) { buf_->requires_grad = on; }

  bool has_grad() const { return buf_ && !buf_->grad.empty(); }
  // Allocates (zeroed) on first touch.
  double* grad_data();
  const std::vector<double>& grad() const;
  void zero_grad();

  // Same storage, new shape; element count must match.
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return buf_ == other.buf_; }

 private:
  Shape shape_;
  std::shared_ptr<detail::TensorBuf> buf_;
};

// Reverse-mode tape: ops append one backward step per recorded node, and
// backward() replays them exactly once in reverse recording order. Inputs
// of a node always precede it, so the traversal is topological by
// construction.
class Tape {
 public:
  void record(std::function<void()> backward_step) { steps_.push_back(std::move(backward_step)); }
  std::size_t size() const { return steps_.size(); }
  void clear() { steps_.clear(); }

  friend void backward(const Tensor& loss, Tape& tape);

 private:
  std::vector<std::function<void()>> steps_;
};

// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards, accumulating
// into every requires_grad tensor reachable from the recorded pass.
// Rejects non-scalar losses.
void backward(const Tensor& loss, Tape& tape);

}  // namespace fsr
