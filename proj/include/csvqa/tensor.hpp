#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "csvqa/errors.hpp"

namespace csvqa {

namespace detail {

struct TensorImpl;

// Backward-graph record: the inputs that produced a tensor plus a closure
// that routes the output gradient into them.
struct GradNode {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  std::vector<int> shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<GradNode> node;

  std::size_t size() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

bool grad_enabled();

}  // namespace detail

// Dense 32-bit float tensor with an optional reverse-mode graph record.
// Value-semantics handle: copies share the underlying buffer. Operations
// never mutate their inputs' data buffers.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                          bool requires_grad = false);
  static Tensor scalar(float value);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const float> data() const { return impl_->data; }
  std::span<float> mutable_data() { return impl_->data; }
  std::span<const float> grad() const;
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }
  void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0f); }
  void drop_grad() { impl_->grad.clear(); }

  // Scalar readout; requires size() == 1.
  float item() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl);

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Reverse topological traversal from a scalar loss; gradients accumulate
// additively across fan-out. Graph must be acyclic (guaranteed by
// construction: ops only reference existing tensors).
void backward(const Tensor& loss);

// Disables graph recording for the enclosing scope (inference / evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

std::string shape_to_string(const std::vector<int>& shape);
std::size_t shape_product(const std::vector<int>& shape);

}  // namespace csvqa
