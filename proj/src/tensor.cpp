#include "csvqa/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace csvqa {

namespace detail {
namespace {
thread_local bool g_grad_enabled = true;
}
bool grad_enabled() { return g_grad_enabled; }

void set_grad_enabled(bool v) { g_grad_enabled = v; }
}  // namespace detail

std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t p = 1;
  for (int d : shape) {
    require(d > 0, Error::Kind::invalid_dimensions, "tensor dimensions must be positive");
    p *= static_cast<std::size_t>(d);
  }
  return p;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_product(shape), 0.0f);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
  require(shape_product(shape) == data.size(), Error::Kind::invalid_dimensions,
          "from_data: buffer length does not match shape " + shape_to_string(shape));
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::scalar(float value) { return from_data({1}, {value}); }

Tensor Tensor::wrap(std::shared_ptr<detail::TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

std::span<const float> Tensor::grad() const {
  require(!impl_->grad.empty(), Error::Kind::invalid_argument,
          "grad(): no gradient has been accumulated");
  return impl_->grad;
}

float Tensor::item() const {
  require(impl_ && impl_->data.size() == 1, Error::Kind::invalid_dimensions,
          "item(): tensor is not scalar");
  return impl_->data[0];
}

void backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1, Error::Kind::invalid_dimensions,
          "backward() requires a scalar loss");
  auto root = loss.impl();

  // Iterative post-order DFS; the resulting list is a topological order with
  // inputs before outputs, so we sweep it in reverse.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  struct Frame {
    detail::TensorImpl* node;
    std::size_t next_child;
  };
  std::vector<Frame> stack;
  if (visited.insert(root.get()).second) stack.push_back({root.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto* gn = f.node->node.get();
    if (gn && f.next_child < gn->inputs.size()) {
      detail::TensorImpl* child = gn->inputs[f.next_child++].get();
      if (visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* impl = *it;
    if (impl->node && !impl->grad.empty()) impl->node->backward(*impl);
  }
}

NoGradGuard::NoGradGuard() : prev_(detail::grad_enabled()) { detail::set_grad_enabled(false); }
NoGradGuard::~NoGradGuard() { detail::set_grad_enabled(prev_); }

}  // namespace csvqa
