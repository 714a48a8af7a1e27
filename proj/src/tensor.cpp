#include "trajattn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace trajattn {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ", ";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

int shape_numel(const Shape& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor: dimensions must be positive, got " +
                                  shape_to_string(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) {
  check_shape(shape);
  impl_ = std::make_shared<TensorImpl>();
  impl_->values.assign(static_cast<size_t>(shape_numel(shape)), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  check_shape(shape);
  if (static_cast<size_t>(shape_numel(shape)) != values.size()) {
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape_to_string(shape));
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

double Tensor::value() const {
  if (!impl_ || impl_->values.size() != 1) {
    throw std::invalid_argument("tensor: value() requires a scalar, got " +
                                (impl_ ? shape_to_string(impl_->shape) : std::string("undefined")));
  }
  return impl_->values[0];
}

Tensor& Tensor::set_requires_grad(bool enable) {
  impl_->requires_grad = enable;
  if (!enable) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
  return *this;
}

double* Tensor::grad() {
  if (!impl_->requires_grad) {
    throw std::runtime_error("tensor: grad() on a tensor without requires_grad");
  }
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad.data();
}

const std::vector<double>& Tensor::grad_values() const {
  if (!impl_->requires_grad) {
    throw std::runtime_error("tensor: grad_values() on a tensor without requires_grad");
  }
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && impl_->requires_grad) impl_->grad.assign(impl_->values.size(), 0.0);
}

void assert_finite(const Tensor& t, const std::string& label) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("non-finite value in " + label);
    }
  }
  if (t.requires_grad()) {
    for (double g : t.impl()->grad) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("non-finite gradient in " + label);
      }
    }
  }
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(std::span<const Tensor> inputs, const Tensor& output,
                  std::function<void(Tape&)> backward_rule) {
  for (const Tensor& in : inputs) {
    if (!in.defined() || !in.requires_grad()) continue;
    const TensorImpl* p = in.impl().get();
    if (produced_.count(p) == 0 && leaf_set_.insert(p).second) {
      leaves_.push_back(in.impl());
    }
  }
  produced_.insert(output.impl().get());
  nodes_.push_back(Node{std::move(backward_rule)});
}

std::vector<double>& Tape::grad_of(const std::shared_ptr<TensorImpl>& impl) {
  auto& slot = grads_[impl.get()];
  if (!slot) slot = std::make_unique<std::vector<double>>(impl->values.size(), 0.0);
  return *slot;
}

const std::vector<double>* Tape::find_grad(const TensorImpl* impl) const {
  auto it = grads_.find(impl);
  return it == grads_.end() ? nullptr : it->second.get();
}

void Tape::run_backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                (loss.defined() ? shape_to_string(loss.shape())
                                                : std::string("undefined")));
  }
  if (nodes_.empty()) {
    throw std::invalid_argument("backward: tape is empty");
  }
  grads_.clear();
  grad_of(loss.impl())[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->rule(*this);
  }
}

void Tape::backward_local(const Tensor& loss) { run_backward(loss); }

void Tape::backward(const Tensor& loss) {
  run_backward(loss);
  for (const auto& leaf : leaves_) {
    const std::vector<double>* g = find_grad(leaf.get());
    if (!g) continue;
    if (leaf->grad.empty()) leaf->grad.assign(leaf->values.size(), 0.0);
    for (size_t i = 0; i < g->size(); ++i) leaf->grad[i] += (*g)[i];
  }
}

}  // namespace trajattn
