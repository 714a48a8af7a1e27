#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace trajattn {

using Shape = std::vector<int>;

std::string shape_to_string(const Shape& shape);
int shape_numel(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on demand while requires_grad is set
  bool requires_grad = false;
};

// Dense fp64 tensor, row-major. Handle semantics: copies share storage.
// Values are immutable once the tensor has entered a forward pass; gradient
// buffers are only mutated by Tape::backward and the optimizer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor zeros(const Shape& shape) { return Tensor(shape, 0.0); }
  static Tensor ones(const Shape& shape) { return Tensor(shape, 1.0); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
  int numel() const { return static_cast<int>(impl_->values.size()); }

  double* data() { return impl_->values.data(); }
  const double* data() const { return impl_->values.data(); }
  const std::vector<double>& values() const { return impl_->values; }

  // Scalar access; throws unless numel() == 1.
  double value() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool enable);
  double* grad();
  const std::vector<double>& grad_values() const;
  void zero_grad();

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Throws if any value (or gradient) is NaN or infinite.
void assert_finite(const Tensor& t, const std::string& label);

class Tape;

// The tape currently recording on this thread, or nullptr.
Tape* active_tape();

// Reverse-mode tape, rebuilt every forward pass. Ops append one node each;
// backward replays the nodes in reverse recording order exactly once.
// Gradients accumulate in tape-local buffers so that independent tapes can
// run concurrently over shared (read-only) leaf tensors; backward() flushes
// leaf gradients into the leaves' own grad buffers afterwards.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::span<const Tensor> inputs, const Tensor& output,
              std::function<void(Tape&)> backward_rule);
  void record(std::initializer_list<Tensor> inputs, const Tensor& output,
              std::function<void(Tape&)> backward_rule) {
    record(std::span<const Tensor>(inputs.begin(), inputs.size()), output,
           std::move(backward_rule));
  }

  // Tape-local gradient buffer for a tensor, created zero-filled on demand.
  std::vector<double>& grad_of(const std::shared_ptr<TensorImpl>& impl);
  // Null if the tensor has no gradient recorded on this tape.
  const std::vector<double>* find_grad(const TensorImpl* impl) const;

  // Full backward pass from a scalar loss; leaf gradients are added into the
  // leaves' grad buffers, so repeated calls accumulate.
  void backward(const Tensor& loss);
  // Same traversal but gradients stay tape-local (for deterministic batched
  // reduction by the trainer).
  void backward_local(const Tensor& loss);

  std::size_t num_nodes() const { return nodes_.size(); }
  const std::vector<std::shared_ptr<TensorImpl>>& leaves() const { return leaves_; }

 private:
  void run_backward(const Tensor& loss);

  struct Node {
    std::function<void(Tape&)> rule;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const TensorImpl*, std::unique_ptr<std::vector<double>>> grads_;
  std::unordered_set<const TensorImpl*> produced_;
  std::unordered_set<const TensorImpl*> leaf_set_;
  std::vector<std::shared_ptr<TensorImpl>> leaves_;
};

// Installs a tape as this thread's recording target for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace trajattn
