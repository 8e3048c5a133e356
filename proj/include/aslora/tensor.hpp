#pragma once

#include "aslora/common.hpp"
#include "aslora/rng.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace aslora {

/// Shared storage behind Tensor handles. Gradient buffers stay empty until
/// backward first touches them, so dead branches cost nothing.
struct TensorImpl {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;
  bool requires_grad = false;
};

/// Value-semantics handle to shared tensor storage. Copying a Tensor aliases
/// the same buffer; clone() makes an independent deep copy.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<real> values,
                            bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);
  static Tensor randn(Shape shape, RandomStream& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::vector<real>& values() { return impl_->data; }
  const std::vector<real>& values() const { return impl_->data; }
  real* data() { return impl_->data.data(); }
  const real* data() const { return impl_->data.data(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer, allocated and zeroed on first use.
  std::vector<real>& grad();
  const std::vector<real>& grad() const;
  void zero_grad();
  /// Drops the gradient buffer entirely.
  void clear_grad();

  /// Value of a single-element tensor. Throws ContractError otherwise.
  real item() const;

  /// Deep copy; never recorded on a tape.
  Tensor clone() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

/// Append-only record of differentiable operations. Each node owns the
/// output handle and a closure that pushes the output gradient into the
/// input gradients. backward() replays nodes newest-first and accumulates
/// with +=, so shared subexpressions receive the sum of their uses.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::shared_ptr<TensorImpl> output, std::function<void()> pull);

  /// Seeds d(root)/d(root) = 1 and replays the tape in reverse. Pre: root is
  /// scalar and was recorded on this tape while it was active.
  void backward(const Tensor& root);

  size_t size() const { return nodes_.size(); }

  /// Tape currently capturing operations on this thread, or nullptr.
  static Tape* active();

private:
  struct Node {
    std::shared_ptr<TensorImpl> output;
    std::function<void()> pull;
  };
  std::vector<Node> nodes_;
  friend class TapeScope;
};

/// RAII activation of a tape on the current thread. Operations run outside
/// any TapeScope are pure evaluation: nothing is recorded and outputs do not
/// require grad.
class TapeScope {
public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape* prev_;
};

} // namespace aslora
