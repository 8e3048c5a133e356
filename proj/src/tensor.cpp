#include "aslora/tensor.hpp"

#include <algorithm>

namespace aslora {
namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (int d : shape) {
    if (d <= 0)
      throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
}

std::shared_ptr<TensorImpl> make_impl(Shape shape, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<size_t>(numel_of(shape)), real(0));
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return impl;
}

thread_local Tape* t_active_tape = nullptr;

} // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(make_impl(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  auto t = Tensor(make_impl(std::move(shape), requires_grad));
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<real> values, bool requires_grad) {
  auto impl = make_impl(std::move(shape), requires_grad);
  if (values.size() != impl->data.size())
    throw ShapeError("from_values: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(impl->shape));
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::randn(Shape shape, RandomStream& rng, double stddev, bool requires_grad) {
  auto t = Tensor(make_impl(std::move(shape), requires_grad));
  for (auto& v : t.values()) v = static_cast<real>(rng.normal() * stddev);
  return t;
}

std::vector<real>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), real(0));
  return impl_->grad;
}

const std::vector<real>& Tensor::grad() const {
  if (impl_->grad.empty()) throw ContractError("grad accessed before backward");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), real(0));
}

void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

real Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor has " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>(*impl_);
  impl->grad.clear();
  return Tensor(std::move(impl));
}

void Tape::record(std::shared_ptr<TensorImpl> output, std::function<void()> pull) {
  nodes_.push_back(Node{std::move(output), std::move(pull)});
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1)
    throw ContractError("backward: root must be a defined scalar");
  bool found = false;
  for (const auto& n : nodes_) {
    if (n.output.get() == root.impl()) {
      found = true;
      break;
    }
  }
  if (!found) throw ContractError("backward: root was not recorded on this tape");

  root.impl()->grad.assign(1, real(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    // Nodes whose output never received a gradient are dead branches.
    if (it->output->grad.empty()) continue;
    it->pull();
  }
}

Tape* Tape::active() { return t_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(t_active_tape) {
  t_active_tape = &tape;
}

TapeScope::~TapeScope() { t_active_tape = prev_; }

} // namespace aslora
