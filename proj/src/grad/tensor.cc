#include "ctformer/grad/tensor.h"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace ctformer::grad {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::span<double> internal::Node::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  return grad;
}

Tensor make_tensor(std::shared_ptr<internal::Node> node) { return Tensor(std::move(node)); }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_to_string(shape) + " needs " +
                                std::to_string(shape_size(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  node_ = std::make_shared<internal::Node>();
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> values(shape_size(shape), 0.0);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("Tensor: use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->values.size() : 0; }

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  if (s.size() == 1) return 1;
  if (s.size() == 2) return s[0];
  throw std::invalid_argument("Tensor: rows() on rank-" + std::to_string(s.size()) + " tensor");
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.empty()) return 1;
  return s.back();
}

std::span<const double> Tensor::values() const {
  if (!node_) return {};
  return node_->values;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) throw std::logic_error("Tensor: use of undefined tensor");
  return node_->values;
}

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw std::logic_error("Tensor: use of undefined tensor");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool requires_grad) {
  if (!node_) throw std::logic_error("Tensor: use of undefined tensor");
  node_->requires_grad = requires_grad;
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("Tensor: item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->values[0];
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  return Tensor(node_->shape, node_->values, false);
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(BackwardFn fn) {
  if (consumed_) throw std::logic_error("Tape: recording after backward()");
  entries_.push_back(std::move(fn));
}

void Tape::backward(const Tensor& root) {
  if (consumed_) throw std::logic_error("Tape: backward() called twice");
  if (root.size() != 1) {
    throw std::invalid_argument("Tape: backward() needs a scalar root, got shape " +
                                shape_to_string(root.shape()));
  }
  consumed_ = true;
  if (!root.requires_grad()) return;
  root.node()->ensure_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    (*it)();
    ++replayed_;
  }
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }

NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

}  // namespace ctformer::grad
