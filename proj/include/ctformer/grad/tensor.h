#ifndef CTFORMER_GRAD_TENSOR_H_
#define CTFORMER_GRAD_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ctformer::grad {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace internal {

// Storage shared by every handle to the same tensor. The gradient buffer is
// allocated on first use.
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;

  std::span<double> ensure_grad();
};

}  // namespace internal

// Dense row-major array of doubles. Copies are shallow: two handles created by
// copy refer to the same storage and the same gradient accumulator.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // Rank-2 helpers. A rank-1 tensor of length n reads as 1 x n.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  // Empty until something has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);

  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  // Independent copy of the values with no gradient history.
  Tensor detach() const;

  const std::shared_ptr<internal::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<internal::Node> node) : node_(std::move(node)) {}
  friend Tensor make_tensor(std::shared_ptr<internal::Node> node);

  std::shared_ptr<internal::Node> node_;
};

Tensor make_tensor(std::shared_ptr<internal::Node> node);

// Ordered record of the operations executed while the tape is active on the
// current thread. Constructing a tape activates it; destroying it restores the
// previously active tape. Operations whose inputs require gradients append one
// entry each; backward() replays the entries in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(BackwardFn fn);
  // Seeds d(root)/d(root) = 1 and propagates. root must hold one element.
  // A tape may be replayed once.
  void backward(const Tensor& root);

  std::size_t size() const { return entries_.size(); }
  std::size_t replayed() const { return replayed_; }

 private:
  std::vector<BackwardFn> entries_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
  std::size_t replayed_ = 0;
};

// Disables recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

}  // namespace ctformer::grad

#endif  // CTFORMER_GRAD_TENSOR_H_
