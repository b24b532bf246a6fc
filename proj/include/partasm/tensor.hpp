#pragma once

// Dense row-major tensors and a define-by-run differentiation tape.

#include <Eigen/Core>

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace partasm::ad {

using Shape = std::vector<std::size_t>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor ones_like(const Tensor& other) { return Tensor(other.shape(), 1.0); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape(), 0.0); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const noexcept { return values_.empty(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t row, std::size_t col);
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  // Rank-1 tensors are viewed as a single row.
  MatrixMap as_matrix();
  ConstMatrixMap as_matrix() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  Tensor& operator+=(const Tensor& other);

 private:
  Shape shape_;
  // 64-byte aligned so vectorized kernels split work identically on every run.
  std::vector<double, Eigen::aligned_allocator<double>> values_;
};

class Tape;
class Gradients;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reads values through `tape` (`self` is the node's own id) and adds input
// contributions into `grads`.
using BackwardFn =
    std::function<void(const Tape& tape, std::size_t self, const Tensor& grad_out, Gradients& grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Owned leaf.
  Var leaf(Tensor value, bool requires_grad = false);
  // Borrowed leaf; `value` must outlive the tape.
  Var borrow(const Tensor& value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return *nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Reverse sweep from a scalar root; the tape itself is not modified.
  Gradients backward(const Var& root) const;

 private:
  struct Node {
    std::string_view op;
    Tensor owned;
    const Tensor* value = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
};

class Gradients {
 public:
  explicit Gradients(std::size_t node_count) : grads_(node_count) {}

  // Gradient of the root with respect to `v`; zeros when nothing reached it.
  Tensor of(const Var& v) const;
  bool reached(const Var& v) const { return !grads_[v.id()].empty(); }

  // Zero-initialised accumulator for node `id`.
  Tensor& accumulator(std::size_t id, const Shape& shape);
  const Tensor& raw(std::size_t id) const { return grads_[id]; }

 private:
  std::vector<Tensor> grads_;
};

Gradients backward(const Var& root);

}  // namespace partasm::ad
