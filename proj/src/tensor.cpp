#include "partasm/tensor.hpp"

#include "partasm/error.hpp"

#include <cmath>
#include <sstream>

namespace partasm::ad {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + to_string(shape_));
  }
  values_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + to_string(shape_));
  }
  if (values_.size() != element_count(shape_)) {
    throw ShapeError("value count " + std::to_string(values_.size()) + " does not match shape " + to_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t row, std::size_t col) { return values_[row * shape_.back() + col]; }
double Tensor::at(std::size_t row, std::size_t col) const { return values_[row * shape_.back() + col]; }

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape_));
  return values_[0];
}

MatrixMap Tensor::as_matrix() {
  if (rank() == 1) return MatrixMap(values_.data(), 1, static_cast<Eigen::Index>(shape_[0]));
  if (rank() != 2) throw ShapeError("matrix view needs rank 1 or 2, got " + to_string(shape_));
  return MatrixMap(values_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1]));
}

ConstMatrixMap Tensor::as_matrix() const {
  if (rank() == 1) return ConstMatrixMap(values_.data(), 1, static_cast<Eigen::Index>(shape_[0]));
  if (rank() != 2) throw ShapeError("matrix view needs rank 1 or 2, got " + to_string(shape_));
  return ConstMatrixMap(values_.data(), static_cast<Eigen::Index>(shape_[0]),
                        static_cast<Eigen::Index>(shape_[1]));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + to_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool Tensor::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.size() != size()) {
    throw ShapeError("cannot accumulate " + to_string(other.shape_) + " into " + to_string(shape_));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node& node = nodes_.emplace_back();
  node.op = "leaf";
  node.owned = std::move(value);
  node.value = &node.owned;
  node.requires_grad = requires_grad;
  return Var(this, nodes_.size() - 1);
}

Var Tape::borrow(const Tensor& value, bool requires_grad) {
  Node& node = nodes_.emplace_back();
  node.op = "leaf";
  node.value = &value;
  node.requires_grad = requires_grad;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs_grad = false;
  for (auto id : inputs) {
    if (id >= nodes_.size()) throw InvalidArgument("tape input precedes its consumer");
    needs_grad = needs_grad || nodes_[id].requires_grad;
  }
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite result in op '") + std::string(op) + "'");
  }
  Node& node = nodes_.emplace_back();
  node.op = op;
  node.owned = std::move(value);
  node.value = &node.owned;
  node.inputs = std::move(inputs);
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& root) const {
  if (&root.tape() != this) throw InvalidArgument("backward root belongs to another tape");
  if (value(root.id()).size() != 1) {
    throw ShapeError("backward needs a scalar root, got " + to_string(value(root.id()).shape()));
  }
  Gradients grads(nodes_.size());
  grads.accumulator(root.id(), value(root.id()).shape())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.backward || grads.raw(i).empty()) continue;
    node.backward(*this, i, grads.raw(i), grads);
  }
  return grads;
}

Tensor Gradients::of(const Var& v) const {
  const Tensor& g = grads_[v.id()];
  if (g.empty()) return Tensor::zeros_like(v.value());
  return g;
}

Tensor& Gradients::accumulator(std::size_t id, const Shape& shape) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(shape, 0.0);
  return g;
}

Gradients backward(const Var& root) { return root.tape().backward(root); }

}  // namespace partasm::ad
