#pragma once

// Differentiable primitives. Every op records its result on the tape of its
// first operand; all operands must live on the same tape.

#include "partasm/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace partasm::ad {

Var matmul(const Var& a, const Var& b);
// [B x m x k] * [B x k x n] -> [B x m x n]
Var batched_matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
// x * w + b for x [n x in], w [in x out], b [out].
Var linear(const Var& x, const Var& w, const Var& b);

// Binary ops broadcast numpy-style (shapes aligned on the trailing axis).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);

enum class Reduce { sum, mean, max };
Var reduce(const Var& a, std::size_t axis, Reduce kind);
inline Var sum(const Var& a, std::size_t axis) { return reduce(a, axis, Reduce::sum); }
inline Var mean(const Var& a, std::size_t axis) { return reduce(a, axis, Reduce::mean); }
inline Var max(const Var& a, std::size_t axis) { return reduce(a, axis, Reduce::max); }
Var sum_all(const Var& a);
Var mean_all(const Var& a);

// out[i] = min_j |x_i - y_j|^2; ties resolve to the lowest j, and the
// selected j is treated as fixed in the backward pass.
Var row_min_sq_dist(const Var& x, const Var& y);

Var concat(std::span<const Var> parts, std::size_t axis);
inline Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t count);
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
Var reshape(const Var& a, Shape shape);

// Each row divided by max(|row|, eps); a rank-1 input is one row.
Var l2_normalize(const Var& v, double eps);

// Rotation matrix of a (w, x, y, z) quaternion, using the unit-norm formula.
Var quaternion_to_matrix(const Var& q);

}  // namespace partasm::ad
