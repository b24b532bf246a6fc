#include "partasm/ops.hpp"

#include "partasm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace partasm::ad {
namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw InvalidArgument("operand is not on a tape");
  if (&a.tape() != &b.tape()) throw InvalidArgument("operands live on different tapes");
  return a.tape();
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw InvalidArgument("operand is not on a tape");
  return a.tape();
}

// Index mapping for numpy-style broadcasting of two operands.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_strides;
  std::vector<std::size_t> b_strides;
  bool same = false;
  bool b_scalar = false;
  bool a_scalar = false;
};

std::vector<std::size_t> aligned_strides(const Shape& shape, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  const std::size_t offset = out.size() - shape.size();
  std::size_t stride = 1;
  for (std::size_t k = shape.size(); k-- > 0;) {
    strides[offset + k] = shape[k] == 1 ? 0 : stride;
    stride *= shape[k];
  }
  return strides;
}

Broadcast broadcast(const Shape& a, const Shape& b) {
  Broadcast bc;
  const std::size_t rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k + a.size() >= rank ? a[k + a.size() - rank] : 1;
    const std::size_t db = k + b.size() >= rank ? b[k + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("incompatible shapes " + to_string(a) + " and " + to_string(b));
    }
    bc.out[k] = std::max(da, db);
  }
  bc.same = a == b;
  bc.b_scalar = element_count(b) == 1;
  bc.a_scalar = element_count(a) == 1;
  bc.a_strides = aligned_strides(a, bc.out);
  bc.b_strides = aligned_strides(b, bc.out);
  return bc;
}

// Calls fn(k, ia, ib) for every output element k.
template <class Fn>
void for_each_broadcast(const Broadcast& bc, Fn&& fn) {
  const std::size_t total = element_count(bc.out);
  if (bc.same) {
    for (std::size_t k = 0; k < total; ++k) fn(k, k, k);
    return;
  }
  if (bc.b_scalar && element_count(bc.out) == total && bc.a_strides.back() != 0 && !bc.a_scalar) {
    bool a_full = true;
    std::size_t stride = 1;
    for (std::size_t k = bc.out.size(); k-- > 0;) {
      a_full = a_full && bc.a_strides[k] == stride;
      stride *= bc.out[k];
    }
    if (a_full) {
      for (std::size_t k = 0; k < total; ++k) fn(k, k, 0);
      return;
    }
  }
  const std::size_t rank = bc.out.size();
  std::vector<std::size_t> index(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t k = 0; k < total; ++k) {
    fn(k, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++index[d];
      ia += bc.a_strides[d];
      ib += bc.b_strides[d];
      if (index[d] < bc.out[d]) break;
      ia -= bc.a_strides[d] * index[d];
      ib -= bc.b_strides[d] * index[d];
      index[d] = 0;
    }
  }
}

// f(x, y) and its partials dfa(x, y), dfb(x, y).
template <class F, class DA, class DB>
Var binary(std::string_view name, const Var& a, const Var& b, F f, DA dfa, DB dfb) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Broadcast bc = broadcast(av.shape(), bv.shape());
  Tensor out(bc.out);
  for_each_broadcast(bc, [&](std::size_t k, std::size_t ia, std::size_t ib) { out[k] = f(av[ia], bv[ib]); });
  const std::size_t ida = a.id();
  const std::size_t idb = b.id();
  return tape.record(name, std::move(out), {ida, idb},
                     [ida, idb, bc, dfa, dfb](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
                       const Tensor& x = t.value(ida);
                       const Tensor& y = t.value(idb);
                       if (t.requires_grad(ida)) {
                         Tensor& ga = grads.accumulator(ida, x.shape());
                         for_each_broadcast(bc, [&](std::size_t k, std::size_t ia, std::size_t ib) {
                           ga[ia] += g[k] * dfa(x[ia], y[ib]);
                         });
                       }
                       if (t.requires_grad(idb)) {
                         Tensor& gb = grads.accumulator(idb, y.shape());
                         for_each_broadcast(bc, [&](std::size_t k, std::size_t ia, std::size_t ib) {
                           gb[ib] += g[k] * dfb(x[ia], y[ib]);
                         });
                       }
                     });
}

// f(x) and its derivative expressed through (x, f(x)).
template <class F, class D>
Var unary(std::string_view name, const Var& a, F f, D df) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t k = 0; k < av.size(); ++k) out[k] = f(av[k]);
  const std::size_t ida = a.id();
  return tape.record(name, std::move(out), {ida},
                     [ida, df](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
                       const Tensor& x = t.value(ida);
                       const Tensor& y = t.value(self);
                       Tensor& ga = grads.accumulator(ida, x.shape());
                       for (std::size_t k = 0; k < x.size(); ++k) ga[k] += g[k] * df(x[k], y[k]);
                     });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t k = 0; k < axis; ++k) s.outer *= shape[k];
  s.length = shape[axis];
  for (std::size_t k = axis + 1; k < shape.size(); ++k) s.inner *= shape[k];
  return s;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + to_string(av.shape()) + " by " + to_string(bv.shape()));
  }
  Tensor out({av.dim(0), bv.dim(1)});
  out.as_matrix().noalias() = av.as_matrix() * bv.as_matrix();
  const std::size_t ida = a.id();
  const std::size_t idb = b.id();
  return tape.record("matmul", std::move(out), {ida, idb}, [ida, idb](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
    const Tensor& x = t.value(ida);
    const Tensor& y = t.value(idb);
    if (t.requires_grad(ida)) {
      grads.accumulator(ida, x.shape()).as_matrix().noalias() += g.as_matrix() * y.as_matrix().transpose();
    }
    if (t.requires_grad(idb)) {
      grads.accumulator(idb, y.shape()).as_matrix().noalias() += x.as_matrix().transpose() * g.as_matrix();
    }
  });
}

Var batched_matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1)) {
    throw ShapeError("batched_matmul: cannot multiply " + to_string(av.shape()) + " by " + to_string(bv.shape()));
  }
  const auto batch = static_cast<Eigen::Index>(av.dim(0));
  const auto m = static_cast<Eigen::Index>(av.dim(1));
  const auto k = static_cast<Eigen::Index>(av.dim(2));
  const auto n = static_cast<Eigen::Index>(bv.dim(2));
  Tensor out({av.dim(0), av.dim(1), bv.dim(2)});
  for (Eigen::Index i = 0; i < batch; ++i) {
    MatrixMap(out.data() + i * m * n, m, n).noalias() =
        ConstMatrixMap(av.data() + i * m * k, m, k) * ConstMatrixMap(bv.data() + i * k * n, k, n);
  }
  const std::size_t ida = a.id();
  const std::size_t idb = b.id();
  return tape.record("batched_matmul", std::move(out), {ida, idb},
                     [ida, idb, batch, m, k, n](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
                       const Tensor& x = t.value(ida);
                       const Tensor& y = t.value(idb);
                       Tensor* ga = t.requires_grad(ida) ? &grads.accumulator(ida, x.shape()) : nullptr;
                       Tensor* gb = t.requires_grad(idb) ? &grads.accumulator(idb, y.shape()) : nullptr;
                       for (Eigen::Index i = 0; i < batch; ++i) {
                         ConstMatrixMap gi(g.data() + i * m * n, m, n);
                         if (ga) {
                           MatrixMap(ga->data() + i * m * k, m, k).noalias() +=
                               gi * ConstMatrixMap(y.data() + i * k * n, k, n).transpose();
                         }
                         if (gb) {
                           MatrixMap(gb->data() + i * k * n, k, n).noalias() +=
                               ConstMatrixMap(x.data() + i * m * k, m, k).transpose() * gi;
                         }
                       }
                     });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  Tape& tape = same_tape(x, w);
  same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(0) || bv.rank() != 1 || bv.dim(0) != wv.dim(1)) {
    throw ShapeError("linear: incompatible shapes " + to_string(xv.shape()) + ", " + to_string(wv.shape()) + ", " +
                     to_string(bv.shape()));
  }
  Tensor out({xv.dim(0), wv.dim(1)});
  auto om = out.as_matrix();
  om.noalias() = xv.as_matrix() * wv.as_matrix();
  om.rowwise() += bv.as_matrix().row(0);
  const std::size_t idx = x.id();
  const std::size_t idw = w.id();
  const std::size_t idb = b.id();
  return tape.record("linear", std::move(out), {idx, idw, idb},
                     [idx, idw, idb](const Tape& t, std::size_t, const Tensor& g, Gradients& grads) {
                       const Tensor& xv = t.value(idx);
                       const Tensor& wv = t.value(idw);
                       const auto gm = g.as_matrix();
                       if (t.requires_grad(idx)) {
                         grads.accumulator(idx, xv.shape()).as_matrix().noalias() += gm * wv.as_matrix().transpose();
                       }
                       if (t.requires_grad(idw)) {
                         grads.accumulator(idw, wv.shape()).as_matrix().noalias() += xv.as_matrix().transpose() * gm;
                       }
                       if (t.requires_grad(idb)) {
                         grads.accumulator(idb, t.value(idb).shape()).as_matrix().row(0) += gm.colwise().sum();
                       }
                     });
}

Var transpose(const Var& a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ShapeError("transpose needs rank 2, got " + to_string(av.shape()));
  Tensor out({av.dim(1), av.dim(0)});
  out.as_matrix() = av.as_matrix().transpose();
  const std::size_t ida = a.id();
  return tape.record("transpose", std::move(out), {ida}, [ida](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
    grads.accumulator(ida, t.value(ida).shape()).as_matrix() += g.as_matrix().transpose();
  });
}

Var add(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var scale(const Var& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var relu(const Var& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var square(const Var& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var reduce(const Var& a, std::size_t axis, Reduce kind) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  if (axis >= av.rank()) {
    throw ShapeError("reduce: axis " + std::to_string(axis) + " out of range for " + to_string(av.shape()));
  }
  const AxisSplit s = split_at(av.shape(), axis);
  Shape out_shape;
  for (std::size_t k = 0; k < av.rank(); ++k) {
    if (k != axis) out_shape.push_back(av.shape()[k]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);
  std::vector<std::size_t> winners;
  if (kind == Reduce::max) winners.resize(out.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.length * s.inner + i;
      double acc = kind == Reduce::max ? av[base] : 0.0;
      std::size_t best = 0;
      for (std::size_t l = 0; l < s.length; ++l) {
        const double x = av[base + l * s.inner];
        if (kind == Reduce::max) {
          if (x > acc) {
            acc = x;
            best = l;
          }
        } else {
          acc += x;
        }
      }
      if (kind == Reduce::mean) acc /= static_cast<double>(s.length);
      out[o * s.inner + i] = acc;
      if (kind == Reduce::max) winners[o * s.inner + i] = best;
    }
  }
  const std::size_t ida = a.id();
  const char* name = kind == Reduce::sum ? "sum" : kind == Reduce::mean ? "mean" : "max";
  return tape.record(name, std::move(out), {ida},
                     [ida, s, kind, winners = std::move(winners)](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
                       Tensor& ga = grads.accumulator(ida, t.value(ida).shape());
                       const double w = kind == Reduce::mean ? 1.0 / static_cast<double>(s.length) : 1.0;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const std::size_t base = o * s.length * s.inner + i;
                           const double gi = g[o * s.inner + i];
                           if (kind == Reduce::max) {
                             ga[base + winners[o * s.inner + i] * s.inner] += gi;
                           } else {
                             for (std::size_t l = 0; l < s.length; ++l) ga[base + l * s.inner] += gi * w;
                           }
                         }
                       }
                     });
}

Var sum_all(const Var& a) { return reduce(reshape(a, {a.value().size()}), 0, Reduce::sum); }
Var mean_all(const Var& a) { return reduce(reshape(a, {a.value().size()}), 0, Reduce::mean); }

Var row_min_sq_dist(const Var& x, const Var& y) {
  Tape& tape = same_tape(x, y);
  const Tensor& xv = x.value();
  const Tensor& yv = y.value();
  if (xv.size() == 0 || yv.size() == 0) throw DegenerateInputError("row_min_sq_dist: empty point set");
  if (xv.rank() != 2 || yv.rank() != 2 || xv.dim(1) != yv.dim(1)) {
    throw ShapeError("row_min_sq_dist: incompatible point sets " + to_string(xv.shape()) + " and " +
                     to_string(yv.shape()));
  }
  const std::size_t n = xv.dim(0);
  const std::size_t m = yv.dim(0);
  const std::size_t d = xv.dim(1);
  Tensor out({n});
  std::vector<std::size_t> nearest(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = xv.data() + i * d;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double* yj = yv.data() + j * d;
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = xi[c] - yj[c];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        best_j = j;
      }
    }
    out[i] = best;
    nearest[i] = best_j;
  }
  const std::size_t idx = x.id();
  const std::size_t idy = y.id();
  return tape.record("row_min_sq_dist", std::move(out), {idx, idy},
                     [idx, idy, d, nearest = std::move(nearest)](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
                       const Tensor& xv = t.value(idx);
                       const Tensor& yv = t.value(idy);
                       Tensor* gx = t.requires_grad(idx) ? &grads.accumulator(idx, xv.shape()) : nullptr;
                       Tensor* gy = t.requires_grad(idy) ? &grads.accumulator(idy, yv.shape()) : nullptr;
                       for (std::size_t i = 0; i < nearest.size(); ++i) {
                         const std::size_t j = nearest[i];
                         for (std::size_t c = 0; c < d; ++c) {
                           const double diff = 2.0 * g[i] * (xv[i * d + c] - yv[j * d + c]);
                           if (gx) (*gx)[i * d + c] += diff;
                           if (gy) (*gy)[j * d + c] -= diff;
                         }
                       }
                     });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of an empty list");
  if (parts.size() == 1) return parts[0];
  Tape& tape = tape_of(parts[0]);
  const Shape& first = parts[0].value().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + to_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> lengths;
  for (const Var& p : parts) {
    if (&tape_of(p) != &tape) throw InvalidArgument("concat operands live on different tapes");
    const Shape& s = p.value().shape();
    bool ok = s.size() == first.size();
    for (std::size_t k = 0; ok && k < s.size(); ++k) ok = k == axis || s[k] == first[k];
    if (!ok) throw ShapeError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    out_shape[axis] += s[axis];
    ids.push_back(p.id());
    lengths.push_back(s[axis]);
  }
  const AxisSplit s = split_at(out_shape, axis);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& pv = parts[p].value();
    const std::size_t block = lengths[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data() + o * block, block, out.data() + o * s.length * s.inner + offset * s.inner);
    }
    offset += lengths[p];
  }
  return tape.record("concat", std::move(out), ids,
                     [ids, lengths, s](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < ids.size(); ++p) {
                         const std::size_t block = lengths[p] * s.inner;
                         if (t.requires_grad(ids[p])) {
                           Tensor& gp = grads.accumulator(ids[p], t.value(ids[p]).shape());
                           for (std::size_t o = 0; o < s.outer; ++o) {
                             const double* src = g.data() + o * s.length * s.inner + offset * s.inner;
                             double* dst = gp.data() + o * block;
                             for (std::size_t k = 0; k < block; ++k) dst[k] += src[k];
                           }
                         }
                         offset += lengths[p];
                       }
                     });
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  if (axis >= av.rank() || count == 0 || begin + count > av.dim(axis)) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") on axis " +
                     std::to_string(axis) + " out of range for " + to_string(av.shape()));
  }
  const AxisSplit s = split_at(av.shape(), axis);
  Shape out_shape = av.shape();
  out_shape[axis] = count;
  Tensor out(out_shape);
  const std::size_t block = count * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(av.data() + o * s.length * s.inner + begin * s.inner, block, out.data() + o * block);
  }
  const std::size_t ida = a.id();
  return tape.record("slice", std::move(out), {ida},
                     [ida, s, begin, block](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
                       Tensor& ga = grads.accumulator(ida, t.value(ida).shape());
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         double* dst = ga.data() + o * s.length * s.inner + begin * s.inner;
                         const double* src = g.data() + o * block;
                         for (std::size_t k = 0; k < block; ++k) dst[k] += src[k];
                       }
                     });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  if (av.rank() == 0 || rows.empty()) throw ShapeError("gather_rows: empty selection");
  const std::size_t width = av.size() / av.dim(0);
  Shape out_shape = av.shape();
  out_shape[0] = rows.size();
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= av.dim(0)) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[r]) + " out of range for " + to_string(av.shape()));
    }
    std::copy_n(av.data() + rows[r] * width, width, out.data() + r * width);
  }
  const std::size_t ida = a.id();
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return tape.record("gather_rows", std::move(out), {ida},
                     [ida, width, index = std::move(index)](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
                       Tensor& ga = grads.accumulator(ida, t.value(ida).shape());
                       for (std::size_t r = 0; r < index.size(); ++r) {
                         double* dst = ga.data() + index[r] * width;
                         const double* src = g.data() + r * width;
                         for (std::size_t k = 0; k < width; ++k) dst[k] += src[k];
                       }
                     });
}

Var reshape(const Var& a, Shape shape) {
  Tape& tape = tape_of(a);
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ida = a.id();
  return tape.record("reshape", std::move(out), {ida}, [ida](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
    Tensor& ga = grads.accumulator(ida, t.value(ida).shape());
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
  });
}

Var l2_normalize(const Var& v, double eps) {
  Tape& tape = tape_of(v);
  const Tensor& vv = v.value();
  if (vv.size() == 0 || (vv.rank() != 1 && vv.rank() != 2)) {
    throw ShapeError("l2_normalize needs a vector or matrix, got " + to_string(vv.shape()));
  }
  const std::size_t cols = vv.shape().back();
  const std::size_t rows = vv.size() / cols;
  Tensor out(vv.shape());
  std::vector<double> denom(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < cols; ++c) n2 += vv[r * cols + c] * vv[r * cols + c];
    denom[r] = std::max(std::sqrt(n2), eps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = vv[r * cols + c] / denom[r];
  }
  const std::size_t idv = v.id();
  return tape.record("l2_normalize", std::move(out), {idv},
                     [idv, rows, cols, eps, denom = std::move(denom)](const Tape& t, std::size_t self,
                                                                      const Tensor& g, Gradients& grads) {
                       const Tensor& y = t.value(self);
                       Tensor& gv = grads.accumulator(idv, t.value(idv).shape());
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* yr = y.data() + r * cols;
                         const double* gr = g.data() + r * cols;
                         double* dst = gv.data() + r * cols;
                         if (denom[r] > eps) {
                           double dot = 0.0;
                           for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
                           for (std::size_t c = 0; c < cols; ++c) dst[c] += (gr[c] - yr[c] * dot) / denom[r];
                         } else {
                           for (std::size_t c = 0; c < cols; ++c) dst[c] += gr[c] / eps;
                         }
                       }
                     });
}

Var quaternion_to_matrix(const Var& q) {
  Tape& tape = tape_of(q);
  const Tensor& qv = q.value();
  if (qv.size() != 4) throw ShapeError("quaternion_to_matrix needs 4 values, got " + to_string(qv.shape()));
  const double w = qv[0], x = qv[1], y = qv[2], z = qv[3];
  Tensor out({3, 3}, {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
                      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),  //
                      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)});
  const std::size_t idq = q.id();
  return tape.record("quaternion_to_matrix", std::move(out), {idq},
                     [idq](const Tape& t, std::size_t self, const Tensor& g, Gradients& grads) {
                       const Tensor& qv = t.value(idq);
                       const double w = qv[0], x = qv[1], y = qv[2], z = qv[3];
                       const double dw[9] = {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0};
                       const double dx[9] = {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x};
                       const double dy[9] = {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y};
                       const double dz[9] = {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0};
                       Tensor& gq = grads.accumulator(idq, qv.shape());
                       for (std::size_t k = 0; k < 9; ++k) {
                         gq[0] += g[k] * dw[k];
                         gq[1] += g[k] * dx[k];
                         gq[2] += g[k] * dy[k];
                         gq[3] += g[k] * dz[k];
                       }
                     });
}

}  // namespace partasm::ad
