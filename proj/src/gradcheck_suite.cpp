#include "partasm/gradcheck_suite.hpp"

#include "partasm/losses.hpp"
#include "partasm/model.hpp"
#include "partasm/ops.hpp"

#include <chrono>
#include <random>

namespace partasm::ad {

namespace {

class Suite {
 public:
  Suite(std::uint64_t seed, double h) : rng_(seed), h_(h) {}

  Tensor uniform(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t(std::move(shape));
    for (double& x : t.values()) x = d(rng_);
    return t;
  }

  // Magnitudes in [0.1, 1] with random sign, away from relu's kink.
  Tensor away_from_zero(Shape shape) {
    Tensor t = uniform(std::move(shape), 0.1, 1.0);
    std::bernoulli_distribution flip(0.5);
    for (double& x : t.values()) {
      if (flip(rng_)) x = -x;
    }
    return t;
  }

  // Scalarizes an op's output with a fixed random projection.
  void op(const std::string& name, std::vector<Tensor> inputs, std::function<Var(std::span<const Var>)> f) {
    Tape probe;
    std::vector<Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(probe.borrow(t, false));
    const Tensor projection = uniform(f(leaves).shape());
    ScalarFn fn = [f, projection](Tape& tape, std::span<const Var> params) {
      return sum_all(mul(f(params), tape.constant(projection)));
    };
    check(name, fn, inputs);
  }

  void check(const std::string& name, const ScalarFn& fn, const std::vector<Tensor>& params) {
    GradCheckOptions options;
    options.h = h_;
    suite_.entries.push_back({name, grad_check(fn, params, options)});
  }

  GradCheckSuite finish() {
    for (const auto& e : suite_.entries) {
      if (e.report.max_rel_error >= suite_.max_rel_error) {
        suite_.max_rel_error = e.report.max_rel_error;
        suite_.worst = e.name;
      }
    }
    return std::move(suite_);
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  double h_;
  GradCheckSuite suite_;
};

}  // namespace

GradCheckSuite run_gradcheck_suite(std::uint64_t seed, double h) {
  const auto start = std::chrono::steady_clock::now();
  Suite s(seed, h);
  using V = std::span<const Var>;

  s.op("matmul", {s.uniform({3, 4}), s.uniform({4, 5})}, [](V v) { return matmul(v[0], v[1]); });
  s.op("batched_matmul", {s.uniform({2, 3, 4}), s.uniform({2, 4, 2})},
       [](V v) { return batched_matmul(v[0], v[1]); });
  s.op("transpose", {s.uniform({3, 4})}, [](V v) { return transpose(v[0]); });
  s.op("linear", {s.uniform({4, 3}), s.uniform({3, 5}), s.uniform({5})},
       [](V v) { return linear(v[0], v[1], v[2]); });
  s.op("add (broadcast)", {s.uniform({3, 4}), s.uniform({4})}, [](V v) { return add(v[0], v[1]); });
  s.op("sub (broadcast)", {s.uniform({3, 4}), s.uniform({1, 4})}, [](V v) { return sub(v[0], v[1]); });
  s.op("mul (broadcast)", {s.uniform({2, 3, 4}), s.uniform({3, 4})}, [](V v) { return mul(v[0], v[1]); });
  s.op("div (broadcast)", {s.uniform({3, 4}), s.uniform({3, 1}, 0.5, 1.5)}, [](V v) { return div(v[0], v[1]); });
  s.op("scale", {s.uniform({3, 4})}, [](V v) { return scale(v[0], -2.5); });
  s.op("add_scalar", {s.uniform({3, 4})}, [](V v) { return add_scalar(v[0], 0.75); });
  s.op("relu", {s.away_from_zero({3, 4})}, [](V v) { return relu(v[0]); });
  s.op("tanh", {s.uniform({3, 4})}, [](V v) { return tanh(v[0]); });
  s.op("sigmoid", {s.uniform({3, 4}, -3, 3)}, [](V v) { return sigmoid(v[0]); });
  s.op("square", {s.uniform({3, 4})}, [](V v) { return square(v[0]); });
  s.op("sum axis 0", {s.uniform({3, 4})}, [](V v) { return sum(v[0], 0); });
  s.op("mean axis 1", {s.uniform({3, 4})}, [](V v) { return mean(v[0], 1); });
  s.op("max axis 0", {s.uniform({5, 4})}, [](V v) { return max(v[0], 0); });
  s.op("max axis 2", {s.uniform({2, 3, 4})}, [](V v) { return max(v[0], 2); });
  s.op("sum_all", {s.uniform({3, 4})}, [](V v) { return sum_all(v[0]); });
  s.op("mean_all", {s.uniform({3, 4})}, [](V v) { return mean_all(v[0]); });
  s.op("row_min_sq_dist", {s.uniform({6, 3}), s.uniform({5, 3})}, [](V v) { return row_min_sq_dist(v[0], v[1]); });
  s.op("concat axis 0", {s.uniform({2, 3}), s.uniform({1, 3})},
       [](V v) { return concat(std::vector<Var>{v[0], v[1]}, 0); });
  s.op("concat axis 1", {s.uniform({2, 3}), s.uniform({2, 2})},
       [](V v) { return concat(std::vector<Var>{v[0], v[1]}, 1); });
  s.op("slice", {s.uniform({4, 5})}, [](V v) { return slice(v[0], 1, 1, 3); });
  s.op("gather_rows", {s.uniform({4, 3})}, [](V v) {
    const std::vector<std::size_t> rows{2, 0, 2, 3};
    return gather_rows(v[0], rows);
  });
  s.op("reshape", {s.uniform({2, 6})}, [](V v) { return reshape(v[0], {3, 4}); });
  s.op("l2_normalize", {s.uniform({3, 4})}, [](V v) { return l2_normalize(v[0], 1e-8); });
  s.op("quaternion_to_matrix", {s.uniform({4})}, [](V v) { return quaternion_to_matrix(v[0]); });

  {
    // total_loss on a random 3-part, 30-point shape; raw rows are normalized
    // so perturbed quaternions stay unit-norm.
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<geo::PointCloud> parts;
    for (int k = 0; k < 3; ++k) {
      geo::PointCloud c(10, 3);
      for (Eigen::Index i = 0; i < 10; ++i) c.row(i) = Eigen::RowVector3d(g(s.rng()), g(s.rng()), g(s.rng())) * 0.2;
      parts.push_back(c);
    }
    Tensor gt({3, 7});
    for (std::size_t i = 0; i < 3; ++i) {
      Eigen::Quaterniond q(g(s.rng()), g(s.rng()), g(s.rng()), g(s.rng()));
      q.normalize();
      const double row[7] = {q.w(), q.x(), q.y(), q.z(), g(s.rng()) * 0.3, g(s.rng()) * 0.3, g(s.rng()) * 0.3};
      for (std::size_t k = 0; k < 7; ++k) gt.at(i, k) = row[k];
    }
    ScalarFn fn = [parts, gt](Tape& tape, std::span<const Var> p) {
      const Var pred = concat(std::vector<Var>{l2_normalize(slice(p[0], 1, 0, 4), 1e-8), slice(p[0], 1, 4, 3)}, 1);
      return loss::total_loss(pred, tape.constant(gt), parts, {}).total;
    };
    s.check("total_loss (3 parts, 30 points)", fn, {s.uniform({3, 7})});

    // The full network and MoN-free supervised loss on the same shape, small widths.
    model::NetConfig net;
    net.feature_dim = 6;
    net.hidden_dim = 5;
    net.pose_feat_dim = 4;
    net.noise_dim = 3;
    net.iterations = 2;
    net.encoder_dims = {4, 5};
    net.edge_hidden = 5;
    net.rel_hidden = 4;
    net.pose_hidden = 5;
    const model::ModelParams init = model::init_params(net, 7);
    std::vector<Tensor> tensors;
    for (const auto& [name, t] : init.entries()) tensors.push_back(t);
    std::vector<geo::PointCloud> centered = parts;
    for (auto& c : centered) c.rowwise() -= c.colwise().mean();
    const std::vector<double> z{0.3, -0.2, 0.5};
    ScalarFn net_fn = [init, centered, z, net, gt](Tape& tape, std::span<const Var> p) {
      const model::BoundParams bound(init, p);
      const model::ForwardResult out = model::forward(centered, z, bound, net);
      return loss::total_loss(out.poses.back(), tape.constant(gt), centered, {}).total;
    };
    s.check("network + total_loss (all parameters)", net_fn, tensors);
  }

  GradCheckSuite out = s.finish();
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace partasm::ad
