#include "doctest.h"
#include "partasm/error.hpp"
#include "partasm/model.hpp"
#include "partasm/ops.hpp"
#include "test_support.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace partasm;
using namespace partasm::ad;
using namespace partasm::model;

namespace {

NetConfig small_config() {
  NetConfig c;
  c.feature_dim = 8;
  c.hidden_dim = 6;
  c.pose_feat_dim = 5;
  c.noise_dim = 2;
  c.iterations = 2;
  c.encoder_dims = {4, 5};
  c.edge_hidden = 7;
  c.rel_hidden = 4;
  c.pose_hidden = 6;
  return c;
}

std::vector<geo::PointCloud> random_parts(std::size_t count, std::size_t points, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<geo::PointCloud> parts;
  for (std::size_t k = 0; k < count; ++k) {
    geo::PointCloud c(static_cast<Eigen::Index>(points), 3);
    for (Eigen::Index i = 0; i < c.rows(); ++i) c.row(i) = Eigen::RowVector3d(g(rng) * 0.3, g(rng) * 0.2, g(rng) * 0.1);
    parts.push_back(geo::pca_canonicalize(c).canonical);
  }
  return parts;
}

Eigen::MatrixXd as_eigen(const Tensor& t) { return t.as_matrix(); }

Eigen::RowVectorXd relu_row(Eigen::RowVectorXd x) { return x.cwiseMax(0.0); }

// Reference f_edge([x; y]) from raw weights.
Eigen::RowVectorXd edge_oracle(const ModelParams& params, const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
  Eigen::RowVectorXd in(x.size() + y.size());
  in << x, y;
  const Eigen::RowVectorXd hidden =
      relu_row(in * as_eigen(params["edge.0.w"]) + as_eigen(params["edge.0.b"]).row(0));
  return hidden * as_eigen(params["edge.1.w"]) + as_eigen(params["edge.1.b"]).row(0);
}

Eigen::RowVectorXd sigmoid_row(const Eigen::RowVectorXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

// Closed-form gated update written directly from the cell equations.
Eigen::RowVectorXd gru_oracle(const ModelParams& params, const std::string& prefix, const Eigen::RowVectorXd& r,
                              const Eigen::RowVectorXd& h) {
  const Eigen::Index hd = h.size();
  const Eigen::RowVectorXd xp = r * as_eigen(params[prefix + ".x.w"]) + as_eigen(params[prefix + ".x.b"]).row(0);
  const Eigen::RowVectorXd hp = h * as_eigen(params[prefix + ".h.w"]) + as_eigen(params[prefix + ".h.b"]).row(0);
  const Eigen::RowVectorXd reset = sigmoid_row(xp.segment(0, hd) + hp.segment(0, hd));
  const Eigen::RowVectorXd update = sigmoid_row(xp.segment(hd, hd) + hp.segment(hd, hd));
  const Eigen::RowVectorXd cand =
      (xp.segment(2 * hd, hd) + reset.cwiseProduct(hp.segment(2 * hd, hd))).unaryExpr([](double v) {
        return std::tanh(v);
      });
  return (Eigen::RowVectorXd::Ones(hd) - update).cwiseProduct(h) + update.cwiseProduct(cand);
}

std::vector<double> random_noise(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> z(n);
  for (double& x : z) x = g(rng);
  return z;
}

// Checks the gradient of a scalar built from bound parameters, over every parameter.
double model_grad_error(const ModelParams& params, const std::function<Var(const BoundParams&)>& fn, double h = 1e-4) {
  std::vector<Tensor> values;
  for (const auto& [name, value] : params.entries()) values.push_back(value);
  GradCheckOptions options;
  options.h = h;
  const GradCheckReport report =
      grad_check([&](Tape&, std::span<const Var> vars) { return fn(BoundParams(params, vars)); }, values, options);
  if (report.max_rel_error > 1e-6) MESSAGE("worst at " << params.entries()[report.worst_tensor].first << "[" << report.worst_coord << "] analytic "
                   << report.analytic << " numeric " << report.numeric);
  CHECK(report.coords_checked > 0);
  return report.max_rel_error;
}

}  // namespace

TEST_CASE("init_params") {
  const NetConfig config = small_config();
  const ModelParams a = init_params(config, 11);
  const ModelParams b = init_params(config, 11);
  const ModelParams c = init_params(config, 12);
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const Tensor& ta = a.entries()[k].second;
    const Tensor& tb = b.entries()[k].second;
    const Tensor& tc = c.entries()[k].second;
    CHECK(std::equal(ta.values().begin(), ta.values().end(), tb.values().begin()));
    differs = differs || !std::equal(ta.values().begin(), ta.values().end(), tc.values().begin());
  }
  CHECK(differs);
  CHECK_NOTHROW(check_params(a, config));
  NetConfig other = config;
  other.hidden_dim = 7;
  CHECK_THROWS_AS(check_params(a, other), ConfigError);

  NetConfig bad = config;
  bad.noise_dim = bad.hidden_dim + 1;
  CHECK_THROWS_AS(init_params(bad, 1), InvalidArgument);
  bad = config;
  bad.iterations = 0;
  CHECK_THROWS_AS(init_params(bad, 1), InvalidArgument);
}

TEST_CASE("fresh network predicts near-identity poses") {
  const NetConfig config;  // full size
  const ModelParams params = init_params(config, 3);
  std::mt19937_64 rng(3);
  const auto parts = random_parts(4, 50, rng);
  const auto z = random_noise(config.noise_dim, rng);
  const auto poses = predict(parts, z, params, config);
  REQUIRE(poses.size() == 4);
  for (const auto& pose : poses) {
    CHECK(std::abs(pose.rotation.norm() - 1.0) <= 1e-9);
    CHECK(std::abs(pose.rotation.w()) >= 0.99);
    CHECK(pose.translation.norm() <= 0.05);
  }
}

TEST_CASE("encode_parts") {
  const NetConfig config = small_config();
  const ModelParams params = init_params(config, 5);
  std::mt19937_64 rng(5);
  auto parts = random_parts(3, 20, rng);
  Tape tape;
  const BoundParams p(tape, params, false);
  const Tensor v = encode_parts(parts, p).value();
  CHECK(v.shape() == Shape{3, config.feature_dim});

  SUBCASE("point permutation and duplication leave features unchanged") {
    auto shuffled = parts;
    std::vector<Eigen::Index> order(20);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    shuffled[1] = parts[1](order, Eigen::all);
    geo::PointCloud doubled(40, 3);
    doubled << parts[2], parts[2];
    shuffled[2] = doubled;
    const Tensor w = encode_parts(shuffled, p).value();
    for (std::size_t k = 0; k < v.size(); ++k) CHECK(w[k] == v[k]);
  }
  SUBCASE("identical clouds give identical rows") {
    const std::vector<geo::PointCloud> twins{parts[0], parts[1], parts[0]};
    const Tensor w = encode_parts(twins, p).value();
    for (std::size_t k = 0; k < config.feature_dim; ++k) CHECK(w.at(0, k) == w.at(2, k));
  }
  SUBCASE("empty part") {
    const std::vector<geo::PointCloud> bad{parts[0], geo::PointCloud(0, 3)};
    CHECK_THROWS_AS(encode_parts(bad, p), DegenerateInputError);
  }
}

TEST_CASE("attention_weights") {
  const NetConfig config = small_config();
  const ModelParams params = init_params(config, 6);
  Tape tape;
  const BoundParams p(tape, params, false);
  std::vector<geo::Pose> same(5);
  for (auto& pose : same) pose.translation = geo::Vec3(0.1, -0.2, 0.3);
  const Var poses = tape.constant(poses_to_tensor(same));

  const Tensor w0 = attention_weights(poses, p, 0).value();
  CHECK(w0.shape() == Shape{5, 5});
  for (double x : w0.values()) CHECK(x == 1.0);

  const Tensor w1 = attention_weights(poses, p, 1).value();
  for (double x : w1.values()) CHECK(x == w1[0]);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<geo::Pose> varied(4);
  for (auto& pose : varied) {
    pose.rotation = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized();
    pose.translation = geo::Vec3(g(rng), g(rng), g(rng));
  }
  const Tensor w2 = attention_weights(tape.constant(poses_to_tensor(varied)), p, 2).value();
  for (double x : w2.values()) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }

  Tensor bad = poses_to_tensor(same);
  bad.at(0, 0) = 2.0;
  CHECK_THROWS_AS(attention_weights(tape.constant(bad), p, 1), InvalidArgument);
}

TEST_CASE("edge_messages") {
  const NetConfig config = small_config();
  const ModelParams params = init_params(config, 7);
  std::mt19937_64 rng(7);
  Tape tape;
  const BoundParams p(tape, params, false);
  const std::size_t f = config.feature_dim;

  SUBCASE("matches the concatenated-input oracle, ordered pairs differ") {
    const Tensor v = testing::random_tensor({3, f}, rng);
    const Tensor e = edge_messages(tape.constant(v), p).value();
    CHECK(e.shape() == Shape{3, 3, f});
    const Eigen::MatrixXd vm = as_eigen(v);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        const Eigen::RowVectorXd ref = edge_oracle(params, vm.row(static_cast<Eigen::Index>(i)),
                                                   vm.row(static_cast<Eigen::Index>(j)));
        for (std::size_t k = 0; k < f; ++k) CHECK(e[(i * 3 + j) * f + k] == doctest::Approx(ref(k)).epsilon(1e-12));
      }
    }
    double diff = 0.0;
    for (std::size_t k = 0; k < f; ++k) diff += std::abs(e[(0 * 3 + 1) * f + k] - e[(1 * 3 + 0) * f + k]);
    CHECK(diff > 1e-6);
  }
  SUBCASE("single part is a self loop") {
    const Tensor v = testing::random_tensor({1, f}, rng);
    const Tensor e = edge_messages(tape.constant(v), p).value();
    const Eigen::RowVectorXd ref = edge_oracle(params, as_eigen(v).row(0), as_eigen(v).row(0));
    for (std::size_t k = 0; k < f; ++k) CHECK(e[k] == doctest::Approx(ref(k)).epsilon(1e-12));
  }
  SUBCASE("equal features give equal messages") {
    const Tensor row = testing::random_tensor({1, f}, rng);
    Tensor v({4, f});
    for (std::size_t i = 0; i < 4; ++i) std::copy(row.data(), row.data() + f, v.data() + i * f);
    const Tensor e = edge_messages(tape.constant(v), p).value();
    for (std::size_t k = 0; k < e.size(); ++k) CHECK(e[k] == e[k % f]);
  }
}

TEST_CASE("aggregate") {
  std::mt19937_64 rng(8);
  const Tensor e = testing::random_tensor({3, 3, 4}, rng);
  Tape tape;
  const Var ev = tape.constant(e);

  SUBCASE("unit weights give the row mean") {
    const Tensor m = aggregate(ev, tape.constant(Tensor({3, 3}, 1.0))).value();
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t k = 0; k < 4; ++k) {
        const double mean = (e[(i * 3 + 0) * 4 + k] + e[(i * 3 + 1) * 4 + k] + e[(i * 3 + 2) * 4 + k]) / 3.0;
        CHECK(m.at(i, k) == doctest::Approx(mean).epsilon(1e-14));
      }
    }
  }
  SUBCASE("selection limit") {
    Tensor w({3, 3}, 1e-12);
    w.at(0, 2) = 1.0;
    const Tensor m = aggregate(ev, tape.constant(w)).value();
    for (std::size_t k = 0; k < 4; ++k) CHECK(m.at(0, k) == doctest::Approx(e[(0 * 3 + 2) * 4 + k]).epsilon(1e-9));
  }
  SUBCASE("row scaling invariance") {
    const Tensor w = testing::random_tensor({3, 3}, rng, 0.1, 1.0);
    Tensor scaled = w;
    for (std::size_t j = 0; j < 3; ++j) scaled.at(1, j) *= 37.5;
    const Tensor m1 = aggregate(ev, tape.constant(w)).value();
    const Tensor m2 = aggregate(ev, tape.constant(scaled)).value();
    for (std::size_t k = 0; k < m1.size(); ++k) CHECK(m1[k] == doctest::Approx(m2[k]).epsilon(1e-13));
  }
  SUBCASE("non-positive row") {
    Tensor w({3, 3}, 1.0);
    for (std::size_t j = 0; j < 3; ++j) w.at(2, j) = 0.0;
    CHECK_THROWS_AS(aggregate(ev, tape.constant(w)), InvalidArgument);
  }
  SUBCASE("gradients") {
    const Tensor w = testing::random_tensor({3, 3}, rng, 0.1, 1.0);
    auto wrt_w = [&](Tape& t, const Var& x) { return sum_all(square(aggregate(t.constant(e), x))); };
    auto wrt_e = [&](Tape& t, const Var& x) { return sum_all(square(aggregate(x, t.constant(w)))); };
    CHECK(testing::fd_check(wrt_w, w, 1e-6) <= 1e-6);
    CHECK(testing::fd_check(wrt_e, e, 1e-6) <= 1e-6);
  }
}

TEST_CASE("init_hidden") {
  Tape tape;
  NetConfig config;
  config.noise_dim = 0;
  const Tensor zero = init_hidden(tape, {}, config).value();
  CHECK(zero.shape() == Shape{1, 256});
  for (double x : zero.values()) CHECK(x == 0.0);

  config.noise_dim = 32;
  std::vector<double> z(32);
  std::iota(z.begin(), z.end(), 1.0);
  const Tensor h = init_hidden(tape, z, config).value();
  for (std::size_t k = 0; k < 256; ++k) CHECK(h[k] == (k < 32 ? static_cast<double>(k + 1) : 0.0));

  const std::vector<double> zeros(32, 0.0);
  const Tensor hz = init_hidden(tape, zeros, config).value();
  CHECK(std::equal(hz.values().begin(), hz.values().end(), zero.values().begin()));

  CHECK_THROWS_AS(init_hidden(tape, std::vector<double>(3), config), InvalidArgument);
}

TEST_CASE("gru_cell") {
  const NetConfig config = small_config();
  const std::size_t hd = config.hidden_dim;
  const std::size_t rd = 2 * config.feature_dim;
  std::mt19937_64 rng(9);
  const Tensor r = testing::random_tensor({1, rd}, rng);
  const Tensor h = testing::random_tensor({1, hd}, rng);

  SUBCASE("zero parameters halve the state") {
    ModelParams zeros = init_params(config, 1).zeros_like();
    Tape tape;
    const BoundParams p(tape, zeros, false);
    const Tensor out = gru_cell(tape.constant(r), tape.constant(h), p, Direction::forward).value();
    for (std::size_t k = 0; k < hd; ++k) CHECK(out[k] == doctest::Approx(0.5 * h[k]).epsilon(1e-15));
  }
  SUBCASE("matches the closed-form oracle and is deterministic") {
    const ModelParams params = init_params(config, 2);
    Tape tape;
    const BoundParams p(tape, params, false);
    for (Direction d : {Direction::forward, Direction::reverse}) {
      const Tensor out = gru_cell(tape.constant(r), tape.constant(h), p, d).value();
      const Tensor again = gru_cell(tape.constant(r), tape.constant(h), p, d).value();
      const Eigen::RowVectorXd ref =
          gru_oracle(params, std::string(direction_prefix(d)), as_eigen(r).row(0), as_eigen(h).row(0));
      for (std::size_t k = 0; k < hd; ++k) {
        CHECK(out[k] == doctest::Approx(ref(static_cast<Eigen::Index>(k))).epsilon(1e-13));
        CHECK(out[k] == again[k]);
      }
    }
  }
  SUBCASE("gradient of the squared norm matches finite differences") {
    const ModelParams params = init_params(config, 3);
    const double err = model_grad_error(params, [&](const BoundParams& p) {
      Tape& t = p.tape();
      return sum_all(square(gru_cell(t.constant(r), t.constant(h), p, Direction::forward)));
    });
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("bidirectional_sweep") {
  const NetConfig config = small_config();
  const ModelParams params = init_params(config, 10);
  const std::size_t hd = config.hidden_dim;
  const std::size_t rd = 2 * config.feature_dim;
  std::mt19937_64 rng(10);
  const Tensor h0 = testing::random_tensor({1, hd}, rng);
  const Tensor r = testing::random_tensor({4, rd}, rng);
  Tape tape;
  const BoundParams p(tape, params, false);
  const Eigen::MatrixXd rm = as_eigen(r);

  SUBCASE("single part") {
    const Tensor r1 = testing::random_tensor({1, rd}, rng);
    const SweepOutput out = bidirectional_sweep(tape.constant(r1), tape.constant(h0), p);
    const Eigen::RowVectorXd a = gru_oracle(params, "gru_fwd", as_eigen(r1).row(0), as_eigen(h0).row(0));
    const Eigen::RowVectorXd b = gru_oracle(params, "gru_rev", as_eigen(r1).row(0), as_eigen(h0).row(0));
    for (std::size_t k = 0; k < hd; ++k) {
      CHECK(out.a.value()[k] == doctest::Approx(a(static_cast<Eigen::Index>(k))).epsilon(1e-13));
      CHECK(out.b.value()[k] == doctest::Approx(b(static_cast<Eigen::Index>(k))).epsilon(1e-13));
    }
  }
  SUBCASE("recomputed recurrences in both directions") {
    const SweepOutput out = bidirectional_sweep(tape.constant(r), tape.constant(h0), p);
    Eigen::RowVectorXd h = as_eigen(h0).row(0);
    for (Eigen::Index i = 0; i < 4; ++i) {
      h = gru_oracle(params, "gru_fwd", rm.row(i), h);
      for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(hd); ++k) {
        CHECK(out.a.value().at(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) ==
              doctest::Approx(h(k)).epsilon(1e-12));
      }
    }
    // The reverse direction over the reversed sequence equals the forward recurrence shape.
    Eigen::RowVectorXd g = as_eigen(h0).row(0);
    for (Eigen::Index i = 3; i >= 0; --i) {
      g = gru_oracle(params, "gru_rev", rm.row(i), g);
      for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(hd); ++k) {
        CHECK(out.b.value().at(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) ==
              doctest::Approx(g(k)).epsilon(1e-12));
      }
    }
  }
  SUBCASE("reversing the order with shared weights swaps the directions") {
    ModelParams shared = params;
    for (const char* suffix : {".x.w", ".x.b", ".h.w", ".h.b"}) {
      shared[std::string("gru_rev") + suffix] = shared[std::string("gru_fwd") + suffix];
    }
    Tape t2;
    const BoundParams ps(t2, shared, false);
    Tensor reversed({4, rd});
    for (std::size_t i = 0; i < 4; ++i) std::copy(r.data() + (3 - i) * rd, r.data() + (4 - i) * rd, reversed.data() + i * rd);
    const SweepOutput fwd = bidirectional_sweep(t2.constant(r), t2.constant(h0), ps);
    const SweepOutput rev = bidirectional_sweep(t2.constant(reversed), t2.constant(h0), ps);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t k = 0; k < hd; ++k) {
        CHECK(rev.a.value().at(i, k) == doctest::Approx(fwd.b.value().at(3 - i, k)).epsilon(1e-13));
        CHECK(rev.b.value().at(i, k) == doctest::Approx(fwd.a.value().at(3 - i, k)).epsilon(1e-13));
      }
    }
  }
  SUBCASE("causality") {
    const std::size_t k = 1;
    Tensor perturbed = r;
    perturbed.at(k, 0) += 0.5;
    const SweepOutput base = bidirectional_sweep(tape.constant(r), tape.constant(h0), p);
    const SweepOutput moved = bidirectional_sweep(tape.constant(perturbed), tape.constant(h0), p);
    for (std::size_t i = 0; i < 4; ++i) {
      bool a_changed = false, b_changed = false;
      for (std::size_t c = 0; c < hd; ++c) {
        a_changed = a_changed || base.a.value().at(i, c) != moved.a.value().at(i, c);
        b_changed = b_changed || base.b.value().at(i, c) != moved.b.value().at(i, c);
      }
      CHECK(a_changed == (i >= k));
      CHECK(b_changed == (i <= k));
    }
  }
  SUBCASE("no parts") {
    CHECK_THROWS(bidirectional_sweep(tape.constant(Tensor({0, rd})), tape.constant(h0), p));
  }
}

TEST_CASE("fuse_directions") {
  const NetConfig config = small_config();
  const ModelParams params = init_params(config, 13);
  const std::size_t hd = config.hidden_dim;
  std::mt19937_64 rng(13);
  const Tensor a = testing::random_tensor({3, hd}, rng);
  const Tensor b = testing::random_tensor({3, hd}, rng);
  Tape tape;
  const BoundParams p(tape, params, false);
  const Tensor out = fuse_directions(tape.constant(a), tape.constant(b), p).value();
  CHECK(out.shape() == Shape{3, config.feature_dim});

  Tensor b2 = b;
  for (std::size_t k = 0; k < hd; ++k) b2.at(2, k) += 1.0;
  const Tensor out2 = fuse_directions(tape.constant(a), tape.constant(b2), p).value();
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < config.feature_dim; ++k) CHECK(out.at(i, k) == out2.at(i, k));
  }
  // a = b: rows with equal inputs agree.
  Tensor same({2, hd});
  std::copy(a.data(), a.data() + hd, same.data());
  std::copy(a.data(), a.data() + hd, same.data() + hd);
  const Tensor twin = fuse_directions(tape.constant(same), tape.constant(same), p).value();
  for (std::size_t k = 0; k < config.feature_dim; ++k) CHECK(twin.at(0, k) == twin.at(1, k));

  const double err = model_grad_error(params, [&](const BoundParams& bp) {
    Tape& t = bp.tape();
    return sum_all(square(fuse_directions(t.constant(a), t.constant(b), bp)));
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("decode_pose") {
  const NetConfig config = small_config();
  std::mt19937_64 rng(14);
  const std::size_t f = config.feature_dim;
  const Tensor v = testing::random_tensor({3, f}, rng);
  const Tensor v0 = testing::random_tensor({3, f}, rng);
  std::vector<geo::Pose> prev(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& pose : prev) pose.rotation = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized();
  const Tensor prev_t = poses_to_tensor(prev);

  SUBCASE("fresh parameters decode near identity") {
    const ModelParams params = init_params(config, 15);
    Tape tape;
    const BoundParams p(tape, params, false);
    const auto poses = poses_from_tensor(decode_pose(tape.constant(v), tape.constant(v0), tape.constant(prev_t), p).value());
    for (const auto& pose : poses) {
      CHECK(std::abs(pose.rotation.norm() - 1.0) <= 1e-9);
      CHECK(pose.rotation.w() >= 0.95);
      CHECK(pose.translation.norm() <= 0.05);
    }
  }
  SUBCASE("quaternions are unit for arbitrary weights") {
    ModelParams params = init_params(config, 16);
    for (double& x : params["pose.1.w"].values()) x *= 300.0;
    Tape tape;
    const BoundParams p(tape, params, false);
    const auto poses = poses_from_tensor(decode_pose(tape.constant(v), tape.constant(v0), tape.constant(prev_t), p).value());
    for (const auto& pose : poses) CHECK(std::abs(pose.rotation.norm() - 1.0) <= 1e-9);
  }
  SUBCASE("gradient through the normalization") {
    ModelParams params = init_params(config, 17);
    for (double& x : params["pose.1.w"].values()) x *= 50.0;
    const Tensor weights = testing::random_tensor({3, 7}, rng);
    const double err = model_grad_error(params, [&](const BoundParams& bp) {
      Tape& t = bp.tape();
      const Var out = decode_pose(t.constant(v), t.constant(v0), t.constant(prev_t), bp);
      return sum_all(mul(out, t.constant(weights)));
    });
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("forward") {
  const NetConfig config = small_config();
  const ModelParams params = init_params(config, 18);
  std::mt19937_64 rng(18);
  const auto parts = random_parts(4, 25, rng);
  const auto z = random_noise(config.noise_dim, rng);

  SUBCASE("one pose set per iteration with unit quaternions") {
    NetConfig three = config;
    three.iterations = 3;
    Tape tape;
    const BoundParams p(tape, params, false);
    const ForwardResult out = forward(parts, z, p, three);
    REQUIRE(out.poses.size() == 3);
    for (const Var& set : out.poses) {
      CHECK(set.shape() == Shape{4, 7});
      for (const auto& pose : poses_from_tensor(set.value())) CHECK(std::abs(pose.rotation.norm() - 1.0) <= 1e-9);
    }
    for (double w : out.attention[0].value().values()) CHECK(w == 1.0);
  }
  SUBCASE("noise-free forward is bit-identical across runs") {
    NetConfig quiet = config;
    quiet.noise_dim = 0;
    const auto a = predict(parts, {}, params, quiet);
    const auto b = predict(parts, {}, params, quiet);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].to_array() == b[i].to_array());
  }
  SUBCASE("point order within parts does not matter") {
    auto shuffled = parts;
    for (auto& part : shuffled) {
      std::vector<Eigen::Index> order(static_cast<std::size_t>(part.rows()));
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      part = geo::PointCloud(part(order, Eigen::all));
    }
    const auto a = predict(parts, z, params, config);
    const auto b = predict(shuffled, z, params, config);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto x = a[i].to_array();
      const auto y = b[i].to_array();
      for (std::size_t k = 0; k < 7; ++k) CHECK(x[k] == doctest::Approx(y[k]).epsilon(1e-12));
    }
  }
  SUBCASE("identical parts at different positions get different poses") {
    const std::vector<geo::PointCloud> legs{parts[0], parts[1], parts[1], parts[1]};
    const auto poses = predict(legs, z, params, config);
    CHECK((poses[1].translation - poses[2].translation).norm() > 1e-9);
    CHECK((poses[2].translation - poses[3].translation).norm() > 1e-9);
  }
  SUBCASE("input validation") {
    auto moved = parts;
    moved[2].col(0).array() += 0.5;
    CHECK_THROWS_AS(predict(moved, z, params, config), InvalidArgument);
    CHECK_THROWS_AS(predict({}, z, params, config), InvalidArgument);
    CHECK_THROWS_AS(predict(parts, std::vector<double>(5), params, config), InvalidArgument);
  }
  SUBCASE("end-to-end gradient over every parameter") {
    const auto small_parts = random_parts(3, 10, rng);
    const Tensor weights = testing::random_tensor({3, 7}, rng);
    const double err = model_grad_error(params, [&](const BoundParams& bp) {
      Tape& t = bp.tape();
      const ForwardResult out = forward(small_parts, z, bp, config);
      return sum_all(mul(out.poses.back(), t.constant(weights)));
    });
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("checkpoint round trip") {
  const NetConfig config = small_config();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.seed = 99;
  ckpt.params = init_params(config, 99);
  ckpt.metadata_json = R"({"note":"x"})";
  const auto dir = std::filesystem::temp_directory_path() / "partasm_test_model";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "ckpt.bin").string();
  save_checkpoint(path, ckpt);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config == config);
  CHECK(back.seed == 99);
  CHECK(back.metadata_json == R"({"note":"x"})");
  REQUIRE(back.params.size() == ckpt.params.size());
  for (std::size_t k = 0; k < back.params.size(); ++k) {
    CHECK(back.params.entries()[k].first == ckpt.params.entries()[k].first);
    const Tensor& a = back.params.entries()[k].second;
    const Tensor& b = ckpt.params.entries()[k].second;
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  }

  std::string blob;
  {
    std::ifstream in(path, std::ios::binary);
    blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  const std::string truncated_path = (dir / "truncated.bin").string();
  std::ofstream(truncated_path, std::ios::binary).write(blob.data(), static_cast<std::streamsize>(blob.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(truncated_path), ParseError);

  std::string wrong_version = blob;
  wrong_version[8] = 7;
  const std::string version_path = (dir / "version.bin").string();
  std::ofstream(version_path, std::ios::binary).write(wrong_version.data(), static_cast<std::streamsize>(wrong_version.size()));
  try {
    load_checkpoint(version_path);
    FAIL("expected a version error");
  } catch (const VersionError& e) {
    CHECK(e.found() == 7);
    CHECK(e.expected() == 1);
  }
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.bin").string()), IoError);
}
