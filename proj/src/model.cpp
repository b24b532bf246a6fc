#include "partasm/model.hpp"

#include "partasm/error.hpp"
#include "partasm/ops.hpp"

#include <cmath>
#include <random>

namespace partasm::model {

using namespace partasm::ad;

void NetConfig::validate() const {
  if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
  if (noise_dim > hidden_dim) {
    throw InvalidArgument("noise_dim " + std::to_string(noise_dim) + " exceeds hidden_dim " +
                          std::to_string(hidden_dim));
  }
  for (std::size_t w : {feature_dim, hidden_dim, pose_feat_dim, encoder_dims[0], encoder_dims[1], edge_hidden,
                        rel_hidden, pose_hidden}) {
    if (w == 0) throw InvalidArgument("network widths must be positive");
  }
}

namespace {

constexpr std::size_t kPoseDim = 7;

struct LayerSpec {
  std::string name;
  std::size_t fan_in;
  std::size_t fan_out;
};

std::vector<LayerSpec> layer_specs(const NetConfig& c) {
  const std::size_t f = c.feature_dim;
  const std::size_t h = c.hidden_dim;
  return {
      {"enc.0", 3, c.encoder_dims[0]},
      {"enc.1", c.encoder_dims[0], c.encoder_dims[1]},
      {"enc.2", c.encoder_dims[1], f},
      {"edge.0", 2 * f, c.edge_hidden},
      {"edge.1", c.edge_hidden, f},
      {"feat.0", kPoseDim, c.pose_feat_dim},
      {"rel.0", 2 * c.pose_feat_dim, c.rel_hidden},
      {"rel.1", c.rel_hidden, 1},
      {"gru_fwd.x", 2 * f, 3 * h},
      {"gru_fwd.h", h, 3 * h},
      {"gru_rev.x", 2 * f, 3 * h},
      {"gru_rev.h", h, 3 * h},
      {"concat.0", 2 * h, f},
      {"pose.0", 2 * f + kPoseDim, c.pose_hidden},
      {"pose.1", c.pose_hidden, kPoseDim},
  };
}

}  // namespace

ModelParams init_params(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams params;
  for (const LayerSpec& spec : layer_specs(config)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({spec.fan_in, spec.fan_out});
    Tensor b({spec.fan_out});
    for (double& x : w.values()) x = dist(rng);
    for (double& x : b.values()) x = dist(rng);
    if (spec.name == "pose.1") {
      // Starts every prediction near the identity pose.
      for (double& x : w.values()) x *= 1e-2;
      for (std::size_t k = 0; k < kPoseDim; ++k) b[k] = k == 0 ? 1.0 : 0.0;
    }
    params.add(spec.name + ".w", std::move(w));
    params.add(spec.name + ".b", std::move(b));
  }
  return params;
}

void check_params(const ModelParams& params, const NetConfig& config) {
  config.validate();
  for (const LayerSpec& spec : layer_specs(config)) {
    const std::pair<std::string, Shape> expected[] = {{spec.name + ".w", {spec.fan_in, spec.fan_out}},
                                                      {spec.name + ".b", {spec.fan_out}}};
    for (const auto& [name, shape] : expected) {
      if (!params.contains(name)) throw ConfigError("parameter " + name + " missing for the configured network");
      const Shape& found = params[name].shape();
      if (found != shape) {
        throw ConfigError("parameter " + name + " has shape " + to_string(found) + " but the config expects " +
                          to_string(shape));
      }
    }
  }
  if (params.size() != 2 * layer_specs(config).size()) {
    throw ConfigError("parameter count " + std::to_string(params.size()) + " does not match the config's " +
                      std::to_string(2 * layer_specs(config).size()));
  }
}

BoundParams::BoundParams(Tape& tape, const ModelParams& params, bool requires_grad) : tape_(&tape) {
  vars_.reserve(params.size());
  for (const auto& [name, value] : params.entries()) {
    index_.emplace(name, vars_.size());
    vars_.push_back(tape.borrow(value, requires_grad));
  }
}

BoundParams::BoundParams(const ModelParams& params, std::span<const Var> vars)
    : tape_(vars.empty() ? nullptr : &vars.front().tape()), vars_(vars.begin(), vars.end()) {
  if (vars.size() != params.size() || vars.empty()) {
    throw InvalidArgument("BoundParams: " + std::to_string(vars.size()) + " vars for " +
                          std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < vars.size(); ++k) {
    if (vars[k].shape() != params.entries()[k].second.shape()) {
      throw ShapeError("BoundParams: var for " + params.entries()[k].first + " has shape " +
                       to_string(vars[k].shape()));
    }
    index_.emplace(params.entries()[k].first, k);
  }
}

const Var& BoundParams::operator[](std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw InvalidArgument("unknown parameter " + std::string(name));
  return vars_[it->second];
}

namespace {

Var dense(const Var& x, const BoundParams& p, const std::string& layer) {
  return linear(x, p[layer + ".w"], p[layer + ".b"]);
}

// out[i, j] = g([x_i, x_j]) for a two-layer relu MLP g, using the split first
// layer so the N^2 work starts after the input projection.
Var pairwise_mlp(const Var& x, const BoundParams& p, const std::string& first, const std::string& second) {
  const std::size_t n = x.shape()[0];
  const std::size_t d = x.shape()[1];
  const Var& w0 = p[first + ".w"];
  const std::size_t hidden = w0.shape()[1];
  const Var left = linear(x, slice(w0, 0, 0, d), p[first + ".b"]);
  const Var right = matmul(x, slice(w0, 0, d, d));
  const Var pre = relu(add(reshape(left, {n, 1, hidden}), reshape(right, {1, n, hidden})));
  return dense(reshape(pre, {n * n, hidden}), p, second);
}

void check_unit_quaternions(const Tensor& poses, std::string_view where) {
  if (poses.rank() != 2 || poses.dim(1) != kPoseDim) {
    throw ShapeError(std::string(where) + ": poses must be N x 7, got " + to_string(poses.shape()));
  }
  for (std::size_t i = 0; i < poses.dim(0); ++i) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k < 4; ++k) norm2 += poses.at(i, k) * poses.at(i, k);
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6) {
      throw InvalidArgument(std::string(where) + ": quaternion of part " + std::to_string(i) + " is not unit-norm");
    }
  }
}

}  // namespace

Var encode_parts(std::span<const geo::PointCloud> parts, const BoundParams& p) {
  if (parts.empty()) throw InvalidArgument("encode_parts: no parts");
  std::size_t total = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].rows() == 0) throw DegenerateInputError("encode_parts: part " + std::to_string(k) + " has no points");
    total += static_cast<std::size_t>(parts[k].rows());
  }
  Tensor stacked({total, 3});
  std::size_t row = 0;
  for (const auto& part : parts) {
    std::copy(part.data(), part.data() + part.size(), stacked.data() + row * 3);
    row += static_cast<std::size_t>(part.rows());
  }
  Var h = relu(dense(p.tape().leaf(std::move(stacked)), p, "enc.0"));
  h = relu(dense(h, p, "enc.1"));
  h = dense(h, p, "enc.2");
  const std::size_t f = h.shape()[1];
  std::vector<Var> pooled;
  pooled.reserve(parts.size());
  row = 0;
  for (const auto& part : parts) {
    const auto n = static_cast<std::size_t>(part.rows());
    pooled.push_back(reshape(max(slice(h, 0, row, n), 0), {1, f}));
    row += n;
  }
  return concat(pooled, 0);
}

Var attention_weights(const Var& poses, const BoundParams& p, std::size_t t) {
  check_unit_quaternions(poses.value(), "attention_weights");
  const std::size_t n = poses.shape()[0];
  if (t == 0) return p.tape().constant(Tensor({n, n}, 1.0));
  const Var feat = relu(dense(poses, p, "feat.0"));
  return reshape(sigmoid(pairwise_mlp(feat, p, "rel.0", "rel.1")), {n, n});
}

Var edge_messages(const Var& v, const BoundParams& p) {
  if (v.shape().size() != 2) throw ShapeError("edge_messages: features must be N x D, got " + to_string(v.shape()));
  const std::size_t n = v.shape()[0];
  const Var e = pairwise_mlp(v, p, "edge.0", "edge.1");
  return reshape(e, {n, n, e.shape()[1]});
}

Var aggregate(const Var& e, const Var& w) {
  const Shape& es = e.shape();
  const Shape& ws = w.shape();
  if (es.size() != 3 || ws.size() != 2 || ws[0] != es[0] || ws[1] != es[1] || es[0] != es[1]) {
    throw ShapeError("aggregate: incompatible messages " + to_string(es) + " and weights " + to_string(ws));
  }
  const std::size_t n = es[0];
  const Var row_sum = sum(w, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(row_sum.value()[i] > 0.0)) {
      throw InvalidArgument("aggregate: attention row " + std::to_string(i) + " sums to a non-positive value");
    }
  }
  const Var normalized = div(w, reshape(row_sum, {n, 1}));
  return reshape(batched_matmul(reshape(normalized, {n, 1, n}), e), {n, es[2]});
}

Var init_hidden(Tape& tape, std::span<const double> z, const NetConfig& config) {
  if (z.size() != config.noise_dim) {
    throw InvalidArgument("noise vector has " + std::to_string(z.size()) + " entries, expected " +
                          std::to_string(config.noise_dim));
  }
  if (z.size() > config.hidden_dim) throw InvalidArgument("noise_dim exceeds hidden_dim");
  Tensor h({1, config.hidden_dim});
  std::copy(z.begin(), z.end(), h.data());
  return tape.constant(std::move(h));
}

std::string_view direction_prefix(Direction d) { return d == Direction::forward ? "gru_fwd" : "gru_rev"; }

Var gru_step(const Var& x_proj, const Var& h, const BoundParams& p, Direction d) {
  const std::string prefix(direction_prefix(d));
  const std::size_t hd = h.shape()[1];
  const Var h_proj = dense(h, p, prefix + ".h");
  const Var reset = sigmoid(add(slice(x_proj, 1, 0, hd), slice(h_proj, 1, 0, hd)));
  const Var update = sigmoid(add(slice(x_proj, 1, hd, hd), slice(h_proj, 1, hd, hd)));
  const Var candidate = tanh(add(slice(x_proj, 1, 2 * hd, hd), mul(reset, slice(h_proj, 1, 2 * hd, hd))));
  // (1 - u) h + u n
  return add(h, mul(update, sub(candidate, h)));
}

Var gru_cell(const Var& r, const Var& h, const BoundParams& p, Direction d) {
  return gru_step(dense(r, p, std::string(direction_prefix(d)) + ".x"), h, p, d);
}

SweepOutput bidirectional_sweep(const Var& r, const Var& h_init, const BoundParams& p) {
  if (r.shape().size() != 2 || r.shape()[0] == 0) throw InvalidArgument("bidirectional_sweep: no parts");
  const std::size_t n = r.shape()[0];
  const Var xf = dense(r, p, "gru_fwd.x");
  const Var xr = dense(r, p, "gru_rev.x");
  std::vector<Var> a(n), b(n);
  Var h = h_init;
  for (std::size_t i = 0; i < n; ++i) {
    h = gru_step(slice(xf, 0, i, 1), h, p, Direction::forward);
    a[i] = h;
  }
  Var g = h_init;
  for (std::size_t i = n; i-- > 0;) {
    g = gru_step(slice(xr, 0, i, 1), g, p, Direction::reverse);
    b[i] = g;
  }
  return {concat(a, 0), concat(b, 0)};
}

Var fuse_directions(const Var& a, const Var& b, const BoundParams& p) {
  if (a.shape() != b.shape()) {
    throw ShapeError("fuse_directions: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  return relu(dense(concat({a, b}, 1), p, "concat.0"));
}

Var decode_pose(const Var& v_new, const Var& v0, const Var& prev_poses, const BoundParams& p) {
  check_unit_quaternions(prev_poses.value(), "decode_pose");
  const Var hidden = relu(dense(concat({v_new, v0, prev_poses}, 1), p, "pose.0"));
  const Var raw = dense(hidden, p, "pose.1");
  return concat({l2_normalize(slice(raw, 1, 0, 4), 1e-8), slice(raw, 1, 4, 3)}, 1);
}

ForwardResult forward_features(const Var& v0, std::span<const double> z, const BoundParams& p,
                               const NetConfig& config) {
  config.validate();
  if (v0.shape().size() != 2 || v0.shape()[0] == 0) throw InvalidArgument("forward: no parts");
  const std::size_t n = v0.shape()[0];
  Tape& tape = p.tape();
  Tensor identity({n, kPoseDim});
  for (std::size_t i = 0; i < n; ++i) identity.at(i, 0) = 1.0;
  Var poses = tape.constant(std::move(identity));
  const Var h_init = init_hidden(tape, z, config);
  Var v = v0;
  ForwardResult out;
  for (std::size_t t = 0; t < config.iterations; ++t) {
    const Var w = attention_weights(poses, p, t);
    const Var m = aggregate(edge_messages(v, p), w);
    const SweepOutput sweep = bidirectional_sweep(concat({v, m}, 1), h_init, p);
    v = fuse_directions(sweep.a, sweep.b, p);
    poses = decode_pose(v, v0, poses, p);
    out.attention.push_back(w);
    out.poses.push_back(poses);
  }
  return out;
}

void validate_parts(std::span<const geo::PointCloud> parts) {
  if (parts.empty()) throw InvalidArgument("forward: no parts");
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].rows() == 0) throw DegenerateInputError("forward: part " + std::to_string(k) + " has no points");
    const double offset = parts[k].colwise().mean().norm();
    if (offset > 1e-6) {
      throw InvalidArgument("forward: part " + std::to_string(k) + " is not canonical (centroid offset " +
                            std::to_string(offset) + ")");
    }
  }
}

ForwardResult forward(std::span<const geo::PointCloud> parts, std::span<const double> z, const BoundParams& p,
                      const NetConfig& config) {
  validate_parts(parts);
  return forward_features(encode_parts(parts, p), z, p, config);
}

std::vector<geo::Pose> poses_from_tensor(const Tensor& poses) {
  if (poses.rank() != 2 || poses.dim(1) != kPoseDim) {
    throw ShapeError("poses must be N x 7, got " + to_string(poses.shape()));
  }
  std::vector<geo::Pose> out(poses.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = geo::Pose::from_array(std::span<const double, 7>(poses.data() + i * kPoseDim, kPoseDim));
  }
  return out;
}

Tensor poses_to_tensor(std::span<const geo::Pose> poses) {
  Tensor out({poses.size(), kPoseDim});
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto row = poses[i].to_array();
    std::copy(row.begin(), row.end(), out.data() + i * kPoseDim);
  }
  return out;
}

std::vector<geo::Pose> predict(std::span<const geo::PointCloud> parts, std::span<const double> z,
                               const ModelParams& params, const NetConfig& config) {
  Tape tape;
  const BoundParams bound(tape, params, false);
  return poses_from_tensor(forward(parts, z, bound, config).poses.back().value());
}

}  // namespace partasm::model
