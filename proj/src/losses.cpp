#include "partasm/losses.hpp"

#include "partasm/error.hpp"
#include "partasm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace partasm::loss {

using namespace partasm::ad;

void LossWeights::validate() const {
  if (translation < 0 || rotation < 0 || shape < 0) throw InvalidArgument("loss weights must be non-negative");
  if (translation == 0 && rotation == 0 && shape == 0) throw InvalidArgument("at least one loss weight must be positive");
}

void TrainConfig::validate() const {
  if (mon_samples < 1) throw InvalidArgument("mon_samples must be >= 1");
}

namespace {

Tensor cloud_tensor(const geo::PointCloud& cloud) {
  Tensor t({static_cast<std::size_t>(cloud.rows()), 3});
  std::copy(cloud.data(), cloud.data() + cloud.size(), t.data());
  return t;
}

void check_parts(std::span<const geo::PointCloud> parts, std::size_t n, std::string_view where) {
  if (parts.size() != n) {
    throw ShapeError(std::string(where) + ": " + std::to_string(parts.size()) + " parts for " + std::to_string(n) +
                     " poses");
  }
  for (const auto& part : parts) {
    if (part.rows() == 0) throw DegenerateInputError(std::string(where) + ": empty part");
  }
}

void check_unit_rows(const Tensor& q, std::string_view where) {
  for (std::size_t i = 0; i < q.dim(0); ++i) {
    double n2 = 0.0;
    for (std::size_t k = 0; k < 4; ++k) n2 += q.at(i, k) * q.at(i, k);
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) {
      throw InvalidArgument(std::string(where) + ": quaternion " + std::to_string(i) + " is not unit-norm");
    }
  }
}

// P R(q)^T for one 1 x 4 quaternion row.
Var rotate(const Var& points, const Var& q) { return matmul(points, transpose(quaternion_to_matrix(q))); }

Var posed_union(const Var& poses, std::span<const Var> points) {
  std::vector<Var> posed;
  posed.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Var row = slice(poses, 0, i, 1);
    posed.push_back(add(rotate(points[i], slice(row, 1, 0, 4)), slice(row, 1, 4, 3)));
  }
  return concat(posed, 0);
}

}  // namespace

Var chamfer(const Var& x, const Var& y, geo::ChamferReduction reduction) {
  if (reduction == geo::ChamferReduction::mean) {
    return add(mean_all(row_min_sq_dist(x, y)), mean_all(row_min_sq_dist(y, x)));
  }
  return add(sum_all(row_min_sq_dist(x, y)), sum_all(row_min_sq_dist(y, x)));
}

Var translation_loss(const Var& pred_c, const Var& gt_c) {
  if (pred_c.shape() != gt_c.shape()) {
    throw ShapeError("translation_loss: " + to_string(pred_c.shape()) + " vs " + to_string(gt_c.shape()));
  }
  return sum_all(square(sub(pred_c, gt_c)));
}

Var rotation_loss(const Var& pred_q, const Var& gt_q, std::span<const geo::PointCloud> parts,
                  geo::ChamferReduction reduction) {
  if (pred_q.shape() != gt_q.shape() || pred_q.shape().size() != 2 || pred_q.shape()[1] != 4) {
    throw ShapeError("rotation_loss: " + to_string(pred_q.shape()) + " vs " + to_string(gt_q.shape()));
  }
  const std::size_t n = pred_q.shape()[0];
  check_parts(parts, n, "rotation_loss");
  check_unit_rows(pred_q.value(), "rotation_loss");
  check_unit_rows(gt_q.value(), "rotation_loss");
  Tape& tape = pred_q.tape();
  std::vector<Var> terms;
  terms.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Var points = tape.constant(cloud_tensor(parts[i]));
    terms.push_back(
        chamfer(rotate(points, slice(pred_q, 0, i, 1)), rotate(points, slice(gt_q, 0, i, 1)), reduction));
  }
  return sum(concat(terms, 0), 0);
}

Var shape_loss(const Var& pred_poses, const Var& gt_poses, std::span<const geo::PointCloud> parts,
               geo::ChamferReduction reduction) {
  if (pred_poses.shape() != gt_poses.shape() || pred_poses.shape().size() != 2 || pred_poses.shape()[1] != 7) {
    throw ShapeError("shape_loss: " + to_string(pred_poses.shape()) + " vs " + to_string(gt_poses.shape()));
  }
  const std::size_t n = pred_poses.shape()[0];
  if (n == 0) throw DegenerateInputError("shape_loss: empty shape");
  check_parts(parts, n, "shape_loss");
  Tape& tape = pred_poses.tape();
  std::vector<Var> points;
  points.reserve(n);
  for (const auto& part : parts) points.push_back(tape.constant(cloud_tensor(part)));
  return chamfer(posed_union(pred_poses, points), posed_union(gt_poses, points), reduction);
}

LossTerms total_loss(const Var& pred_poses, const Var& gt_poses, std::span<const geo::PointCloud> parts,
                     const LossWeights& weights) {
  weights.validate();
  LossTerms terms;
  terms.translation = translation_loss(slice(pred_poses, 1, 4, 3), slice(gt_poses, 1, 4, 3));
  terms.rotation = rotation_loss(slice(pred_poses, 1, 0, 4), slice(gt_poses, 1, 0, 4), parts, weights.chamfer);
  terms.shape = shape_loss(pred_poses, gt_poses, parts, weights.chamfer);
  terms.total = add(add(scale(terms.translation, weights.translation), scale(terms.rotation, weights.rotation)),
                    scale(terms.shape, weights.shape));
  return terms;
}

std::vector<std::size_t> match_equivalent(std::span<const geo::Pose> pred, std::span<const geo::Pose> gt,
                                          std::span<const geo::PointCloud> parts, std::span<const int> groups) {
  const std::size_t n = pred.size();
  if (gt.size() != n || parts.size() != n || groups.size() != n) {
    throw ShapeError("match_equivalent: inconsistent part counts");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);

  std::vector<std::vector<std::size_t>> members;
  {
    std::vector<int> seen;
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = std::find(seen.begin(), seen.end(), groups[i]);
      if (it == seen.end()) {
        seen.push_back(groups[i]);
        members.push_back({i});
      } else {
        members[static_cast<std::size_t>(it - seen.begin())].push_back(i);
      }
    }
  }

  for (const auto& group : members) {
    const std::size_t m = group.size();
    if (m < 2) continue;
    // cost[a][b]: prediction group[a] against ground truth group[b].
    std::vector<std::vector<double>> cost(m, std::vector<double>(m));
    std::vector<geo::PointCloud> gt_posed(m);
    for (std::size_t b = 0; b < m; ++b) gt_posed[b] = geo::apply_pose(gt[group[b]], parts[group[b]]);
    for (std::size_t a = 0; a < m; ++a) {
      const geo::PointCloud pred_posed = geo::apply_pose(pred[group[a]], parts[group[a]]);
      for (std::size_t b = 0; b < m; ++b) cost[a][b] = geo::chamfer_distance(pred_posed, gt_posed[b]);
    }

    std::vector<std::size_t> assign(m);
    if (m <= 5) {
      std::vector<std::size_t> trial(m);
      std::iota(trial.begin(), trial.end(), 0);
      double best = std::numeric_limits<double>::infinity();
      do {
        double total = 0.0;
        for (std::size_t a = 0; a < m; ++a) total += cost[a][trial[a]];
        if (total < best) {
          best = total;
          assign = trial;
        }
      } while (std::next_permutation(trial.begin(), trial.end()));
    } else {
      std::vector<char> pred_used(m, 0), gt_used(m, 0);
      for (std::size_t round = 0; round < m; ++round) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_a = 0, best_b = 0;
        for (std::size_t a = 0; a < m; ++a) {
          if (pred_used[a]) continue;
          for (std::size_t b = 0; b < m; ++b) {
            if (!gt_used[b] && cost[a][b] < best) {
              best = cost[a][b];
              best_a = a;
              best_b = b;
            }
          }
        }
        pred_used[best_a] = gt_used[best_b] = 1;
        assign[best_a] = best_b;
      }
    }
    for (std::size_t a = 0; a < m; ++a) perm[group[a]] = group[assign[a]];
  }
  return perm;
}

std::vector<geo::Pose> permute(std::span<const geo::Pose> poses, std::span<const std::size_t> perm) {
  std::vector<geo::Pose> out(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = poses[perm[i]];
  return out;
}

namespace {

LossTerms supervise_one(const Var& pred, std::span<const geo::Pose> gt, std::span<const geo::PointCloud> parts,
                        std::span<const int> groups, const LossWeights& weights, const TrainConfig& train) {
  Tape& tape = pred.tape();
  std::vector<geo::Pose> target(gt.begin(), gt.end());
  if (train.match_equivalent_parts) {
    const auto perm = match_equivalent(model::poses_from_tensor(pred.value()), gt, parts, groups);
    target = permute(gt, perm);
  }
  return total_loss(pred, tape.constant(model::poses_to_tensor(target)), parts, weights);
}

}  // namespace

LossTerms supervised_loss(const model::ForwardResult& out, std::span<const geo::Pose> gt,
                          std::span<const geo::PointCloud> parts, std::span<const int> groups,
                          const LossWeights& weights, const TrainConfig& train) {
  if (out.poses.empty()) throw InvalidArgument("supervised_loss: no pose sets");
  if (!train.supervise_all_iterations) return supervise_one(out.poses.back(), gt, parts, groups, weights, train);
  std::vector<LossTerms> each;
  for (const Var& set : out.poses) each.push_back(supervise_one(set, gt, parts, groups, weights, train));
  const double inv = 1.0 / static_cast<double>(each.size());
  auto average = [&](Var LossTerms::*field) {
    Var acc = each[0].*field;
    for (std::size_t k = 1; k < each.size(); ++k) acc = add(acc, each[k].*field);
    return scale(acc, inv);
  };
  return {average(&LossTerms::total), average(&LossTerms::translation), average(&LossTerms::rotation),
          average(&LossTerms::shape)};
}

MonResult mon_select(std::span<const LossTerms> samples) {
  if (samples.empty()) throw InvalidArgument("mon_select: K must be >= 1");
  MonResult result;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const double value = samples[j].total.item();
    result.sample_losses.push_back(value);
    if (j == 0 || value < result.sample_losses[result.best_index]) result.best_index = j;
  }
  result.terms = samples[result.best_index];
  result.loss = result.terms.total;
  return result;
}

std::vector<double> sample_noise(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(dim);
  for (double& x : z) x = normal(rng);
  return z;
}

MonResult mon_loss(std::span<const geo::PointCloud> parts, std::span<const geo::Pose> gt, std::span<const int> groups,
                   const model::BoundParams& params, const model::NetConfig& net, const LossWeights& weights,
                   const TrainConfig& train, std::mt19937_64& noise_rng) {
  train.validate();
  model::validate_parts(parts);
  const Var v0 = model::encode_parts(parts, params);
  std::vector<LossTerms> samples;
  std::vector<std::vector<double>> noise;
  for (std::size_t j = 0; j < train.mon_samples; ++j) {
    noise.push_back(sample_noise(net.noise_dim, noise_rng));
    const model::ForwardResult out = model::forward_features(v0, noise.back(), params, net);
    samples.push_back(supervised_loss(out, gt, parts, groups, weights, train));
  }
  MonResult result = mon_select(samples);
  result.noise = std::move(noise);
  return result;
}

}  // namespace partasm::loss
