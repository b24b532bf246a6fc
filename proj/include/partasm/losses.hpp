#pragma once

// Differentiable training objectives over predicted N x 7 pose rows.

#include "partasm/geometry.hpp"
#include "partasm/model.hpp"
#include "partasm/tensor.hpp"

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace partasm::loss {

using ad::Tensor;
using ad::Var;

struct LossWeights {
  double translation = 1.0;
  double rotation = 1.0;
  double shape = 1.0;
  geo::ChamferReduction chamfer = geo::ChamferReduction::mean;  // used by the rotation and shape terms

  // Throws InvalidArgument for a negative weight or all weights zero.
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct TrainConfig {
  std::size_t mon_samples = 5;
  bool match_equivalent_parts = true;
  bool supervise_all_iterations = false;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Mean nearest-neighbour squared distance in both directions, on the tape.
Var chamfer(const Var& x, const Var& y, geo::ChamferReduction reduction = geo::ChamferReduction::mean);

// sum_i |c_i - c*_i|^2 over N x 3 centres.
Var translation_loss(const Var& pred_c, const Var& gt_c);

// sum_i chamfer(R(q_i) P_i, R(q*_i) P_i) over N x 4 quaternions.
Var rotation_loss(const Var& pred_q, const Var& gt_q, std::span<const geo::PointCloud> parts,
                  geo::ChamferReduction reduction = geo::ChamferReduction::mean);

// chamfer between the unions of all posed parts.
Var shape_loss(const Var& pred_poses, const Var& gt_poses, std::span<const geo::PointCloud> parts,
               geo::ChamferReduction reduction = geo::ChamferReduction::mean);

struct LossTerms {
  Var total;
  Var translation;
  Var rotation;
  Var shape;
};

// Weighted sum of the three terms; terms with zero weight are still evaluated for logging.
LossTerms total_loss(const Var& pred_poses, const Var& gt_poses, std::span<const geo::PointCloud> parts,
                     const LossWeights& weights);

// perm[i] is the ground-truth index assigned to prediction i. Within each
// group the assignment minimizes total chamfer between pred-posed and
// gt-posed clouds: exhaustive up to 5 members, greedy beyond.
std::vector<std::size_t> match_equivalent(std::span<const geo::Pose> pred, std::span<const geo::Pose> gt,
                                          std::span<const geo::PointCloud> parts, std::span<const int> groups);

std::vector<geo::Pose> permute(std::span<const geo::Pose> poses, std::span<const std::size_t> perm);

// Supervision of one forward pass: optional matching, then the weighted loss
// on the final iteration (or the mean over iterations).
LossTerms supervised_loss(const model::ForwardResult& out, std::span<const geo::Pose> gt,
                          std::span<const geo::PointCloud> parts, std::span<const int> groups,
                          const LossWeights& weights, const TrainConfig& train);

struct MonResult {
  Var loss;                           // the minimizing sample's total, still on the tape
  LossTerms terms;                    // components of the minimizing sample
  std::size_t best_index = 0;
  std::vector<double> sample_losses;  // every sample's total
  std::vector<std::vector<double>> noise;
};

// Minimum over already-built candidate losses; first index on ties.
MonResult mon_select(std::span<const LossTerms> samples);

// K forward passes with z ~ N(0, I) drawn from `noise_rng`, sharing the encoder
// features; gradients flow only through the minimizing sample.
MonResult mon_loss(std::span<const geo::PointCloud> parts, std::span<const geo::Pose> gt, std::span<const int> groups,
                   const model::BoundParams& params, const model::NetConfig& net, const LossWeights& weights,
                   const TrainConfig& train, std::mt19937_64& noise_rng);

std::vector<double> sample_noise(std::size_t dim, std::mt19937_64& rng);

}  // namespace partasm::loss
