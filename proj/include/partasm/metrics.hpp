#pragma once

// Evaluation metrics: shape chamfer (SCD), part accuracy (PA), connectivity
// accuracy (CA), best-of-E evaluation, variability and the missing-parts protocol.

#include "partasm/geometry.hpp"
#include "partasm/model.hpp"
#include "partasm/shape.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace partasm::metrics {

struct EvalConfig {
  double tau_p = 0.01;
  double tau_c = 0.01;
  std::size_t samples = 10;
  bool match_equivalent_parts = true;

  void validate() const;
  bool operator==(const EvalConfig&) const = default;
};

double shape_chamfer_metric(std::span<const geo::Pose> pred, std::span<const geo::Pose> gt,
                            std::span<const geo::PointCloud> parts);

// Per-part chamfer(T_i(P_i), T*_i(P_i)) < tau_p; no matching.
std::vector<bool> part_correct(std::span<const geo::Pose> pred, std::span<const geo::Pose> gt,
                               std::span<const geo::PointCloud> parts, double tau_p);
double part_accuracy(std::span<const geo::Pose> pred, std::span<const geo::Pose> gt,
                     std::span<const geo::PointCloud> parts, double tau_p);

// Fraction of contacts with |T_i(c_ij) - T_j(c_ji)|^2 < tau_c; nullopt without contacts.
std::optional<double> connectivity_accuracy(std::span<const geo::Pose> pred, std::span<const geo::ContactPair> contacts,
                                            double tau_c);

struct SampleMetrics {
  double scd = 0.0;
  double pa = 0.0;
  std::optional<double> ca;
  std::vector<bool> part_ok;
};

// SCD, PA (after equivalence matching when enabled) and CA of one prediction.
SampleMetrics evaluate_prediction(const ShapeRecord& shape, std::span<const geo::Pose> pred, const EvalConfig& config);

struct BestOfK {
  SampleMetrics best;  // the sample with the lowest SCD; first on ties
  std::size_t best_index = 0;
  std::vector<SampleMetrics> samples;
};

// Selection over already-evaluated samples.
BestOfK select_best(std::vector<SampleMetrics> samples);

// E forward passes with z ~ N(0, I) from a generator seeded with `noise_seed`.
BestOfK best_of_k_eval(const ShapeRecord& shape, const model::ModelParams& params, const model::NetConfig& net,
                       const EvalConfig& config, std::uint64_t noise_seed);

struct Variability {
  double scd = 0.0;
  double pa = 0.0;
  std::optional<double> ca;
};

// max - min of each metric over the recorded samples.
Variability variability(std::span<const SampleMetrics> samples);
Variability variability(const ShapeRecord& shape, const model::ModelParams& params, const model::NetConfig& net,
                        const EvalConfig& config, std::uint64_t noise_seed);

struct FilterResult {
  ShapeRecord shape;
  std::vector<int> removed_groups;  // in removal order
  std::vector<std::size_t> removed_parts;
};

// Removes whole groups, smallest group volume (min canonical AABB volume over
// members) first, while the removed count stays <= floor(fraction * N) and at
// least one part remains. Stops at the first group that does not fit.
FilterResult missing_parts_filter(const ShapeRecord& shape, double delete_fraction);

struct LabelStats {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

using LabelTable = std::map<std::string, LabelStats>;

void accumulate_labels(LabelTable& table, std::span<const std::string> labels, const std::vector<bool>& part_ok);
LabelTable per_label_report(std::span<const std::string> labels, const std::vector<bool>& part_ok);

}  // namespace partasm::metrics
