#pragma once

// Dataset-level evaluation and the MetricsReport written by the CLI.

#include "partasm/json_io.hpp"
#include "partasm/metrics.hpp"
#include "partasm/training.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace partasm::report {

struct ShapeResult {
  std::string id;
  std::string category;
  std::size_t parts = 0;                 // after any missing-parts filtering
  std::vector<int> removed_groups;       // missing-parts protocol
  std::vector<std::string> removed_labels;
  metrics::SampleMetrics best;           // winner by minimum SCD
  std::size_t best_index = 0;
  metrics::Variability variability;      // over the E samples
  std::vector<std::string> labels;       // per part, in evaluation order
};

struct Aggregate {
  std::size_t shapes = 0;
  double scd = 0.0;  // means over shapes
  double pa = 0.0;
  std::optional<double> ca;  // over shapes with contacts
  std::size_t ca_shapes = 0;
  double variability_scd = 0.0;
  double variability_pa = 0.0;
  std::optional<double> variability_ca;
};

struct MetricsReport {
  train::RunConfig config;
  std::string checkpoint;
  std::uint64_t eval_seed = 0;
  std::vector<ShapeResult> shapes;
  Aggregate aggregate;
  metrics::LabelTable labels;
};

// Per shape: missing-parts filter (config.delete_fraction), part ordering
// (config.order), then best-of-E with noise seed derive_seed(eval_seed, k).
// Shapes are spread over `threads` workers (0: hardware concurrency).
MetricsReport evaluate_shapes(std::span<const ShapeRecord> shapes, const model::ModelParams& params,
                              const train::RunConfig& config, std::uint64_t eval_seed, std::size_t threads = 0);

Aggregate aggregate(std::span<const ShapeResult> shapes);

nlohmann::json to_json(const MetricsReport& report);
std::string per_shape_csv(const MetricsReport& report);
std::string label_csv(const MetricsReport& report);

}  // namespace partasm::report
