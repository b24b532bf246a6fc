#pragma once

// Mini-batch MoN training with Adam and gradient accumulation over shapes.

#include "partasm/dataset.hpp"
#include "partasm/losses.hpp"
#include "partasm/metrics.hpp"
#include "partasm/model.hpp"
#include "partasm/optim.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace partasm::train {

// Everything needed to reproduce a run; embedded in every artifact.
struct RunConfig {
  std::uint64_t seed = 0;
  model::NetConfig net;
  loss::LossWeights weights;
  loss::TrainConfig train;
  metrics::EvalConfig eval;
  ad::AdamOptions adam;
  std::size_t steps = 2000;
  std::size_t batch_size = 8;        // shapes per optimizer step
  std::size_t checkpoint_every = 0;  // 0: only at the end
  data::OrderKind order = data::OrderKind::top_down;
  double delete_fraction = 0.0;
  std::string dataset;
  std::string overfit;  // shape id; empty trains on the train split
  std::string out;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Independent generator streams derived from the run seed.
enum class Stream : std::uint64_t { init = 1, batches = 2, noise = 3, order = 4, eval_noise = 5 };
std::uint64_t stream_seed(std::uint64_t run_seed, Stream s);

// Reorders every shape's parts; shape k uses strategy seed derive_seed(seed, k).
std::vector<ShapeRecord> order_shapes(std::span<const ShapeRecord> shapes, data::OrderKind kind, std::uint64_t seed);

struct StepLog {
  std::size_t step = 0;  // 1-based
  double loss = 0.0;     // batch mean of the MoN loss
  double translation = 0.0;
  double rotation = 0.0;
  double shape = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(std::size_t step, const model::ModelParams&)> on_checkpoint;
};

struct TrainResult {
  model::ModelParams params;
  std::vector<StepLog> log;
};

// Shapes must already be in their training order. Each step draws
// min(batch_size, shapes) shapes from a seeded epoch shuffle. A non-finite loss
// or gradient throws NumericError naming the shape id.
TrainResult train_model(std::span<const ShapeRecord> shapes, const RunConfig& config, const TrainHooks& hooks = {});

// Batch-mean gradient of the MoN loss at `params`, as used by one step.
struct BatchGradient {
  ad::ParamSet grads;
  StepLog terms;
};
BatchGradient batch_gradient(std::span<const ShapeRecord* const> batch, const model::ModelParams& params,
                             const RunConfig& config, std::mt19937_64& noise_rng);

}  // namespace partasm::train
