#include "partasm/training.hpp"

#include "partasm/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace partasm::train {

void RunConfig::validate() const {
  net.validate();
  weights.validate();
  train.validate();
  eval.validate();
  if (!(adam.lr > 0) || !(adam.eps > 0) || adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1) {
    throw InvalidArgument("optimizer settings out of range");
  }
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(delete_fraction >= 0.0) || delete_fraction >= 1.0) throw InvalidArgument("delete_fraction must lie in [0, 1)");
}

std::uint64_t stream_seed(std::uint64_t run_seed, Stream s) {
  return derive_seed(run_seed, 0x5354524541ULL + static_cast<std::uint64_t>(s));
}

std::vector<ShapeRecord> order_shapes(std::span<const ShapeRecord> shapes, data::OrderKind kind, std::uint64_t seed) {
  std::vector<ShapeRecord> out;
  out.reserve(shapes.size());
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    const data::Ordering o = data::order_parts(shapes[k], {kind, derive_seed(seed, k)});
    out.push_back(data::apply_order(shapes[k], o.perm));
  }
  return out;
}

BatchGradient batch_gradient(std::span<const ShapeRecord* const> batch, const model::ModelParams& params,
                             const RunConfig& config, std::mt19937_64& noise_rng) {
  if (batch.empty()) throw InvalidArgument("batch_gradient: empty batch");
  BatchGradient out{params.zeros_like(), {}};
  for (const ShapeRecord* shape : batch) {
    const auto parts = shape->clouds();
    const auto gt = shape->gt_poses();
    const auto groups = shape->groups();
    ad::Tape tape;
    const model::BoundParams bound(tape, params, true);
    loss::MonResult r;
    try {
      r = loss::mon_loss(parts, gt, groups, bound, config.net, config.weights, config.train, noise_rng);
    } catch (const NumericError& e) {
      throw NumericError("non-finite value while evaluating shape '" + shape->id + "': " + e.what());
    }
    const double value = r.loss.item();
    if (!std::isfinite(value)) throw NumericError("non-finite loss on shape '" + shape->id + "'");
    const ad::Gradients g = tape.backward(r.loss);
    for (std::size_t k = 0; k < params.size(); ++k) {
      ad::Tensor grad = g.of(bound.vars()[k]);
      for (double x : grad.values()) {
        if (!std::isfinite(x)) {
          throw NumericError("non-finite gradient for '" + params.entries()[k].first + "' on shape '" + shape->id +
                             "'");
        }
      }
      out.grads.entries()[k].second += grad;
    }
    out.terms.loss += value;
    out.terms.translation += r.terms.translation.item();
    out.terms.rotation += r.terms.rotation.item();
    out.terms.shape += r.terms.shape.item();
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.grads.scale(inv);
  out.terms.loss *= inv;
  out.terms.translation *= inv;
  out.terms.rotation *= inv;
  out.terms.shape *= inv;
  return out;
}

TrainResult train_model(std::span<const ShapeRecord> shapes, const RunConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (shapes.empty()) throw InvalidArgument("train_model: no training shapes");
  const auto start = std::chrono::steady_clock::now();

  TrainResult result;
  result.params = model::init_params(config.net, stream_seed(config.seed, Stream::init));
  ad::AdamState state = ad::make_adam_state(result.params);
  std::mt19937_64 batch_rng(stream_seed(config.seed, Stream::batches));
  std::mt19937_64 noise_rng(stream_seed(config.seed, Stream::noise));

  const std::size_t b = std::min(config.batch_size, shapes.size());
  std::vector<std::size_t> epoch(shapes.size());
  std::iota(epoch.begin(), epoch.end(), 0);
  std::size_t cursor = epoch.size();
  std::vector<const ShapeRecord*> batch(b);

  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (std::size_t k = 0; k < b; ++k) {
      if (cursor == epoch.size()) {
        std::shuffle(epoch.begin(), epoch.end(), batch_rng);
        cursor = 0;
      }
      batch[k] = &shapes[epoch[cursor++]];
    }
    BatchGradient bg = batch_gradient(batch, result.params, config, noise_rng);
    ad::adam_step(result.params, bg.grads, state, config.adam);
    if (!result.params.all_finite()) throw NumericError("parameters became non-finite at step " + std::to_string(step));

    bg.terms.step = step;
    bg.terms.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(bg.terms);
    if (hooks.on_step) hooks.on_step(bg.terms);
    if (hooks.on_checkpoint && config.checkpoint_every > 0 && step % config.checkpoint_every == 0 &&
        step != config.steps) {
      hooks.on_checkpoint(step, result.params);
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(config.steps, result.params);
  return result;
}

}  // namespace partasm::train
