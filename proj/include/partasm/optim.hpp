#pragma once

#include "partasm/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace partasm::ad {

// Named tensors in insertion order. Used for learnable weights and their gradients.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  Tensor& operator[](std::string_view name);
  const Tensor& operator[](std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const noexcept;
  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  // Same names and shapes, all zero.
  ParamSet zeros_like() const;
  ParamSet& operator+=(const ParamSet& other);
  void scale(double factor);
  bool all_finite() const noexcept;

 private:
  std::size_t index_of(std::string_view name) const;

  std::vector<Entry> entries_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamOptions&) const = default;
};

struct AdamState {
  ParamSet first_moment;
  ParamSet second_moment;
  std::int64_t step = 0;
};

AdamState make_adam_state(const ParamSet& params);

// One bias-corrected Adam update of every entry in `params`.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamOptions& options);

// Builds a scalar on `tape` from leaves bound to the given parameters.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckOptions {
  double h = 1e-5;
  double denominator_floor = 1e-12;
  // The denominator is also at least relative_floor * max |analytic gradient|,
  // so coordinates far below the gradient scale are judged against that scale.
  double relative_floor = 1e-7;
  // 0 checks every coordinate; otherwise a seeded sample per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
  double denominator_floor = 0.0;  // the floor actually used
};

// Central-difference check of the analytic gradient of `fn` at `params`.
GradCheckReport grad_check(const ScalarFn& fn, std::span<const Tensor> params, const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor = 1e-12);

}  // namespace partasm::ad
