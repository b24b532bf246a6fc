#include "partasm/optim.hpp"

#include "partasm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace partasm::ad {

void ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

std::size_t ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first == name) return i;
  }
  return entries_.size();
}

bool ParamSet::contains(std::string_view name) const { return index_of(name) < entries_.size(); }

Tensor& ParamSet::operator[](std::string_view name) {
  const std::size_t i = index_of(name);
  if (i == entries_.size()) throw InvalidArgument("unknown parameter '" + std::string(name) + "'");
  return entries_[i].second;
}

const Tensor& ParamSet::operator[](std::string_view name) const {
  const std::size_t i = index_of(name);
  if (i == entries_.size()) throw InvalidArgument("unknown parameter '" + std::string(name) + "'");
  return entries_[i].second;
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  out.entries_.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.entries_.emplace_back(name, Tensor::zeros_like(t));
  return out;
}

ParamSet& ParamSet::operator+=(const ParamSet& other) {
  if (other.size() != size()) throw ShapeError("parameter sets differ in size");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) {
      throw ShapeError("parameter '" + entries_[i].first + "' does not match '" + other.entries_[i].first + "'");
    }
    entries_[i].second += other.entries_[i].second;
  }
  return *this;
}

void ParamSet::scale(double factor) {
  for (auto& [name, t] : entries_) {
    for (double& v : t.values()) v *= factor;
  }
}

bool ParamSet::all_finite() const noexcept {
  return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return e.second.all_finite(); });
}

AdamState make_adam_state(const ParamSet& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamOptions& options) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state sets differ in size");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.entries()[i].second;
    const Tensor& g = grads.entries()[i].second;
    Tensor& m = state.first_moment.entries()[i].second;
    Tensor& v = state.second_moment.entries()[i].second;
    if (g.shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape()) {
      throw ShapeError("adam_step: shape mismatch for '" + params.entries()[i].first + "': param " +
                       to_string(p.shape()) + ", grad " + to_string(g.shape()));
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = options.beta1 * m[k] + (1.0 - options.beta1) * g[k];
      v[k] = options.beta2 * v[k] + (1.0 - options.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
  }
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ScalarFn& fn, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.borrow(p, false));
  const double value = fn(tape, leaves).item();
  if (!std::isfinite(value)) throw NumericError("grad_check: function value is not finite");
  return value;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& fn, std::span<const Tensor> params, const GradCheckOptions& options) {
  std::vector<Tensor> work(params.begin(), params.end());
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : work) leaves.push_back(tape.borrow(p, true));
    Var root = fn(tape, leaves);
    if (!std::isfinite(root.item())) throw NumericError("grad_check: function value is not finite");
    Gradients grads = tape.backward(root);
    for (const Var& leaf : leaves) analytic.push_back(grads.of(leaf));
  }

  double largest = 0.0;
  for (const Tensor& g : analytic) {
    for (double x : g.values()) largest = std::max(largest, std::abs(x));
  }
  const double floor = std::max(options.denominator_floor, options.relative_floor * largest);

  GradCheckReport report;
  report.denominator_floor = floor;
  std::mt19937_64 rng(options.seed);
  for (std::size_t t = 0; t < work.size(); ++t) {
    std::vector<std::size_t> coords(work[t].size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor != 0 && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t k : coords) {
      const double saved = work[t][k];
      work[t][k] = saved + options.h;
      const double plus = evaluate(fn, work);
      work[t][k] = saved - options.h;
      const double minus = evaluate(fn, work);
      work[t][k] = saved;
      const double numeric = (plus - minus) / (2.0 * options.h);
      const double err = relative_error(analytic[t][k], numeric, floor);
      ++report.coords_checked;
      if (err > report.max_rel_error || report.coords_checked == 1) {
        report.max_rel_error = std::max(err, report.max_rel_error);
        if (err >= report.max_rel_error) {
          report.worst_tensor = t;
          report.worst_coord = k;
          report.analytic = analytic[t][k];
          report.numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace partasm::ad
