#include "partasm/metrics.hpp"

#include "partasm/error.hpp"
#include "partasm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace partasm::metrics {

void EvalConfig::validate() const {
  if (!(tau_p > 0) || !(tau_c > 0)) throw InvalidArgument("metric thresholds must be positive");
  if (samples < 1) throw InvalidArgument("samples (E) must be >= 1");
}

namespace {

void check_counts(std::size_t pred, std::size_t gt, std::size_t parts, std::string_view where) {
  if (pred != gt || pred != parts) {
    throw ShapeError(std::string(where) + ": " + std::to_string(pred) + " predictions, " + std::to_string(gt) +
                     " targets, " + std::to_string(parts) + " parts");
  }
}

}  // namespace

double shape_chamfer_metric(std::span<const geo::Pose> pred, std::span<const geo::Pose> gt,
                            std::span<const geo::PointCloud> parts) {
  check_counts(pred.size(), gt.size(), parts.size(), "shape_chamfer_metric");
  if (parts.empty()) throw DegenerateInputError("shape_chamfer_metric: empty shape");
  std::vector<geo::PointCloud> ps, gs;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    ps.push_back(geo::apply_pose(pred[i], parts[i]));
    gs.push_back(geo::apply_pose(gt[i], parts[i]));
  }
  return geo::chamfer_distance(geo::concat_clouds(ps), geo::concat_clouds(gs));
}

std::vector<bool> part_correct(std::span<const geo::Pose> pred, std::span<const geo::Pose> gt,
                               std::span<const geo::PointCloud> parts, double tau_p) {
  check_counts(pred.size(), gt.size(), parts.size(), "part_accuracy");
  std::vector<bool> ok(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    ok[i] = geo::chamfer_distance(geo::apply_pose(pred[i], parts[i]), geo::apply_pose(gt[i], parts[i])) < tau_p;
  }
  return ok;
}

double part_accuracy(std::span<const geo::Pose> pred, std::span<const geo::Pose> gt,
                     std::span<const geo::PointCloud> parts, double tau_p) {
  const auto ok = part_correct(pred, gt, parts, tau_p);
  if (ok.empty()) throw DegenerateInputError("part_accuracy: empty shape");
  return static_cast<double>(std::count(ok.begin(), ok.end(), true)) / static_cast<double>(ok.size());
}

std::optional<double> connectivity_accuracy(std::span<const geo::Pose> pred, std::span<const geo::ContactPair> contacts,
                                            double tau_c) {
  if (contacts.empty()) return std::nullopt;
  std::size_t good = 0;
  for (const auto& c : contacts) {
    if (c.i >= pred.size() || c.j >= pred.size()) {
      throw InvalidArgument("connectivity_accuracy: contact (" + std::to_string(c.i) + ", " + std::to_string(c.j) +
                            ") out of range");
    }
    if ((pred[c.i].apply(c.c_ij) - pred[c.j].apply(c.c_ji)).squaredNorm() < tau_c) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(contacts.size());
}

SampleMetrics evaluate_prediction(const ShapeRecord& shape, std::span<const geo::Pose> pred, const EvalConfig& config) {
  config.validate();
  const auto parts = shape.clouds();
  std::vector<geo::Pose> gt = shape.gt_poses();
  check_counts(pred.size(), gt.size(), parts.size(), "evaluate_prediction");
  if (config.match_equivalent_parts) {
    const auto groups = shape.groups();
    gt = loss::permute(gt, loss::match_equivalent(pred, gt, parts, groups));
  }
  SampleMetrics m;
  m.scd = shape_chamfer_metric(pred, gt, parts);
  m.part_ok = part_correct(pred, gt, parts, config.tau_p);
  m.pa = static_cast<double>(std::count(m.part_ok.begin(), m.part_ok.end(), true)) /
         static_cast<double>(m.part_ok.size());
  m.ca = connectivity_accuracy(pred, shape.contacts, config.tau_c);
  return m;
}

BestOfK select_best(std::vector<SampleMetrics> samples) {
  if (samples.empty()) throw InvalidArgument("select_best: no samples");
  BestOfK out;
  for (std::size_t j = 1; j < samples.size(); ++j) {
    if (samples[j].scd < samples[out.best_index].scd) out.best_index = j;
  }
  out.best = samples[out.best_index];
  out.samples = std::move(samples);
  return out;
}

namespace {

std::vector<SampleMetrics> run_samples(const ShapeRecord& shape, const model::ModelParams& params,
                                       const model::NetConfig& net, const EvalConfig& config,
                                       std::uint64_t noise_seed) {
  config.validate();
  const auto parts = shape.clouds();
  std::mt19937_64 rng(noise_seed);
  ad::Tape tape;
  const model::BoundParams bound(tape, params, false);
  model::validate_parts(parts);
  const ad::Var v0 = model::encode_parts(parts, bound);
  std::vector<SampleMetrics> samples;
  for (std::size_t j = 0; j < config.samples; ++j) {
    const std::vector<double> z = loss::sample_noise(net.noise_dim, rng);
    const model::ForwardResult out = model::forward_features(v0, z, bound, net);
    samples.push_back(evaluate_prediction(shape, model::poses_from_tensor(out.poses.back().value()), config));
  }
  return samples;
}

}  // namespace

BestOfK best_of_k_eval(const ShapeRecord& shape, const model::ModelParams& params, const model::NetConfig& net,
                       const EvalConfig& config, std::uint64_t noise_seed) {
  return select_best(run_samples(shape, params, net, config, noise_seed));
}

Variability variability(std::span<const SampleMetrics> samples) {
  if (samples.empty()) throw InvalidArgument("variability: no samples");
  Variability v;
  auto spread = [&](auto get) {
    double lo = get(samples[0]), hi = lo;
    for (const auto& s : samples) {
      lo = std::min(lo, get(s));
      hi = std::max(hi, get(s));
    }
    return hi - lo;
  };
  v.scd = spread([](const SampleMetrics& s) { return s.scd; });
  v.pa = spread([](const SampleMetrics& s) { return s.pa; });
  if (samples[0].ca) v.ca = spread([](const SampleMetrics& s) { return *s.ca; });
  return v;
}

Variability variability(const ShapeRecord& shape, const model::ModelParams& params, const model::NetConfig& net,
                        const EvalConfig& config, std::uint64_t noise_seed) {
  return variability(run_samples(shape, params, net, config, noise_seed));
}

FilterResult missing_parts_filter(const ShapeRecord& shape, double delete_fraction) {
  if (!(delete_fraction >= 0.0) || delete_fraction >= 1.0) {
    throw InvalidArgument("delete fraction must lie in [0, 1), got " + std::to_string(delete_fraction));
  }
  const std::size_t n = shape.parts.size();
  const auto budget = static_cast<std::size_t>(std::floor(delete_fraction * static_cast<double>(n)));

  struct Group {
    int id;
    double volume;
    std::vector<std::size_t> members;
  };
  std::vector<Group> groups;
  for (std::size_t i = 0; i < n; ++i) {
    const PartRecord& part = shape.parts[i];
    const double vol = geo::aabb_volume(part.points);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) { return g.id == part.group_id; });
    if (it == groups.end()) {
      groups.push_back({part.group_id, vol, {i}});
    } else {
      it->volume = std::min(it->volume, vol);
      it->members.push_back(i);
    }
  }
  // Ties keep first-appearance order.
  std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.volume < b.volume; });

  FilterResult out;
  std::vector<char> removed(n, 0);
  for (const Group& g : groups) {
    const std::size_t after = out.removed_parts.size() + g.members.size();
    if (after > budget || after >= n) break;
    out.removed_groups.push_back(g.id);
    for (std::size_t i : g.members) {
      removed[i] = 1;
      out.removed_parts.push_back(i);
    }
  }
  std::sort(out.removed_parts.begin(), out.removed_parts.end());

  out.shape = shape;
  out.shape.parts.clear();
  std::vector<std::size_t> remap(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (removed[i]) continue;
    remap[i] = out.shape.parts.size();
    PartRecord part = shape.parts[i];
    part.order_index = out.shape.parts.size();
    out.shape.parts.push_back(std::move(part));
  }
  out.shape.contacts.clear();
  for (const auto& c : shape.contacts) {
    if (removed[c.i] || removed[c.j]) continue;
    geo::ContactPair kept = c;
    kept.i = remap[c.i];
    kept.j = remap[c.j];
    out.shape.contacts.push_back(kept);
  }
  return out;
}

void accumulate_labels(LabelTable& table, std::span<const std::string> labels, const std::vector<bool>& part_ok) {
  if (labels.size() != part_ok.size()) throw ShapeError("per_label_report: label and result counts differ");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    LabelStats& s = table[labels[i]];
    ++s.total;
    if (part_ok[i]) ++s.correct;
  }
}

LabelTable per_label_report(std::span<const std::string> labels, const std::vector<bool>& part_ok) {
  LabelTable table;
  accumulate_labels(table, labels, part_ok);
  return table;
}

}  // namespace partasm::metrics
