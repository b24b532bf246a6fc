#include "partasm/report.hpp"

#include "partasm/error.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <sstream>
#include <thread>

namespace partasm::report {

using nlohmann::json;

MetricsReport evaluate_shapes(std::span<const ShapeRecord> shapes, const model::ModelParams& params,
                              const train::RunConfig& config, std::uint64_t eval_seed,
                              std::size_t threads) {
  config.validate();
  model::check_params(params, config.net);
  MetricsReport report;
  report.config = config;
  report.eval_seed = eval_seed;
  const std::uint64_t order_seed = train::stream_seed(eval_seed, train::Stream::order);
  report.shapes.resize(shapes.size());
  auto evaluate_one = [&](std::size_t k) {
    const ShapeRecord& original = shapes[k];
    ShapeResult& r = report.shapes[k];
    r.id = original.id;
    r.category = original.category;
    ShapeRecord shape = original;
    if (config.delete_fraction > 0.0) {
      metrics::FilterResult f = metrics::missing_parts_filter(original, config.delete_fraction);
      r.removed_groups = f.removed_groups;
      for (std::size_t i : f.removed_parts) r.removed_labels.push_back(original.parts[i].label);
      shape = std::move(f.shape);
    }
    const data::Ordering order = data::order_parts(shape, {config.order, derive_seed(order_seed, k)});
    shape = data::apply_order(shape, order.perm);
    const metrics::BestOfK best =
        metrics::best_of_k_eval(shape, params, config.net, config.eval, derive_seed(eval_seed, k));
    r.parts = shape.parts.size();
    r.best = best.best;
    r.best_index = best.best_index;
    r.variability = metrics::variability(best.samples);
    r.labels = shape.labels();
  };

  // Shapes are independent and seeded by index, so results do not depend on the worker count.
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(threads ? threads : std::thread::hardware_concurrency(),
                                                      shapes.size()));
  if (workers <= 1) {
    for (std::size_t k = 0; k < shapes.size(); ++k) evaluate_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = next++; k < shapes.size(); k = next++) evaluate_one(k);
        } catch (...) {
          errors[w] = std::current_exception();
          next = shapes.size();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  for (const auto& r : report.shapes) metrics::accumulate_labels(report.labels, r.labels, r.best.part_ok);
  report.aggregate = aggregate(report.shapes);
  return report;
}

Aggregate aggregate(std::span<const ShapeResult> shapes) {
  Aggregate a;
  a.shapes = shapes.size();
  if (shapes.empty()) return a;
  double ca = 0.0, vca = 0.0;
  for (const auto& s : shapes) {
    a.scd += s.best.scd;
    a.pa += s.best.pa;
    a.variability_scd += s.variability.scd;
    a.variability_pa += s.variability.pa;
    if (s.best.ca) {
      ca += *s.best.ca;
      vca += s.variability.ca.value_or(0.0);
      ++a.ca_shapes;
    }
  }
  const double n = static_cast<double>(shapes.size());
  a.scd /= n;
  a.pa /= n;
  a.variability_scd /= n;
  a.variability_pa /= n;
  if (a.ca_shapes > 0) {
    a.ca = ca / static_cast<double>(a.ca_shapes);
    a.variability_ca = vca / static_cast<double>(a.ca_shapes);
  }
  return a;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const MetricsReport& report) {
  json shapes = json::array();
  for (const auto& s : report.shapes) {
    shapes.push_back({{"id", s.id},
                      {"category", s.category},
                      {"parts", s.parts},
                      {"removed_groups", s.removed_groups},
                      {"removed_labels", s.removed_labels},
                      {"scd", s.best.scd},
                      {"pa", s.best.pa},
                      {"ca", optional_json(s.best.ca)},
                      {"best_sample", s.best_index},
                      {"part_correct", s.best.part_ok},
                      {"labels", s.labels},
                      {"variability", {{"scd", s.variability.scd},
                                       {"pa", s.variability.pa},
                                       {"ca", optional_json(s.variability.ca)}}}});
  }
  json labels = json::object();
  for (const auto& [label, stats] : report.labels) {
    labels[label] = {{"correct", stats.correct}, {"total", stats.total}, {"accuracy", stats.accuracy()}};
  }
  const Aggregate& a = report.aggregate;
  return {{"config", report.config},
          {"checkpoint", report.checkpoint},
          {"eval_seed", report.eval_seed},
          {"selection", "single winner sample by minimum SCD; PA and CA from that sample"},
          {"thresholds", {{"tau_p", report.config.eval.tau_p}, {"tau_c", report.config.eval.tau_c}}},
          {"samples", report.config.eval.samples},
          {"aggregate", {{"shapes", a.shapes},
                         {"scd", a.scd},
                         {"pa", a.pa},
                         {"ca", optional_json(a.ca)},
                         {"ca_shapes", a.ca_shapes},
                         {"variability", {{"scd", a.variability_scd},
                                          {"pa", a.variability_pa},
                                          {"ca", optional_json(a.variability_ca)}}}}},
          {"per_label", labels},
          {"shapes", shapes}};
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : ""; }

}  // namespace

std::string per_shape_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "id,category,parts,scd,pa,ca,best_sample,v_scd,v_pa,v_ca,removed_groups\n";
  for (const auto& s : report.shapes) {
    std::string removed;
    for (std::size_t k = 0; k < s.removed_groups.size(); ++k) {
      removed += (k ? ";" : "") + std::to_string(s.removed_groups[k]);
    }
    out << s.id << ',' << s.category << ',' << s.parts << ',' << num(s.best.scd) << ',' << num(s.best.pa) << ','
        << num(s.best.ca) << ',' << s.best_index << ',' << num(s.variability.scd) << ',' << num(s.variability.pa)
        << ',' << num(s.variability.ca) << ',' << removed << '\n';
  }
  return out.str();
}

std::string label_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "label,correct,total,accuracy\n";
  for (const auto& [label, stats] : report.labels) {
    out << label << ',' << stats.correct << ',' << stats.total << ',' << num(stats.accuracy()) << '\n';
  }
  return out.str();
}

}  // namespace partasm::report
