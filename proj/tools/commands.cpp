#include "commands.hpp"

#include "partasm/dataset.hpp"
#include "partasm/error.hpp"
#include "partasm/gradcheck_suite.hpp"
#include "partasm/json_io.hpp"
#include "partasm/report.hpp"
#include "partasm/training.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace partasm::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kGradTolerance = 1e-3;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string opt17(const std::optional<double>& v) { return v ? g17(*v) : ""; }

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

json parse_json_file(const fs::path& path) {
  const std::string text = data::read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

// A bare RunConfig, or any artifact that embeds one under "config".
train::RunConfig load_run_config(const fs::path& path) {
  const json j = parse_json_file(path);
  try {
    if (j.is_object() && j.contains("config") && j.at("config").is_object() && !j.contains("net")) {
      return j.at("config").get<train::RunConfig>();
    }
    return j.get<train::RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

train::RunConfig config_from_checkpoint(const model::Checkpoint& ck, const std::string& path) {
  train::RunConfig c;
  try {
    const json meta = json::parse(ck.metadata_json);
    if (!meta.empty()) c = meta.get<train::RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint " + path + " carries an unreadable run config: " + e.what());
  }
  if (!(c.net == ck.config)) {
    throw ConfigError("checkpoint " + path + " embeds net " + json(c.net).dump() + " but stores weights for " +
                      json(ck.config).dump());
  }
  return c;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw InvalidArgument("empty list '" + text + "'");
  return out;
}

std::size_t parse_count(const std::string& text) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || text[0] == '-') throw InvalidArgument("not a count: '" + text + "'");
  return static_cast<std::size_t>(v);
}

// Flags shared by every subcommand.
struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* config_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c, bool out_required = true) {
  c.seed_opt = sub->add_option("--seed", c.seed, "Base random seed");
  c.config_opt = sub->add_option("--config", c.config, "JSON run configuration; flags override its values");
  auto* out = sub->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
}

// ---------------------------------------------------------------- gen-data

struct GenFlags {
  Common common;
  std::string categories = "table";
  std::size_t count = 0;
  std::size_t points = 1000;
  CLI::Option* points_opt = nullptr;
};

void cmd_gen_data(const GenFlags& f) {
  data::GenParams params;
  if (f.common.config_opt->count()) {
    const json j = parse_json_file(f.common.config);
    try {
      params = (j.contains("generator") ? j.at("generator") : j).get<data::GenParams>();
    } catch (const json::exception& e) {
      throw ConfigError(f.common.config + ": " + e.what());
    }
  }
  if (f.points_opt->count()) params.point_budget = f.points;
  std::vector<data::Category> mix;
  for (const auto& name : split_list(f.categories)) mix.push_back(data::parse_category(name));

  const data::Dataset d = data::build_dataset(f.count, mix, f.common.seed, params);
  data::write_dataset(d, f.common.out);

  std::size_t lo = SIZE_MAX, hi = 0, total = 0;
  for (const auto& s : d.shapes) {
    lo = std::min(lo, s.parts.size());
    hi = std::max(hi, s.parts.size());
    total += s.parts.size();
  }
  std::printf("generated %zu shapes (%s, seed %llu) in %s\n", d.shapes.size(), f.categories.c_str(),
              static_cast<unsigned long long>(f.common.seed), f.common.out.c_str());
  std::printf("split train %zu / val %zu / test %zu\n", d.split.train.size(), d.split.val.size(),
              d.split.test.size());
  std::printf("parts per shape min %zu max %zu mean %.2f; %zu points per shape\n", lo, hi,
              static_cast<double>(total) / static_cast<double>(d.shapes.size()), params.point_budget);
}

// ---------------------------------------------------------------- train

struct TrainFlags {
  Common common;
  std::string dataset;
  std::string overfit;
  std::size_t noise_dim = 0;
  std::size_t mon_samples = 0;
  std::string order;
  std::size_t steps = 0;
  std::size_t batch_size = 0;
  std::size_t iterations = 0;
  double lr = 0.0;
  std::size_t checkpoint_every = 0;
  std::size_t log_every = 50;
  CLI::Option* overfit_opt = nullptr;
  CLI::Option* noise_opt = nullptr;
  CLI::Option* mon_opt = nullptr;
  CLI::Option* order_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
  CLI::Option* batch_opt = nullptr;
  CLI::Option* iter_opt = nullptr;
  CLI::Option* lr_opt = nullptr;
  CLI::Option* ckpt_opt = nullptr;
};

train::RunConfig base_config(const Common& c) {
  train::RunConfig config = c.config_opt->count() ? load_run_config(c.config) : train::RunConfig{};
  if (c.seed_opt->count()) config.seed = c.seed;
  return config;
}

train::RunConfig train_config(const TrainFlags& f) {
  train::RunConfig c = base_config(f.common);
  if (f.overfit_opt->count()) c.overfit = f.overfit;
  if (f.noise_opt->count()) c.net.noise_dim = f.noise_dim;
  if (f.mon_opt->count()) c.train.mon_samples = f.mon_samples;
  if (f.order_opt->count()) c.order = data::parse_order(f.order);
  if (f.steps_opt->count()) c.steps = f.steps;
  if (f.batch_opt->count()) c.batch_size = f.batch_size;
  if (f.iter_opt->count()) c.net.iterations = f.iterations;
  if (f.lr_opt->count()) c.adam.lr = f.lr;
  if (f.ckpt_opt->count()) c.checkpoint_every = f.checkpoint_every;
  c.dataset = f.dataset;
  c.out = f.common.out;
  c.validate();
  return c;
}

std::vector<ShapeRecord> training_shapes(const data::Dataset& d, const train::RunConfig& c) {
  if (!c.overfit.empty()) return {d.find(c.overfit)};
  return d.subset(d.split.train);
}

struct TrainOutcome {
  train::TrainResult result;
  std::size_t shapes = 0;
};

// Writes config.json, train_log.csv and checkpoints into config.out.
TrainOutcome run_training(const train::RunConfig& config, const data::Dataset& d, std::size_t log_every,
                          bool verbose) {
  const fs::path out = config.out;
  make_dir(out);
  const json config_json = config;
  data::write_text_file(out / "config.json", config_json.dump(2) + "\n");

  const std::vector<ShapeRecord> raw = training_shapes(d, config);
  const std::vector<ShapeRecord> shapes =
      train::order_shapes(raw, config.order, train::stream_seed(config.seed, train::Stream::order));

  std::ofstream log(out / "train_log.csv", std::ios::trunc);
  if (!log) throw IoError("cannot open '" + (out / "train_log.csv").string() + "' for writing");
  log << "# run_config " << config_json.dump() << "\n";
  log << "step,loss,translation,rotation,shape,wall_seconds\n";

  train::TrainHooks hooks;
  hooks.on_step = [&](const train::StepLog& s) {
    log << s.step << ',' << g17(s.loss) << ',' << g17(s.translation) << ',' << g17(s.rotation) << ','
        << g17(s.shape) << ',' << g17(s.wall_seconds) << '\n';
    if (verbose && (s.step == 1 || s.step == config.steps || (log_every > 0 && s.step % log_every == 0))) {
      std::printf("step %6zu  loss %.6e  t %.3e  r %.3e  s %.3e  %.1fs\n", s.step, s.loss, s.translation,
                  s.rotation, s.shape, s.wall_seconds);
      std::fflush(stdout);
    }
  };
  hooks.on_checkpoint = [&](std::size_t step, const model::ModelParams& params) {
    char name[40];
    if (step == config.steps) {
      std::snprintf(name, sizeof name, "model.ckpt");
    } else {
      std::snprintf(name, sizeof name, "model_step%06zu.ckpt", step);
    }
    model::save_checkpoint((out / name).string(), {config.net, config.seed, params, config_json.dump()});
  };

  TrainOutcome outcome;
  outcome.shapes = shapes.size();
  try {
    outcome.result = train::train_model(shapes, config, hooks);
  } catch (const NumericError& e) {
    log.flush();
    const json dump = {{"error", e.what()}, {"config", config_json}};
    data::write_text_file(out / "failure.json", dump.dump(2) + "\n");
    throw;
  }
  return outcome;
}

void cmd_train(const TrainFlags& f) {
  const train::RunConfig config = train_config(f);
  const data::Dataset d = data::load_dataset(config.dataset);
  const TrainOutcome o = run_training(config, d, f.log_every, true);
  const auto& log = o.result.log;
  const double first = log.front().loss, last = log.back().loss;
  std::printf("trained %zu steps on %zu shapes (order %s, seed %llu): loss %.6e -> %.6e (%.2f%% lower) in %.1fs\n",
              log.size(), o.shapes, data::to_string(config.order).c_str(),
              static_cast<unsigned long long>(config.seed), first, last, 100.0 * (1.0 - last / first),
              log.back().wall_seconds);
  std::printf("checkpoint %s\n", (fs::path(config.out) / "model.ckpt").string().c_str());
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
  Common common;
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::vector<std::string> shapes;
  std::size_t samples = 0;
  std::size_t noise_dim = 0;
  double delete_fraction = 0.0;
  std::string order;
  std::size_t threads = 0;
  CLI::Option* samples_opt = nullptr;
  CLI::Option* noise_opt = nullptr;
  CLI::Option* delete_opt = nullptr;
  CLI::Option* order_opt = nullptr;
};

std::vector<ShapeRecord> select_shapes(const data::Dataset& d, const std::string& split,
                                       const std::vector<std::string>& ids) {
  if (!ids.empty()) return d.subset(ids);
  if (split == "train") return d.subset(d.split.train);
  if (split == "val") return d.subset(d.split.val);
  if (split == "test") return d.subset(d.split.test);
  if (split == "all") return d.shapes;
  throw InvalidArgument("unknown split '" + split + "' (expected train, val, test or all)");
}

void write_report(const report::MetricsReport& r, const fs::path& out) {
  make_dir(out);
  const std::string header = "# run_config " + json(r.config).dump() + "\n# eval_seed " +
                             std::to_string(r.eval_seed) + " checkpoint " + r.checkpoint + "\n";
  data::write_text_file(out / "metrics.json", report::to_json(r).dump(2) + "\n");
  data::write_text_file(out / "per_shape.csv", header + report::per_shape_csv(r));
  data::write_text_file(out / "per_label.csv", header + report::label_csv(r));
}

void print_aggregate(const report::Aggregate& a, std::size_t samples) {
  std::printf("shapes %zu  best-of-%zu  SCD %.6e  PA %.4f  CA %s\n", a.shapes, samples, a.scd, a.pa,
              a.ca ? std::to_string(*a.ca).c_str() : "n/a");
  std::printf("variability V_E  SCD %.6e  PA %.4f  CA %s\n", a.variability_scd, a.variability_pa,
              a.variability_ca ? std::to_string(*a.variability_ca).c_str() : "n/a");
}

void cmd_eval(const EvalFlags& f) {
  const model::Checkpoint ck = model::load_checkpoint(f.checkpoint);
  train::RunConfig config = config_from_checkpoint(ck, f.checkpoint);
  if (f.common.config_opt->count()) {
    const train::RunConfig requested = load_run_config(f.common.config);
    if (!(requested.net == ck.config)) {
      throw ConfigError("config " + f.common.config + " net " + json(requested.net).dump() +
                        " does not match checkpoint " + f.checkpoint + " net " + json(ck.config).dump());
    }
    config.eval = requested.eval;
    config.order = requested.order;
    config.delete_fraction = requested.delete_fraction;
  }
  if (f.noise_opt->count() && f.noise_dim != ck.config.noise_dim) {
    throw ConfigError("--noise-dim " + std::to_string(f.noise_dim) + " does not match checkpoint " + f.checkpoint +
                      " noise_dim " + std::to_string(ck.config.noise_dim));
  }
  if (f.samples_opt->count()) config.eval.samples = f.samples;
  if (f.delete_opt->count()) config.delete_fraction = f.delete_fraction;
  if (f.order_opt->count()) config.order = data::parse_order(f.order);
  config.validate();
  const std::uint64_t eval_seed = f.common.seed_opt->count() ? f.common.seed : config.seed;

  const data::Dataset d = data::load_dataset(f.dataset);
  const std::vector<ShapeRecord> shapes = select_shapes(d, f.split, f.shapes);
  report::MetricsReport r = report::evaluate_shapes(shapes, ck.params, config, eval_seed, f.threads);
  r.checkpoint = f.checkpoint;
  write_report(r, f.common.out);

  print_aggregate(r.aggregate, config.eval.samples);
  if (config.delete_fraction > 0.0) {
    std::size_t removed = 0;
    for (const auto& s : r.shapes) removed += s.removed_labels.size();
    std::printf("delete fraction %.3f removed %zu parts across %zu shapes\n", config.delete_fraction, removed,
                r.shapes.size());
  }
  std::printf("report %s\n", (fs::path(f.common.out) / "metrics.json").string().c_str());
}

// ---------------------------------------------------------------- ablate

struct AblateFlags {
  Common common;
  std::string dataset;
  std::string orders;
  std::string noise_dims;
  std::size_t steps = 0;
  std::size_t samples = 0;
  std::size_t mon_samples = 0;
  std::size_t threads = 0;
  CLI::Option* orders_opt = nullptr;
  CLI::Option* noise_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
  CLI::Option* samples_opt = nullptr;
  CLI::Option* mon_opt = nullptr;
};

void cmd_ablate(const AblateFlags& f) {
  train::RunConfig base = base_config(f.common);
  if (f.steps_opt->count()) base.steps = f.steps;
  if (f.samples_opt->count()) base.eval.samples = f.samples;
  if (f.mon_opt->count()) base.train.mon_samples = f.mon_samples;
  base.dataset = f.dataset;

  std::vector<data::OrderKind> orders = {base.order};
  if (f.orders_opt->count()) {
    orders.clear();
    for (const auto& name : split_list(f.orders)) orders.push_back(data::parse_order(name));
  }
  std::vector<std::size_t> noise_dims = {base.net.noise_dim};
  if (f.noise_opt->count()) {
    noise_dims.clear();
    for (const auto& n : split_list(f.noise_dims)) noise_dims.push_back(parse_count(n));
  }

  const data::Dataset d = data::load_dataset(f.dataset);
  const std::vector<ShapeRecord> test = d.subset(d.split.test);
  const fs::path out = f.common.out;
  make_dir(out);

  json rows = json::array();
  std::ostringstream csv;
  csv << "# base_config " << json(base).dump() << "\n";
  csv << "order,noise_dim,steps,final_loss,scd,pa,ca,v_scd,v_pa,v_ca,flags,rerun\n";
  std::printf("%-26s %9s %13s %13s %8s %8s\n", "order", "noise_dim", "final_loss", "SCD", "PA", "CA");
  for (data::OrderKind order : orders) {
    for (std::size_t noise : noise_dims) {
      train::RunConfig c = base;
      c.order = order;
      c.net.noise_dim = noise;
      const std::string name = "run_" + data::to_string(order) + "_nz" + std::to_string(noise);
      c.out = (out / name).string();
      c.validate();
      const TrainOutcome o = run_training(c, d, 0, false);
      const model::ModelParams& params = o.result.params;
      report::MetricsReport r = report::evaluate_shapes(test, params, c, c.seed, f.threads);
      r.checkpoint = (fs::path(c.out) / "model.ckpt").string();
      write_report(r, fs::path(c.out) / "eval");

      const report::Aggregate& a = r.aggregate;
      const std::string flags = "--order " + data::to_string(order) + " --noise-dim " + std::to_string(noise);
      const std::string rerun = "train --config " + (fs::path(c.out) / "config.json").string() + " --dataset " +
                                c.dataset + " --out " + c.out;
      const double final_loss = o.result.log.back().loss;
      csv << data::to_string(order) << ',' << noise << ',' << c.steps << ',' << g17(final_loss) << ',' << g17(a.scd)
          << ',' << g17(a.pa) << ',' << opt17(a.ca) << ',' << g17(a.variability_scd) << ','
          << g17(a.variability_pa) << ',' << opt17(a.variability_ca) << ',' << flags << ',' << rerun << '\n';
      rows.push_back({{"order", data::to_string(order)},
                      {"noise_dim", noise},
                      {"config", c},
                      {"final_loss", final_loss},
                      {"scd", a.scd},
                      {"pa", a.pa},
                      {"ca", a.ca ? json(*a.ca) : json(nullptr)},
                      {"variability", {{"scd", a.variability_scd}, {"pa", a.variability_pa}}},
                      {"flags", flags},
                      {"rerun", rerun}});
      std::printf("%-26s %9zu %13.6e %13.6e %8.4f %8s\n", data::to_string(order).c_str(), noise, final_loss, a.scd,
                  a.pa, a.ca ? std::to_string(*a.ca).c_str() : "n/a");
      std::fflush(stdout);
    }
  }
  data::write_text_file(out / "ablation.csv", csv.str());
  data::write_text_file(out / "ablation.json",
                        json{{"base_config", base}, {"test_shapes", test.size()}, {"rows", rows}}.dump(2) + "\n");
  std::printf("table %s\n", (out / "ablation.csv").string().c_str());
}

// ---------------------------------------------------------------- export

struct ExportFlags {
  Common common;
  std::string dataset;
  std::string shape;
  std::string shape_file;
  std::string checkpoint;
  CLI::Option* dataset_opt = nullptr;
  CLI::Option* checkpoint_opt = nullptr;
};

constexpr std::array<std::array<int, 3>, 12> kPalette = {{{230, 25, 75},
                                                          {60, 180, 75},
                                                          {0, 130, 200},
                                                          {245, 130, 48},
                                                          {145, 30, 180},
                                                          {70, 240, 240},
                                                          {240, 50, 230},
                                                          {210, 245, 60},
                                                          {250, 190, 190},
                                                          {0, 128, 128},
                                                          {170, 110, 40},
                                                          {128, 128, 0}}};

std::string ply_text(const ShapeRecord& shape, std::span<const geo::Pose> poses, const std::string& which,
                     const json& config, std::uint64_t noise_seed) {
  std::ostringstream out;
  out << "ply\nformat ascii 1.0\n";
  out << "comment shape " << shape.id << " category " << shape.category << " poses " << which << "\n";
  out << "comment run_config " << config.dump() << "\n";
  out << "comment noise_seed " << noise_seed << "\n";
  for (std::size_t i = 0; i < shape.parts.size(); ++i) {
    const auto& rgb = kPalette[i % kPalette.size()];
    out << "comment part " << i << ' ' << shape.parts[i].label << " points " << shape.parts[i].points.rows()
        << " rgb " << rgb[0] << ' ' << rgb[1] << ' ' << rgb[2] << "\n";
  }
  out << "element vertex " << shape.point_count() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (std::size_t i = 0; i < shape.parts.size(); ++i) {
    const geo::PointCloud world = geo::apply_pose(poses[i], shape.parts[i].points);
    const auto& rgb = kPalette[i % kPalette.size()];
    for (Eigen::Index r = 0; r < world.rows(); ++r) {
      out << g17(world(r, 0)) << ' ' << g17(world(r, 1)) << ' ' << g17(world(r, 2)) << ' ' << rgb[0] << ' ' << rgb[1]
          << ' ' << rgb[2] << '\n';
    }
  }
  return out.str();
}

void cmd_export(const ExportFlags& f) {
  ShapeRecord shape;
  if (!f.shape_file.empty()) {
    shape = data::load_shape(f.shape_file);
  } else if (f.dataset_opt->count() && !f.shape.empty()) {
    shape = data::load_dataset(f.dataset).find(f.shape);
  } else {
    throw InvalidArgument("export needs --shape-file, or --dataset with --shape");
  }
  const fs::path out = f.common.out;
  make_dir(out);

  train::RunConfig config = base_config(f.common);
  std::unique_ptr<model::Checkpoint> ck;
  if (f.checkpoint_opt->count()) {
    ck = std::make_unique<model::Checkpoint>(model::load_checkpoint(f.checkpoint));
    config = config_from_checkpoint(*ck, f.checkpoint);
    if (f.common.seed_opt->count()) config.seed = f.common.seed;
  }
  const json config_json = config;
  const std::uint64_t noise_seed = train::stream_seed(config.seed, train::Stream::eval_noise);

  const fs::path gt_path = out / (shape.id + "_gt.ply");
  data::write_text_file(gt_path, ply_text(shape, shape.gt_poses(), "gt", config_json, noise_seed));
  std::printf("wrote %s (%zu points, %zu parts)\n", gt_path.string().c_str(), shape.point_count(),
              shape.parts.size());
  if (!ck) return;

  // Predict in the configured training order, then write parts back in stored order.
  const data::Ordering order =
      data::order_parts(shape, {config.order, derive_seed(train::stream_seed(config.seed, train::Stream::order), 0)});
  const ShapeRecord ordered = data::apply_order(shape, order.perm);
  std::mt19937_64 rng(noise_seed);
  const std::vector<double> z = loss::sample_noise(config.net.noise_dim, rng);
  const std::vector<geo::Pose> pred_ordered = model::predict(ordered.clouds(), z, ck->params, config.net);
  std::vector<geo::Pose> pred(shape.parts.size());
  for (std::size_t k = 0; k < order.perm.size(); ++k) pred[order.perm[k]] = pred_ordered[k];

  const fs::path pred_path = out / (shape.id + "_pred.ply");
  data::write_text_file(pred_path, ply_text(shape, pred, "pred", config_json, noise_seed));
  std::printf("wrote %s (%zu points, %zu parts)\n", pred_path.string().c_str(), shape.point_count(),
              shape.parts.size());
}

// ---------------------------------------------------------------- gradcheck

struct GradFlags {
  Common common;
  double h = 1e-4;
};

void cmd_gradcheck(const GradFlags& f) {
  const ad::GradCheckSuite suite = ad::run_gradcheck_suite(f.common.seed, f.h);
  json entries = json::array();
  for (const auto& e : suite.entries) {
    std::printf("%-48s %.3e\n", e.name.c_str(), e.report.max_rel_error);
    entries.push_back({{"name", e.name}, {"max_rel_error", e.report.max_rel_error}});
  }
  std::printf("max relative error %.3e (%s) over %zu checks in %.2fs\n", suite.max_rel_error, suite.worst.c_str(),
              suite.entries.size(), suite.seconds);
  if (!f.common.out.empty()) {
    make_dir(f.common.out);
    const json j = {{"seed", f.common.seed}, {"h", f.h},         {"tolerance", kGradTolerance},
                    {"entries", entries},    {"max_rel_error", suite.max_rel_error}, {"worst", suite.worst},
                    {"seconds", suite.seconds}};
    data::write_text_file(fs::path(f.common.out) / "gradcheck.json", j.dump(2) + "\n");
  }
  if (!(suite.max_rel_error <= kGradTolerance)) {
    throw Error("gradient_mismatch", "max relative error " + g17(suite.max_rel_error) + " in '" + suite.worst +
                                         "' exceeds " + g17(kGradTolerance));
  }
}

}  // namespace

void register_commands(CLI::App& app) {
  {
    auto f = std::make_shared<GenFlags>();
    auto* sub = app.add_subcommand("gen-data", "Generate a synthetic part-decomposed dataset");
    add_common(sub, f->common);
    sub->add_option("--category", f->categories, "chair, table, lamp or a comma-separated mix")
        ->capture_default_str();
    sub->add_option("--count", f->count, "Number of shapes")->required();
    f->points_opt = sub->add_option("--points", f->points, "Points per shape")->capture_default_str();
    sub->callback([f] { cmd_gen_data(*f); });
  }
  {
    auto f = std::make_shared<TrainFlags>();
    auto* sub = app.add_subcommand("train", "Train the assembly network with the MoN objective");
    add_common(sub, f->common);
    sub->add_option("--dataset", f->dataset, "Dataset directory")->required();
    f->overfit_opt = sub->add_option("--overfit", f->overfit, "Train on this single shape id");
    f->noise_opt = sub->add_option("--noise-dim", f->noise_dim, "Noise dimensions in the initial hidden state");
    f->mon_opt = sub->add_option("--mon-samples", f->mon_samples, "Noise samples per MoN step (K)");
    f->order_opt = sub->add_option("--order", f->order, "Part order strategy (default top_down)");
    f->steps_opt = sub->add_option("--steps", f->steps, "Optimizer steps");
    f->batch_opt = sub->add_option("--batch-size", f->batch_size, "Shapes per optimizer step");
    f->iter_opt = sub->add_option("--iterations", f->iterations, "Message-passing iterations");
    f->lr_opt = sub->add_option("--lr", f->lr, "Adam learning rate");
    f->ckpt_opt = sub->add_option("--checkpoint-every", f->checkpoint_every, "Extra checkpoint period in steps");
    sub->add_option("--log-every", f->log_every, "Console progress period")->capture_default_str();
    sub->callback([f] { cmd_train(*f); });
  }
  {
    auto f = std::make_shared<EvalFlags>();
    auto* sub = app.add_subcommand("eval", "Best-of-E evaluation with SCD, PA, CA and variability");
    add_common(sub, f->common);
    sub->add_option("--checkpoint", f->checkpoint, "Checkpoint file")->required();
    sub->add_option("--dataset", f->dataset, "Dataset directory")->required();
    sub->add_option("--split", f->split, "train, val, test or all")->capture_default_str();
    sub->add_option("--shape", f->shapes, "Evaluate only these shape ids");
    f->samples_opt = sub->add_option("--samples", f->samples, "Noise samples per shape (E)");
    f->noise_opt = sub->add_option("--noise-dim", f->noise_dim, "Must equal the checkpoint's noise dimension");
    f->delete_opt = sub->add_option("--delete-fraction", f->delete_fraction, "Missing-parts protocol fraction");
    f->order_opt = sub->add_option("--order", f->order, "Part order strategy (default: the training order)");
    sub->add_option("--threads", f->threads, "Worker threads (0: all cores)")->capture_default_str();
    sub->callback([f] { cmd_eval(*f); });
  }
  {
    auto f = std::make_shared<AblateFlags>();
    auto* sub = app.add_subcommand("ablate", "Train and evaluate one run per order and noise dimension");
    add_common(sub, f->common);
    sub->add_option("--dataset", f->dataset, "Dataset directory")->required();
    f->orders_opt = sub->add_option("--orders", f->orders, "Comma-separated order strategies");
    f->noise_opt = sub->add_option("--noise-dims", f->noise_dims, "Comma-separated noise dimensions");
    f->steps_opt = sub->add_option("--steps", f->steps, "Optimizer steps per run");
    f->samples_opt = sub->add_option("--samples", f->samples, "Evaluation samples per shape (E)");
    f->mon_opt = sub->add_option("--mon-samples", f->mon_samples, "Noise samples per MoN step (K)");
    sub->add_option("--threads", f->threads, "Evaluation worker threads (0: all cores)")->capture_default_str();
    sub->callback([f] { cmd_ablate(*f); });
  }
  {
    auto f = std::make_shared<ExportFlags>();
    auto* sub = app.add_subcommand("export", "Write ground-truth and predicted assemblies as colored PLY points");
    add_common(sub, f->common);
    f->dataset_opt = sub->add_option("--dataset", f->dataset, "Dataset directory");
    sub->add_option("--shape", f->shape, "Shape id inside --dataset");
    sub->add_option("--shape-file", f->shape_file, "Shape record file");
    f->checkpoint_opt = sub->add_option("--checkpoint", f->checkpoint, "Checkpoint for the predicted assembly");
    sub->callback([f] { cmd_export(*f); });
  }
  {
    auto f = std::make_shared<GradFlags>();
    auto* sub = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable operation");
    add_common(sub, f->common, false);
    sub->add_option("--step", f->h, "Central-difference step h")->capture_default_str();
    sub->callback([f] { cmd_gradcheck(*f); });
  }
}

}  // namespace partasm::cli
