#include "partasm/json_io.hpp"

#include "partasm/error.hpp"

#include <set>
#include <string>

namespace partasm {
namespace json_detail {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, std::string_view what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown " + std::string(what) + " key '" + key + "'");
  }
}

}  // namespace json_detail

using json_detail::read_if;
using json_detail::reject_unknown;

namespace model {

void to_json(nlohmann::json& j, const NetConfig& c) {
  j = {{"feature_dim", c.feature_dim},     {"hidden_dim", c.hidden_dim},   {"pose_feat_dim", c.pose_feat_dim},
       {"noise_dim", c.noise_dim},         {"iterations", c.iterations},   {"encoder_dims", c.encoder_dims},
       {"edge_hidden", c.edge_hidden},     {"rel_hidden", c.rel_hidden},   {"pose_hidden", c.pose_hidden}};
}

void from_json(const nlohmann::json& j, NetConfig& c) {
  reject_unknown(j,
                 {"feature_dim", "hidden_dim", "pose_feat_dim", "noise_dim", "iterations", "encoder_dims",
                  "edge_hidden", "rel_hidden", "pose_hidden"},
                 "network config");
  read_if(j, "feature_dim", c.feature_dim);
  read_if(j, "hidden_dim", c.hidden_dim);
  read_if(j, "pose_feat_dim", c.pose_feat_dim);
  read_if(j, "noise_dim", c.noise_dim);
  read_if(j, "iterations", c.iterations);
  read_if(j, "encoder_dims", c.encoder_dims);
  read_if(j, "edge_hidden", c.edge_hidden);
  read_if(j, "rel_hidden", c.rel_hidden);
  read_if(j, "pose_hidden", c.pose_hidden);
}

}  // namespace model

namespace data {

void to_json(nlohmann::json& j, const GenParams& p) {
  j = {{"point_budget", p.point_budget}, {"min_points", p.min_points},
       {"oversample", p.oversample},     {"table_legs", p.table_legs},
       {"chair_arms", p.chair_arms},     {"table_stretchers", p.table_stretchers},
       {"equivalence_eps", p.equivalence_eps}};
}

void from_json(const nlohmann::json& j, GenParams& p) {
  reject_unknown(j,
                 {"point_budget", "min_points", "oversample", "table_legs", "chair_arms", "table_stretchers",
                  "equivalence_eps"},
                 "generator config");
  read_if(j, "point_budget", p.point_budget);
  read_if(j, "min_points", p.min_points);
  read_if(j, "oversample", p.oversample);
  read_if(j, "table_legs", p.table_legs);
  read_if(j, "chair_arms", p.chair_arms);
  read_if(j, "table_stretchers", p.table_stretchers);
  read_if(j, "equivalence_eps", p.equivalence_eps);
}

}  // namespace data
namespace loss {

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"translation", w.translation},
       {"rotation", w.rotation},
       {"shape", w.shape},
       {"chamfer", w.chamfer == geo::ChamferReduction::mean ? "mean" : "sum"}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  reject_unknown(j, {"translation", "rotation", "shape", "chamfer"}, "loss weights");
  read_if(j, "translation", w.translation);
  read_if(j, "rotation", w.rotation);
  read_if(j, "shape", w.shape);
  if (j.contains("chamfer")) {
    const auto mode = j.at("chamfer").get<std::string>();
    if (mode == "mean") w.chamfer = geo::ChamferReduction::mean;
    else if (mode == "sum") w.chamfer = geo::ChamferReduction::sum;
    else throw ConfigError("chamfer reduction must be 'mean' or 'sum', got '" + mode + "'");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"mon_samples", c.mon_samples},
       {"match_equivalent_parts", c.match_equivalent_parts},
       {"supervise_all_iterations", c.supervise_all_iterations}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  reject_unknown(j, {"mon_samples", "match_equivalent_parts", "supervise_all_iterations"}, "training config");
  read_if(j, "mon_samples", c.mon_samples);
  read_if(j, "match_equivalent_parts", c.match_equivalent_parts);
  read_if(j, "supervise_all_iterations", c.supervise_all_iterations);
}

}  // namespace loss

namespace metrics {

void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = {{"tau_p", c.tau_p},
       {"tau_c", c.tau_c},
       {"samples", c.samples},
       {"match_equivalent_parts", c.match_equivalent_parts}};
}

void from_json(const nlohmann::json& j, EvalConfig& c) {
  reject_unknown(j, {"tau_p", "tau_c", "samples", "match_equivalent_parts"}, "evaluation config");
  read_if(j, "tau_p", c.tau_p);
  read_if(j, "tau_c", c.tau_c);
  read_if(j, "samples", c.samples);
  read_if(j, "match_equivalent_parts", c.match_equivalent_parts);
}

}  // namespace metrics

namespace ad {

void to_json(nlohmann::json& j, const AdamOptions& o) {
  j = {{"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}};
}

void from_json(const nlohmann::json& j, AdamOptions& o) {
  reject_unknown(j, {"lr", "beta1", "beta2", "eps"}, "optimizer config");
  read_if(j, "lr", o.lr);
  read_if(j, "beta1", o.beta1);
  read_if(j, "beta2", o.beta2);
  read_if(j, "eps", o.eps);
}

}  // namespace ad

namespace train {

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"seed", c.seed},
       {"net", c.net},
       {"loss_weights", c.weights},
       {"train", c.train},
       {"eval", c.eval},
       {"optimizer", c.adam},
       {"steps", c.steps},
       {"batch_size", c.batch_size},
       {"checkpoint_every", c.checkpoint_every},
       {"order", data::to_string(c.order)},
       {"delete_fraction", c.delete_fraction},
       {"dataset", c.dataset},
       {"overfit", c.overfit},
       {"out", c.out}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  reject_unknown(j,
                 {"seed", "net", "loss_weights", "train", "eval", "optimizer", "steps", "batch_size",
                  "checkpoint_every", "order", "delete_fraction", "dataset", "overfit", "out"},
                 "run config");
  read_if(j, "seed", c.seed);
  read_if(j, "net", c.net);
  read_if(j, "loss_weights", c.weights);
  read_if(j, "train", c.train);
  read_if(j, "eval", c.eval);
  read_if(j, "optimizer", c.adam);
  read_if(j, "steps", c.steps);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "checkpoint_every", c.checkpoint_every);
  if (j.contains("order")) c.order = data::parse_order(j.at("order").get<std::string>());
  read_if(j, "delete_fraction", c.delete_fraction);
  read_if(j, "dataset", c.dataset);
  read_if(j, "overfit", c.overfit);
  read_if(j, "out", c.out);
}

}  // namespace train
}  // namespace partasm
