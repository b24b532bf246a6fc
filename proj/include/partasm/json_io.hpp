#pragma once

// JSON conversions for configuration structs, shared by checkpoints, reports and the CLI.

#include "json.hpp"
#include "partasm/dataset.hpp"
#include "partasm/model.hpp"
#include "partasm/training.hpp"

#include <set>
#include <string>
#include <string_view>

namespace partasm::json_detail {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, std::string_view what);

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace partasm::json_detail

namespace partasm::model {

void to_json(nlohmann::json& j, const NetConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, NetConfig& c);

}  // namespace partasm::model

namespace partasm::data {

void to_json(nlohmann::json& j, const GenParams& p);
void from_json(const nlohmann::json& j, GenParams& p);

}  // namespace partasm::data

namespace partasm::loss {

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace partasm::loss

namespace partasm::metrics {

void to_json(nlohmann::json& j, const EvalConfig& c);
void from_json(const nlohmann::json& j, EvalConfig& c);

}  // namespace partasm::metrics

namespace partasm::ad {

void to_json(nlohmann::json& j, const AdamOptions& o);
void from_json(const nlohmann::json& j, AdamOptions& o);

}  // namespace partasm::ad

namespace partasm::train {

void to_json(nlohmann::json& j, const RunConfig& c);
// Missing keys keep their defaults; unknown keys throw ConfigError.
void from_json(const nlohmann::json& j, RunConfig& c);

}  // namespace partasm::train
