#pragma once

// JSON forms of configs, histories and reports, shared by the checkpoint
// header and the CLI report files.

#include <json.hpp>

#include "memeclip/head.hpp"
#include "memeclip/metrics.hpp"
#include "memeclip/trainer.hpp"

namespace memeclip {

void to_json(nlohmann::json& j, const HeadConfig& c);
void from_json(const nlohmann::json& j, HeadConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const EpochRecord& r);
void from_json(const nlohmann::json& j, EpochRecord& r);
void to_json(nlohmann::json& j, const TrainHistory& h);
void from_json(const nlohmann::json& j, TrainHistory& h);
void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

}  // namespace memeclip
