#pragma once

// Internal JSON conversions shared by the library's file formats.

#include <json.hpp>

#include "seqbelief/features.hpp"
#include "seqbelief/records.hpp"
#include "seqbelief/train_config.hpp"

namespace seqbelief::codec {

using json = nlohmann::json;

json record_to_json(const CompanyRecord& record);
CompanyRecord record_from_json(const json& j, std::size_t line);

json scaler_to_json(const ScalerManifest& s);
ScalerManifest scaler_from_json(const json& j);

json config_to_json(const TrainConfig& c);
TrainConfig config_from_json(const json& j, const TrainConfig& base = {});

json tensor_values(const Tensor& t);
Tensor tensor_from_values(const json& j, const char* what);

}  // namespace seqbelief::codec
