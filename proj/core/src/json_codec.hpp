#pragma once

// Internal JSON (de)serialization shared by config parsing and checkpoint
// manifests. Not installed.

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "shear/backend.hpp"
#include "shear/policy.hpp"
#include "shear/trainer.hpp"

namespace shear::codec {

// Rejects keys outside `allowed`, naming the offender and its context.
void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                const std::string& context);

nlohmann::ordered_json feature_config_json(const FeatureConfig& config);
FeatureConfig feature_config_from_json(const nlohmann::json& obj,
                                       const std::string& context);

nlohmann::ordered_json training_config_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(const nlohmann::json& obj,
                                         const std::string& context);

nlohmann::ordered_json backend_descriptor_json(const BackendDescriptor& descriptor);
BackendDescriptor backend_descriptor_from_json(const nlohmann::json& obj,
                                               const std::string& context);

}  // namespace shear::codec
