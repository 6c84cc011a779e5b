#pragma once

#include <string>

#include "rmgen/model/reward_model.hpp"

namespace rmgen::model {

// Binary container: magic, a JSON header (config, lineage, adapters, tensor
// index) and raw little-endian doubles. Loading reproduces every bit.
void save_checkpoint(const RewardModel& model, const std::string& path);
RewardModel load_checkpoint(const std::string& path);

}  // namespace rmgen::model
