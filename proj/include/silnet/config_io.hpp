#pragma once

#include <string>
#include <vector>

#include "silnet/synthetic_hand.hpp"
#include "silnet/types.hpp"

namespace silnet {

/// Flat "key = value" text, one setting per line, '#' starts a comment.
std::string format_config(const TrainConfig& config);
TrainConfig parse_config(const std::string& text, const std::string& origin = "config");

/// Applies "key=value" onto the config. Unknown keys and malformed values
/// are usage errors.
void apply_override(TrainConfig& config, const std::string& assignment);
std::vector<std::string> config_keys();

/// Hand-model parameter files use the same syntax; list-valued keys take
/// whitespace-separated numbers (angles in degrees).
std::string format_hand_params(const HandModelParams& params);
HandModelParams parse_hand_params(const std::string& text, const std::string& origin = "params");

}  // namespace silnet
