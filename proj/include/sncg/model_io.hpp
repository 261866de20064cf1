#pragma once

#include <filesystem>

#include "sncg/core.hpp"
#include "sncg/json_util.hpp"

namespace sncg {

/// Model schema:
///   actions: [label...]
///   zones: [{name, actions: [label...]}]
///   reward: {regime: R1|R2,
///            argument: own_zone_mass|action_load|own_action_load|zone_action_load,
///            label? (action_load), labels? (zone_action_load, one per zone),
///            base: [..] or number, coefficients: [c0, c1, ...] or one list per zone}
///   transition: {kind: identity|deterministic|stochastic,
///                destination: [[zone name per action] per zone], noise?, quantum?}
///   discount, horizon (0 = infinite)
SncgModel model_from_json(const Json& j);
SncgModel load_model(const std::filesystem::path& path);

}  // namespace sncg
