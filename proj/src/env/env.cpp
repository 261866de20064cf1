#include "sncg/env/env.hpp"

#include "sncg/env/model_env.hpp"
#include "sncg/env/routing_env.hpp"
#include "sncg/env/taxi_env.hpp"
#include "sncg/errors.hpp"
#include "sncg/model_io.hpp"

namespace sncg::env {

void check_actions(const MultiAgentEnv& env, const std::vector<std::size_t>& actions) {
  if (actions.size() != env.num_agents())
    throw ValidationError("expected " + std::to_string(env.num_agents()) + " actions, got " +
                          std::to_string(actions.size()));
  const auto counts = env.action_counts();
  const auto act = env.active();
  const auto& zones = env.agent_zones();
  for (std::size_t i = 0; i < actions.size(); ++i)
    if (act[i] && actions[i] >= counts[zones[i]])
      throw ValidationError("agent " + std::to_string(i) + ": action " + std::to_string(actions[i]) +
                            " is not available in zone " + std::to_string(zones[i]));
}

namespace {

Json load_ref(const Json& spec, const std::string& key, const std::filesystem::path& base_dir) {
  const Json& v = require_field(spec, key, "env");
  if (v.is_object()) return v;
  if (!v.is_string()) throw ValidationError("env." + key + ": expected a file name or an object");
  const std::filesystem::path p = v.get<std::string>();
  return read_json_file(p.is_absolute() ? p : base_dir / p);
}

}  // namespace

std::unique_ptr<MultiAgentEnv> env_from_json(const Json& spec, const std::filesystem::path& base_dir,
                                             std::optional<std::size_t> agents) {
  const auto kind = field_as<std::string>(spec, "kind", "env");
  auto count = [&](std::size_t fallback) {
    return agents ? *agents : field_or<std::size_t>(spec, "agents", fallback, "env");
  };
  if (kind == "sncg_model")
    return std::make_unique<ModelEnv>(model_from_json(load_ref(spec, "model", base_dir)), count(20));
  if (kind == "routing_single")
    return std::make_unique<SingleStageRoutingEnv>(
        ncg::routing_game_from_json(load_ref(spec, "network", base_dir)), count(200));
  if (kind == "routing_multistage")
    return std::make_unique<MultiStageRoutingEnv>(
        network_from_game_json(load_ref(spec, "network", base_dir)), count(200),
        field_or<std::size_t>(spec, "horizon_cap", 10, "env"));
  if (kind == "taxi") {
    Json j = spec;
    if (agents) j["agents"] = *agents;
    return std::make_unique<TaxiEnv>(taxi_config_from_json(j, base_dir));
  }
  throw ValidationError("env.kind: unknown environment kind '" + kind + "'");
}

std::unique_ptr<MultiAgentEnv> build_env(const std::filesystem::path& spec_file,
                                         std::optional<std::size_t> agents) {
  return env_from_json(read_json_file(spec_file), spec_file.parent_path(), agents);
}

}  // namespace sncg::env
