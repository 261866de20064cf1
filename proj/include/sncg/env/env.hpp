#pragma once

// Multi-agent environments driven by the learners. Agents sit in zones (local
// states); every active agent submits one local action index per step.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sncg/core.hpp"
#include "sncg/json_util.hpp"

namespace sncg::env {

struct EnvStep {
  std::vector<double> rewards;  // per agent; zero for agents that did not act
  std::vector<bool> terminal;   // agent left the game this step (no bootstrap)
  bool episode_done = false;
};

/// Equilibrium audit of the last completed episode (routing environments).
struct RoutingAudit {
  double epsilon_gap = 0.0;                 // largest gain from unilateral deviation
  double mean_gap = 0.0;                    // mass-weighted mean of the same
  std::vector<double> population_value;     // mean cost per population
  std::vector<double> best_response;        // cheapest deviation cost per population
  std::vector<double> cost_variance;        // cost variance across agents per population
  std::vector<std::vector<double>> fractions;  // per-population path split (single stage)
};

class MultiAgentEnv {
 public:
  virtual ~MultiAgentEnv() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t num_agents() const = 0;
  virtual std::size_t num_zones() const = 0;
  virtual std::vector<std::size_t> action_counts() const = 0;
  /// Cap on steps per episode.
  virtual std::size_t horizon() const = 0;

  virtual void reset(std::uint64_t seed) = 0;
  /// Agent mass over zones; busy agents count at the zone they are heading to.
  virtual GlobalState global_state() const = 0;
  virtual const std::vector<ZoneId>& agent_zones() const = 0;
  /// Agents that must submit an action this step.
  virtual std::vector<bool> active() const = 0;
  /// `actions[i]` is read only for active agents. Throws ValidationError on an
  /// action outside the agent's zone.
  virtual EnvStep step(const std::vector<std::size_t>& actions) = 0;

  virtual std::optional<RoutingAudit> audit() const { return std::nullopt; }
};

/// Kinds: sncg_model (e.g. the grid world), routing_single, routing_multistage, taxi.
/// Relative file references resolve against `base_dir`.
std::unique_ptr<MultiAgentEnv> env_from_json(const Json& spec, const std::filesystem::path& base_dir,
                                             std::optional<std::size_t> agents = std::nullopt);
std::unique_ptr<MultiAgentEnv> build_env(const std::filesystem::path& spec_file,
                                         std::optional<std::size_t> agents = std::nullopt);

void check_actions(const MultiAgentEnv& env, const std::vector<std::size_t>& actions);

}  // namespace sncg::env
