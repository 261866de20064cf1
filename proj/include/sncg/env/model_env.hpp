#pragma once

#include "sncg/env/env.hpp"
#include "sncg/random.hpp"

namespace sncg::env {

/// Finite population of K agents (mass 1/K each) acting in an SncgModel. Used for
/// the grid world. Agents start in uniformly random zones.
class ModelEnv final : public MultiAgentEnv {
 public:
  ModelEnv(SncgModel model, std::size_t agents);

  std::string kind() const override { return "sncg_model"; }
  std::size_t num_agents() const override { return agents_; }
  std::size_t num_zones() const override { return model_.zone_count(); }
  std::vector<std::size_t> action_counts() const override { return model_.action_counts(); }
  std::size_t horizon() const override { return model_.effective_horizon(); }

  void reset(std::uint64_t seed) override;
  GlobalState global_state() const override;
  const std::vector<ZoneId>& agent_zones() const override { return zones_; }
  std::vector<bool> active() const override { return std::vector<bool>(agents_, true); }
  EnvStep step(const std::vector<std::size_t>& actions) override;

  const SncgModel& model() const { return model_; }

 private:
  SncgModel model_;
  std::size_t agents_;
  std::vector<ZoneId> zones_;
  std::size_t t_ = 0;
  Rng rng_;
};

}  // namespace sncg::env
