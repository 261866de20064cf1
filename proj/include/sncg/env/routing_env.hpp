#pragma once

#include "sncg/env/env.hpp"
#include "sncg/ncg/routing_game.hpp"

namespace sncg::env {

/// Splits `agents` over populations in proportion to mass (largest remainder).
std::vector<std::size_t> agents_per_population(const ncg::RoutingGame& game, std::size_t agents);

/// One path choice per episode. Zone = population, action = path index. Each agent
/// carries its population's mass divided by the population's agent count.
class SingleStageRoutingEnv final : public MultiAgentEnv {
 public:
  SingleStageRoutingEnv(ncg::RoutingGame game, std::size_t agents);

  std::string kind() const override { return "routing_single"; }
  std::size_t num_agents() const override { return zones_.size(); }
  std::size_t num_zones() const override { return game_.populations.size(); }
  std::vector<std::size_t> action_counts() const override;
  std::size_t horizon() const override { return 1; }

  void reset(std::uint64_t seed) override;
  GlobalState global_state() const override;
  const std::vector<ZoneId>& agent_zones() const override { return zones_; }
  std::vector<bool> active() const override { return std::vector<bool>(zones_.size(), true); }
  EnvStep step(const std::vector<std::size_t>& actions) override;
  std::optional<RoutingAudit> audit() const override;

  const ncg::RoutingGame& game() const { return game_; }
  /// Flow induced by one path choice per agent.
  ncg::FlowProfile induced_flow(const std::vector<std::size_t>& actions) const;

 private:
  ncg::RoutingGame game_;
  std::vector<ZoneId> zones_;
  std::vector<double> agent_mass_;
  std::vector<std::size_t> last_actions_;
};

/// Audit of an arbitrary flow: epsilon_of_flow plus per-population cost moments.
RoutingAudit audit_flow(const ncg::RoutingGame& game, const ncg::FlowProfile& flow);

struct Edge {
  std::string name;
  std::size_t from = 0, to = 0;
  ncg::CostPolynomial cost;
};

struct RoutePopulation {
  std::string name;
  double mass = 0.0;
  std::size_t origin = 0, destination = 0;
  /// Allowed next edges at each node (indices into edges). Empty at the destination.
  std::vector<std::vector<std::size_t>> next_edges;
};

struct RoutingNetwork {
  std::vector<std::string> nodes;
  std::vector<Edge> edges;
  std::vector<RoutePopulation> populations;
};

/// Node graph from a routing fixture whose resources carry `from`/`to`. The allowed
/// edges at a node are the next edges of the population's listed paths through it.
RoutingNetwork network_from_game_json(const Json& j);

/// edge_load[t][e]: mass entering edge e at step t.
using TimedLoads = std::vector<std::vector<double>>;

struct MultistageBestResponse {
  std::vector<double> value;  // min total cost from the origin at t = 0, per population
  std::vector<double> gap;    // achieved - value, per population (if achieved given)
  double epsilon_gap = 0.0;   // max over populations
};

/// Time-expanded dynamic program: cheapest arrival for one massless agent against
/// frozen loads, edges entered at step t cost c_e(edge_load[t][e]). Throws
/// NumericError if some population cannot reach its destination within `horizon`.
MultistageBestResponse multistage_best_response(const RoutingNetwork& net, const TimedLoads& loads,
                                                std::size_t horizon,
                                                const std::vector<double>& achieved = {});

/// Agents choose an outgoing edge at every node; one edge traversal per step, with
/// the edge cost charged on entry at that step's entering mass. Zones are
/// (population, node) pairs; agents at their destination are inactive.
class MultiStageRoutingEnv final : public MultiAgentEnv {
 public:
  MultiStageRoutingEnv(RoutingNetwork net, std::size_t agents, std::size_t horizon_cap);

  std::string kind() const override { return "routing_multistage"; }
  std::size_t num_agents() const override { return pop_of_.size(); }
  std::size_t num_zones() const override { return net_.populations.size() * net_.nodes.size(); }
  std::vector<std::size_t> action_counts() const override;
  std::size_t horizon() const override { return horizon_cap_; }

  void reset(std::uint64_t seed) override;
  GlobalState global_state() const override;
  const std::vector<ZoneId>& agent_zones() const override { return zones_; }
  std::vector<bool> active() const override;
  EnvStep step(const std::vector<std::size_t>& actions) override;
  std::optional<RoutingAudit> audit() const override;

  const RoutingNetwork& network() const { return net_; }
  ZoneId zone_of(std::size_t population, std::size_t node) const {
    return population * net_.nodes.size() + node;
  }
  /// Loads recorded during the last (or current) episode.
  const TimedLoads& episode_loads() const { return loads_; }
  /// Total cost of each agent over the last episode.
  const std::vector<double>& episode_costs() const { return cost_; }

 private:
  RoutingNetwork net_;
  std::size_t horizon_cap_;
  std::vector<std::size_t> pop_of_;
  std::vector<double> agent_mass_;
  std::vector<ZoneId> zones_;
  std::vector<double> cost_;
  TimedLoads loads_;
  std::size_t t_ = 0;
  bool done_ = false;
};

}  // namespace sncg::env
