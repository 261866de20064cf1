#pragma once

// Single-stage non-atomic congestion games over explicit path sets.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sncg/json_util.hpp"

namespace sncg::ncg {

/// c(x) = sum_k c_k x^k with c_k >= 0: nondecreasing on x >= 0, convex antiderivative.
class CostPolynomial {
 public:
  CostPolynomial() = default;
  explicit CostPolynomial(std::vector<double> coefficients);

  double operator()(double load) const;
  /// Integral of the cost from 0 to `load`.
  double integral(double load) const;
  const std::vector<double>& coefficients() const { return coefficients_; }

 private:
  std::vector<double> coefficients_;
};

struct Resource {
  std::string name;
  CostPolynomial cost;
};

struct Path {
  std::string name;
  std::vector<std::size_t> resources;
};

struct Population {
  std::string name;
  double mass = 0.0;
  std::vector<Path> paths;
};

struct RoutingGame {
  std::vector<Resource> resources;
  std::vector<Population> populations;

  void validate() const;
  std::size_t resource_index(const std::string& name) const;
  std::size_t path_index(std::size_t population, const std::string& name) const;
};

/// path_flow[p][k]: mass of population p on its k-th path.
struct FlowProfile {
  std::vector<std::vector<double>> path_flow;

  static FlowProfile zero(const RoutingGame& game);
  /// Population fractions (rows summing to 1) scaled by population masses.
  static FlowProfile from_fractions(const RoutingGame& game,
                                    const std::vector<std::vector<double>>& fractions);
  std::vector<std::vector<double>> fractions(const RoutingGame& game) const;
};

/// Shape and sign checks; with `require_mass` also per-population sums (1e-9).
void check_flow(const RoutingGame& game, const FlowProfile& flow, bool require_mass);

std::vector<double> resource_load(const RoutingGame& game, const FlowProfile& flow);
double path_cost(const RoutingGame& game, const FlowProfile& flow, std::size_t population,
                 std::size_t path);
/// Costs of every path at the loads induced by `flow`.
std::vector<std::vector<double>> path_costs(const RoutingGame& game, const FlowProfile& flow);
/// Rosenthal potential: sum over resources of the integral of the cost up to the load.
double potential(const RoutingGame& game, const FlowProfile& flow);

struct BestResponse {
  std::size_t path = 0;
  double cost = 0.0;
};

/// Cheapest path for `population` at current loads; ties go to the earlier path.
BestResponse best_response_path(const RoutingGame& game, const FlowProfile& flow,
                                std::size_t population);

inline constexpr double kFlowEpsilon = 1e-6;

/// Largest cost reduction available to an agent on a used path (flow > flow_eps).
double epsilon_of_flow(const RoutingGame& game, const FlowProfile& flow,
                       double flow_eps = kFlowEpsilon);

struct WardropViolation {
  std::size_t population = 0;
  std::size_t unused_path = 0;
  double unused_cost = 0.0;
  double worst_used_cost = 0.0;
};

struct PopulationCertificate {
  std::vector<std::size_t> used_paths;
  double min_used_cost = 0.0;
  double max_used_cost = 0.0;
  double spread = 0.0;
};

struct WardropReport {
  std::vector<PopulationCertificate> populations;
  std::vector<WardropViolation> violations;
  double max_spread = 0.0;
  bool clean(double spread_tol) const { return violations.empty() && max_spread <= spread_tol; }
};

/// Used-path cost spreads, and unused paths cheaper than some used path by more than tol.
WardropReport certify_wardrop(const RoutingGame& game, const FlowProfile& flow, double tol,
                              double flow_eps = kFlowEpsilon);

struct FrankWolfeOptions {
  double tol = 1e-6;  // on the duality gap
  std::size_t max_iters = 200000;
  bool record_history = true;
};

struct FrankWolfeResult {
  FlowProfile flow;
  std::vector<double> gap_history;
  std::vector<double> potential_history;
  std::size_t iterations = 0;
  double gap = 0.0;
  bool converged = false;
};

/// Conditional-gradient minimization of the potential. Step size is
/// min(2/(k+2), exact line-search step), which keeps the potential nonincreasing.
/// The linear oracle puts each population's mass on its best-response path.
FrankWolfeResult solve_frank_wolfe(const RoutingGame& game, const FrankWolfeOptions& options = {});

/// Frank-Wolfe duality gap <grad Phi(x), x - d> at `flow`.
double duality_gap(const RoutingGame& game, const FlowProfile& flow);

/// Network schema: {resources: [{name, coefficients}], populations: [{name, mass,
/// paths: [{name, resources: [names]}]}]}.
RoutingGame routing_game_from_json(const Json& j);
RoutingGame load_routing_game(const std::filesystem::path& path);
Json routing_game_to_json(const RoutingGame& game);

}  // namespace sncg::ncg
