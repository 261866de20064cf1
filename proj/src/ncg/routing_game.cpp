#include "sncg/ncg/routing_game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sncg/errors.hpp"

namespace sncg::ncg {

CostPolynomial::CostPolynomial(std::vector<double> coefficients)
    : coefficients_(std::move(coefficients)) {
  for (double c : coefficients_)
    if (!(c >= 0.0) || !std::isfinite(c))
      throw ValidationError("cost coefficients must be finite and nonnegative");
}

double CostPolynomial::operator()(double load) const {
  double acc = 0.0;
  for (std::size_t k = coefficients_.size(); k-- > 0;) acc = acc * load + coefficients_[k];
  return acc;
}

double CostPolynomial::integral(double load) const {
  double acc = 0.0;
  for (std::size_t k = coefficients_.size(); k-- > 0;)
    acc = acc * load + coefficients_[k] / static_cast<double>(k + 1);
  return acc * load;
}

void RoutingGame::validate() const {
  if (resources.empty()) throw ValidationError("routing game has no resources");
  if (populations.empty()) throw ValidationError("routing game has no populations");
  for (const auto& pop : populations) {
    if (!(pop.mass >= 0.0)) throw ValidationError("population '" + pop.name + "' has negative mass");
    if (pop.paths.empty()) throw ValidationError("population '" + pop.name + "' has no paths");
    for (const auto& path : pop.paths) {
      if (path.resources.empty())
        throw ValidationError("path '" + path.name + "' of population '" + pop.name + "' is empty");
      for (std::size_t r : path.resources)
        if (r >= resources.size())
          throw ValidationError("path '" + path.name + "' uses an unknown resource");
    }
  }
}

std::size_t RoutingGame::resource_index(const std::string& name) const {
  for (std::size_t r = 0; r < resources.size(); ++r)
    if (resources[r].name == name) return r;
  throw ValidationError("unknown resource '" + name + "'");
}

std::size_t RoutingGame::path_index(std::size_t population, const std::string& name) const {
  const auto& paths = populations.at(population).paths;
  for (std::size_t k = 0; k < paths.size(); ++k)
    if (paths[k].name == name) return k;
  throw ValidationError("population '" + populations[population].name + "' has no path '" + name + "'");
}

FlowProfile FlowProfile::zero(const RoutingGame& game) {
  FlowProfile f;
  for (const auto& pop : game.populations) f.path_flow.emplace_back(pop.paths.size(), 0.0);
  return f;
}

FlowProfile FlowProfile::from_fractions(const RoutingGame& game,
                                        const std::vector<std::vector<double>>& fractions) {
  if (fractions.size() != game.populations.size())
    throw ValidationError("policy needs one row per population");
  FlowProfile f = zero(game);
  for (std::size_t p = 0; p < fractions.size(); ++p) {
    if (fractions[p].size() != f.path_flow[p].size())
      throw ValidationError("policy row for population '" + game.populations[p].name +
                            "' has the wrong number of paths");
    for (std::size_t k = 0; k < fractions[p].size(); ++k)
      f.path_flow[p][k] = fractions[p][k] * game.populations[p].mass;
  }
  return f;
}

std::vector<std::vector<double>> FlowProfile::fractions(const RoutingGame& game) const {
  std::vector<std::vector<double>> out = path_flow;
  for (std::size_t p = 0; p < out.size(); ++p) {
    const double m = game.populations[p].mass;
    for (double& x : out[p]) x = m > 0.0 ? x / m : 0.0;
  }
  return out;
}

void check_flow(const RoutingGame& game, const FlowProfile& flow, bool require_mass) {
  if (flow.path_flow.size() != game.populations.size())
    throw ValidationError("flow profile needs one row per population");
  for (std::size_t p = 0; p < game.populations.size(); ++p) {
    const auto& pop = game.populations[p];
    if (flow.path_flow[p].size() != pop.paths.size())
      throw ValidationError("flow row for population '" + pop.name + "' has the wrong length");
    double total = 0.0;
    for (double x : flow.path_flow[p]) {
      if (!(x >= 0.0) || !std::isfinite(x))
        throw ValidationError("flow for population '" + pop.name + "' has an invalid entry");
      total += x;
    }
    if (require_mass && std::abs(total - pop.mass) > 1e-9) {
      std::ostringstream os;
      os << "flow for population '" << pop.name << "' sums to " << total << ", mass is " << pop.mass;
      throw ValidationError(os.str());
    }
  }
}

std::vector<double> resource_load(const RoutingGame& game, const FlowProfile& flow) {
  check_flow(game, flow, false);
  std::vector<double> load(game.resources.size(), 0.0);
  for (std::size_t p = 0; p < game.populations.size(); ++p)
    for (std::size_t k = 0; k < game.populations[p].paths.size(); ++k)
      for (std::size_t r : game.populations[p].paths[k].resources) load[r] += flow.path_flow[p][k];
  return load;
}

namespace {

double cost_at(const RoutingGame& game, const std::vector<double>& load, const Path& path) {
  double c = 0.0;
  for (std::size_t r : path.resources) c += game.resources[r].cost(load[r]);
  return c;
}

std::vector<std::vector<double>> costs_at(const RoutingGame& game, const std::vector<double>& load) {
  std::vector<std::vector<double>> out(game.populations.size());
  for (std::size_t p = 0; p < game.populations.size(); ++p)
    for (const auto& path : game.populations[p].paths) out[p].push_back(cost_at(game, load, path));
  return out;
}

BestResponse argmin(const std::vector<double>& costs) {
  BestResponse br{0, costs[0]};
  for (std::size_t k = 1; k < costs.size(); ++k)
    if (costs[k] < br.cost) br = {k, costs[k]};
  return br;
}

double gap_at(const RoutingGame& game, const FlowProfile& flow,
              const std::vector<std::vector<double>>& costs) {
  double gap = 0.0;
  for (std::size_t p = 0; p < game.populations.size(); ++p) {
    const BestResponse br = argmin(costs[p]);
    for (std::size_t k = 0; k < costs[p].size(); ++k) gap += flow.path_flow[p][k] * costs[p][k];
    gap -= game.populations[p].mass * br.cost;
  }
  return gap;
}

}  // namespace

double path_cost(const RoutingGame& game, const FlowProfile& flow, std::size_t population,
                 std::size_t path) {
  if (population >= game.populations.size()) throw ValidationError("unknown population index");
  if (path >= game.populations[population].paths.size())
    throw ValidationError("population '" + game.populations[population].name + "' has no path " +
                          std::to_string(path));
  return cost_at(game, resource_load(game, flow), game.populations[population].paths[path]);
}

std::vector<std::vector<double>> path_costs(const RoutingGame& game, const FlowProfile& flow) {
  return costs_at(game, resource_load(game, flow));
}

double potential(const RoutingGame& game, const FlowProfile& flow) {
  const auto load = resource_load(game, flow);
  double phi = 0.0;
  for (std::size_t r = 0; r < load.size(); ++r) phi += game.resources[r].cost.integral(load[r]);
  return phi;
}

BestResponse best_response_path(const RoutingGame& game, const FlowProfile& flow,
                                std::size_t population) {
  if (population >= game.populations.size()) throw ValidationError("unknown population index");
  return argmin(path_costs(game, flow)[population]);
}

double epsilon_of_flow(const RoutingGame& game, const FlowProfile& flow, double flow_eps) {
  check_flow(game, flow, true);
  const auto costs = path_costs(game, flow);
  double eps = 0.0;
  for (std::size_t p = 0; p < game.populations.size(); ++p) {
    const double best = argmin(costs[p]).cost;
    for (std::size_t k = 0; k < costs[p].size(); ++k)
      if (flow.path_flow[p][k] > flow_eps) eps = std::max(eps, costs[p][k] - best);
  }
  return eps;
}

WardropReport certify_wardrop(const RoutingGame& game, const FlowProfile& flow, double tol,
                              double flow_eps) {
  check_flow(game, flow, true);
  const auto costs = path_costs(game, flow);
  WardropReport report;
  for (std::size_t p = 0; p < game.populations.size(); ++p) {
    PopulationCertificate cert;
    cert.min_used_cost = std::numeric_limits<double>::infinity();
    cert.max_used_cost = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < costs[p].size(); ++k) {
      if (flow.path_flow[p][k] <= flow_eps) continue;
      cert.used_paths.push_back(k);
      cert.min_used_cost = std::min(cert.min_used_cost, costs[p][k]);
      cert.max_used_cost = std::max(cert.max_used_cost, costs[p][k]);
    }
    if (cert.used_paths.empty()) {
      cert.min_used_cost = cert.max_used_cost = 0.0;
    } else {
      cert.spread = cert.max_used_cost - cert.min_used_cost;
      for (std::size_t k = 0; k < costs[p].size(); ++k)
        if (flow.path_flow[p][k] <= flow_eps && costs[p][k] < cert.max_used_cost - tol)
          report.violations.push_back({p, k, costs[p][k], cert.max_used_cost});
    }
    report.max_spread = std::max(report.max_spread, cert.spread);
    report.populations.push_back(std::move(cert));
  }
  return report;
}

double duality_gap(const RoutingGame& game, const FlowProfile& flow) {
  return gap_at(game, flow, path_costs(game, flow));
}

FrankWolfeResult solve_frank_wolfe(const RoutingGame& game, const FrankWolfeOptions& options) {
  game.validate();
  if (!(options.tol > 0.0)) throw ValidationError("Frank-Wolfe tolerance must be positive");

  const std::size_t np = game.populations.size();
  auto all_or_nothing = [&](const std::vector<std::vector<double>>& costs) {
    FlowProfile d = FlowProfile::zero(game);
    for (std::size_t p = 0; p < np; ++p) d.path_flow[p][argmin(costs[p]).path] = game.populations[p].mass;
    return d;
  };

  FrankWolfeResult out;
  FlowProfile x = all_or_nothing(costs_at(game, std::vector<double>(game.resources.size(), 0.0)));
  std::vector<double> load = resource_load(game, x);

  for (std::size_t k = 1;; ++k) {
    const auto costs = costs_at(game, load);
    const double gap = gap_at(game, x, costs);
    out.gap = gap;
    if (options.record_history) {
      out.gap_history.push_back(gap);
      out.potential_history.push_back(potential(game, x));
    }
    if (gap <= options.tol) {
      out.converged = true;
      break;
    }
    if (out.iterations >= options.max_iters) break;

    const FlowProfile d = all_or_nothing(costs);
    const std::vector<double> d_load = resource_load(game, d);
    std::vector<double> delta(load.size());
    for (std::size_t r = 0; r < load.size(); ++r) delta[r] = d_load[r] - load[r];
    // Directional derivative of the potential along x + t (d - x); nondecreasing in t.
    auto slope = [&](double t) {
      double g = 0.0;
      for (std::size_t r = 0; r < load.size(); ++r)
        g += game.resources[r].cost(load[r] + t * delta[r]) * delta[r];
      return g;
    };
    double step = 2.0 / static_cast<double>(k + 2);
    if (slope(step) > 0.0) {
      double lo = 0.0, hi = step;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid) > 0.0 ? hi : lo) = mid;
      }
      step = lo;
    }
    for (std::size_t p = 0; p < np; ++p)
      for (std::size_t j = 0; j < x.path_flow[p].size(); ++j)
        x.path_flow[p][j] += step * (d.path_flow[p][j] - x.path_flow[p][j]);
    for (std::size_t r = 0; r < load.size(); ++r) load[r] += step * delta[r];
    ++out.iterations;
  }
  out.flow = std::move(x);
  return out;
}

RoutingGame routing_game_from_json(const Json& j) {
  RoutingGame g;
  const Json& res = require_field(j, "resources", "network");
  if (!res.is_array()) throw ValidationError("network.resources: expected an array");
  for (const Json& rj : res) {
    Resource r;
    r.name = field_as<std::string>(rj, "name", "network.resources[]");
    r.cost = CostPolynomial(field_as<std::vector<double>>(rj, "coefficients", "network.resources[" + r.name + "]"));
    g.resources.push_back(std::move(r));
  }
  const Json& pops = require_field(j, "populations", "network");
  if (!pops.is_array()) throw ValidationError("network.populations: expected an array");
  for (const Json& pj : pops) {
    Population pop;
    pop.name = field_as<std::string>(pj, "name", "network.populations[]");
    const std::string ctx = "network.populations[" + pop.name + "]";
    pop.mass = field_as<double>(pj, "mass", ctx);
    const Json& paths = require_field(pj, "paths", ctx);
    if (!paths.is_array()) throw ValidationError(ctx + ".paths: expected an array");
    for (const Json& path_j : paths) {
      Path path;
      path.name = field_as<std::string>(path_j, "name", ctx + ".paths[]");
      for (const auto& rn : field_as<std::vector<std::string>>(path_j, "resources", ctx + ".paths[" + path.name + "]"))
        path.resources.push_back(g.resource_index(rn));
      pop.paths.push_back(std::move(path));
    }
    g.populations.push_back(std::move(pop));
  }
  g.validate();
  return g;
}

RoutingGame load_routing_game(const std::filesystem::path& path) {
  return routing_game_from_json(read_json_file(path));
}

Json routing_game_to_json(const RoutingGame& game) {
  Json j;
  j["resources"] = Json::array();
  for (const auto& r : game.resources)
    j["resources"].push_back({{"name", r.name}, {"coefficients", r.cost.coefficients()}});
  j["populations"] = Json::array();
  for (const auto& pop : game.populations) {
    Json pj{{"name", pop.name}, {"mass", pop.mass}, {"paths", Json::array()}};
    for (const auto& path : pop.paths) {
      std::vector<std::string> names;
      for (std::size_t r : path.resources) names.push_back(game.resources[r].name);
      pj["paths"].push_back({{"name", path.name}, {"resources", names}});
    }
    j["populations"].push_back(std::move(pj));
  }
  return j;
}

}  // namespace sncg::ncg
