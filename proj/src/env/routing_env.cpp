#include "sncg/env/routing_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "sncg/errors.hpp"

namespace sncg::env {

std::vector<std::size_t> agents_per_population(const ncg::RoutingGame& game, std::size_t agents) {
  const std::size_t np = game.populations.size();
  if (agents < np)
    throw ValidationError("routing environment needs at least one agent per population (" +
                          std::to_string(np) + ")");
  double total = 0.0;
  for (const auto& p : game.populations) total += p.mass;
  std::vector<std::size_t> count(np);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t p = 0; p < np; ++p) {
    const double exact = static_cast<double>(agents) * game.populations[p].mass / total;
    count[p] = static_cast<std::size_t>(std::floor(exact));
    used += count[p];
    rem.emplace_back(-(exact - std::floor(exact)), p);
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t k = 0; used < agents; ++k, ++used) ++count[rem[k % np].second];
  // Every population must be represented.
  for (std::size_t p = 0; p < np; ++p) {
    if (count[p] > 0) continue;
    auto donor = std::max_element(count.begin(), count.end());
    --*donor;
    ++count[p];
  }
  return count;
}

SingleStageRoutingEnv::SingleStageRoutingEnv(ncg::RoutingGame game, std::size_t agents)
    : game_(std::move(game)) {
  game_.validate();
  const auto counts = agents_per_population(game_, agents);
  for (std::size_t p = 0; p < counts.size(); ++p)
    for (std::size_t k = 0; k < counts[p]; ++k) {
      zones_.push_back(p);
      agent_mass_.push_back(game_.populations[p].mass / static_cast<double>(counts[p]));
    }
}

std::vector<std::size_t> SingleStageRoutingEnv::action_counts() const {
  std::vector<std::size_t> out;
  for (const auto& p : game_.populations) out.push_back(p.paths.size());
  return out;
}

void SingleStageRoutingEnv::reset(std::uint64_t) { last_actions_.clear(); }

GlobalState SingleStageRoutingEnv::global_state() const {
  std::vector<double> m;
  double total = 0.0;
  for (const auto& p : game_.populations) total += p.mass;
  for (const auto& p : game_.populations) m.push_back(p.mass / total);
  return GlobalState(std::move(m));
}

ncg::FlowProfile SingleStageRoutingEnv::induced_flow(const std::vector<std::size_t>& actions) const {
  check_actions(*this, actions);
  ncg::FlowProfile flow = ncg::FlowProfile::zero(game_);
  for (std::size_t i = 0; i < zones_.size(); ++i) flow.path_flow[zones_[i]][actions[i]] += agent_mass_[i];
  return flow;
}

EnvStep SingleStageRoutingEnv::step(const std::vector<std::size_t>& actions) {
  const ncg::FlowProfile flow = induced_flow(actions);
  const auto costs = ncg::path_costs(game_, flow);
  EnvStep out;
  out.rewards.resize(zones_.size());
  for (std::size_t i = 0; i < zones_.size(); ++i) out.rewards[i] = -costs[zones_[i]][actions[i]];
  out.terminal.assign(zones_.size(), true);
  out.episode_done = true;
  last_actions_ = actions;
  return out;
}

RoutingAudit audit_flow(const ncg::RoutingGame& game, const ncg::FlowProfile& flow) {
  ncg::check_flow(game, flow, false);
  RoutingAudit a;
  a.epsilon_gap = ncg::epsilon_of_flow(game, flow);
  a.fractions = flow.fractions(game);
  const auto costs = ncg::path_costs(game, flow);
  double gap_sum = 0.0, mass_sum = 0.0;
  for (std::size_t p = 0; p < game.populations.size(); ++p) {
    const auto& f = flow.path_flow[p];
    const double m = std::accumulate(f.begin(), f.end(), 0.0);
    double mean = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) mean += f[k] * costs[p][k];
    mean = m > 0.0 ? mean / m : 0.0;
    double var = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) var += f[k] * (costs[p][k] - mean) * (costs[p][k] - mean);
    a.population_value.push_back(mean);
    a.best_response.push_back(*std::min_element(costs[p].begin(), costs[p].end()));
    a.cost_variance.push_back(m > 0.0 ? var / m : 0.0);
    gap_sum += m * (mean - a.best_response.back());
    mass_sum += m;
  }
  a.mean_gap = mass_sum > 0.0 ? gap_sum / mass_sum : 0.0;
  return a;
}

std::optional<RoutingAudit> SingleStageRoutingEnv::audit() const {
  if (last_actions_.empty()) return std::nullopt;
  return audit_flow(game_, induced_flow(last_actions_));
}

RoutingNetwork network_from_game_json(const Json& j) {
  const ncg::RoutingGame game = ncg::routing_game_from_json(j);
  RoutingNetwork net;
  std::map<std::string, std::size_t> node_index;
  auto node = [&](const std::string& name) {
    auto [it, fresh] = node_index.emplace(name, net.nodes.size());
    if (fresh) net.nodes.push_back(name);
    return it->second;
  };
  const Json& res = j.at("resources");
  for (std::size_t r = 0; r < game.resources.size(); ++r) {
    const std::string ctx = "network.resources[" + game.resources[r].name + "]";
    Edge e;
    e.name = game.resources[r].name;
    e.from = node(field_as<std::string>(res[r], "from", ctx));
    e.to = node(field_as<std::string>(res[r], "to", ctx));
    e.cost = game.resources[r].cost;
    net.edges.push_back(std::move(e));
  }
  for (const auto& gp : game.populations) {
    RoutePopulation p;
    p.name = gp.name;
    p.mass = gp.mass;
    p.next_edges.resize(net.nodes.size());
    for (std::size_t k = 0; k < gp.paths.size(); ++k) {
      const auto& path = gp.paths[k];
      const std::string ctx = "population " + gp.name + " path " + path.name;
      const std::size_t o = net.edges[path.resources.front()].from;
      const std::size_t d = net.edges[path.resources.back()].to;
      if (k == 0) {
        p.origin = o;
        p.destination = d;
      } else if (o != p.origin || d != p.destination) {
        throw ValidationError(ctx + ": origin/destination differ from the population's first path");
      }
      for (std::size_t s = 0; s < path.resources.size(); ++s) {
        const Edge& e = net.edges[path.resources[s]];
        if (s > 0 && net.edges[path.resources[s - 1]].to != e.from)
          throw ValidationError(ctx + ": edges are not contiguous");
        auto& nx = p.next_edges[e.from];
        if (std::find(nx.begin(), nx.end(), path.resources[s]) == nx.end()) nx.push_back(path.resources[s]);
      }
    }
    if (!p.next_edges[p.destination].empty())
      throw ValidationError("population " + p.name + ": paths leave the destination");
    net.populations.push_back(std::move(p));
  }
  return net;
}

MultistageBestResponse multistage_best_response(const RoutingNetwork& net, const TimedLoads& loads,
                                                std::size_t horizon,
                                                const std::vector<double>& achieved) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t nn = net.nodes.size();
  MultistageBestResponse out;
  for (std::size_t p = 0; p < net.populations.size(); ++p) {
    const auto& pop = net.populations[p];
    std::vector<double> next(nn, kInf), cur(nn);
    next[pop.destination] = 0.0;
    for (std::size_t t = horizon; t-- > 0;) {
      for (std::size_t n = 0; n < nn; ++n) {
        if (n == pop.destination) {
          cur[n] = 0.0;
          continue;
        }
        double best = kInf;
        for (std::size_t e : pop.next_edges[n]) {
          const double load = t < loads.size() ? loads[t][e] : 0.0;
          best = std::min(best, net.edges[e].cost(load) + next[net.edges[e].to]);
        }
        cur[n] = best;
      }
      std::swap(cur, next);
    }
    const double v = next[pop.origin];
    if (!std::isfinite(v))
      throw NumericError("population " + pop.name + " cannot reach its destination within " +
                         std::to_string(horizon) + " steps");
    out.value.push_back(v);
    if (p < achieved.size()) {
      out.gap.push_back(achieved[p] - v);
      out.epsilon_gap = std::max(out.epsilon_gap, achieved[p] - v);
    }
  }
  return out;
}

MultiStageRoutingEnv::MultiStageRoutingEnv(RoutingNetwork net, std::size_t agents,
                                           std::size_t horizon_cap)
    : net_(std::move(net)), horizon_cap_(horizon_cap) {
  if (horizon_cap_ == 0) throw ValidationError("multistage routing needs a positive horizon cap");
  if (agents < net_.populations.size())
    throw ValidationError("routing environment needs at least one agent per population");
  ncg::RoutingGame shell;
  for (const auto& p : net_.populations) shell.populations.push_back({p.name, p.mass, {}});
  const auto counts = agents_per_population(shell, agents);
  for (std::size_t p = 0; p < counts.size(); ++p)
    for (std::size_t k = 0; k < counts[p]; ++k) {
      pop_of_.push_back(p);
      agent_mass_.push_back(net_.populations[p].mass / static_cast<double>(counts[p]));
    }
  reset(0);
}

std::vector<std::size_t> MultiStageRoutingEnv::action_counts() const {
  std::vector<std::size_t> out;
  for (const auto& p : net_.populations)
    for (const auto& nx : p.next_edges) out.push_back(std::max<std::size_t>(1, nx.size()));
  return out;
}

void MultiStageRoutingEnv::reset(std::uint64_t) {
  zones_.resize(pop_of_.size());
  for (std::size_t i = 0; i < pop_of_.size(); ++i) zones_[i] = zone_of(pop_of_[i], net_.populations[pop_of_[i]].origin);
  cost_.assign(pop_of_.size(), 0.0);
  loads_.clear();
  t_ = 0;
  done_ = false;
}

GlobalState MultiStageRoutingEnv::global_state() const {
  std::vector<double> m(num_zones(), 0.0);
  double total = 0.0;
  for (double w : agent_mass_) total += w;
  for (std::size_t i = 0; i < zones_.size(); ++i) m[zones_[i]] += agent_mass_[i] / total;
  return GlobalState(std::move(m));
}

std::vector<bool> MultiStageRoutingEnv::active() const {
  const std::size_t nn = net_.nodes.size();
  std::vector<bool> out(zones_.size());
  for (std::size_t i = 0; i < zones_.size(); ++i)
    out[i] = !done_ && zones_[i] % nn != net_.populations[pop_of_[i]].destination;
  return out;
}

EnvStep MultiStageRoutingEnv::step(const std::vector<std::size_t>& actions) {
  if (done_) throw ValidationError("step called on a finished episode; reset first");
  check_actions(*this, actions);
  const std::size_t nn = net_.nodes.size();
  const auto act = active();
  std::vector<double> load(net_.edges.size(), 0.0);
  std::vector<std::size_t> edge(zones_.size(), 0);
  for (std::size_t i = 0; i < zones_.size(); ++i) {
    if (!act[i]) continue;
    const auto& nx = net_.populations[pop_of_[i]].next_edges[zones_[i] % nn];
    edge[i] = nx[actions[i]];
    load[edge[i]] += agent_mass_[i];
  }
  EnvStep out;
  out.rewards.assign(zones_.size(), 0.0);
  out.terminal.assign(zones_.size(), false);
  bool all_arrived = true;
  for (std::size_t i = 0; i < zones_.size(); ++i) {
    if (!act[i]) continue;
    const Edge& e = net_.edges[edge[i]];
    const double c = e.cost(load[edge[i]]);
    out.rewards[i] = -c;
    cost_[i] += c;
    zones_[i] = zone_of(pop_of_[i], e.to);
    if (e.to == net_.populations[pop_of_[i]].destination) out.terminal[i] = true;
    else all_arrived = false;
  }
  loads_.push_back(std::move(load));
  ++t_;
  done_ = all_arrived || t_ >= horizon_cap_;
  out.episode_done = done_;
  return out;
}

std::optional<RoutingAudit> MultiStageRoutingEnv::audit() const {
  if (loads_.empty()) return std::nullopt;
  const std::size_t np = net_.populations.size();
  RoutingAudit a;
  std::vector<double> sum(np, 0.0), sq(np, 0.0), n(np, 0.0);
  for (std::size_t i = 0; i < pop_of_.size(); ++i) {
    sum[pop_of_[i]] += cost_[i];
    n[pop_of_[i]] += 1.0;
  }
  for (std::size_t p = 0; p < np; ++p) a.population_value.push_back(sum[p] / n[p]);
  for (std::size_t i = 0; i < pop_of_.size(); ++i) {
    const double d = cost_[i] - a.population_value[pop_of_[i]];
    sq[pop_of_[i]] += d * d;
  }
  for (std::size_t p = 0; p < np; ++p) a.cost_variance.push_back(sq[p] / n[p]);
  const auto br = multistage_best_response(net_, loads_, horizon_cap_, a.population_value);
  a.best_response = br.value;
  a.epsilon_gap = br.epsilon_gap;
  double gap_sum = 0.0, mass_sum = 0.0;
  for (std::size_t p = 0; p < np; ++p) {
    gap_sum += net_.populations[p].mass * br.gap[p];
    mass_sum += net_.populations[p].mass;
  }
  a.mean_gap = gap_sum / mass_sum;
  return a;
}

}  // namespace sncg::env
