#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sncg/core.hpp"
#include "sncg/errors.hpp"
#include "sncg/random.hpp"

namespace sncg {

namespace {

std::size_t sample_index(std::span<const double> probs, double u) {
  double cum = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cum += probs[k];
    if (u < cum) return k;
  }
  // u landed in the rounding gap at the top; take the last action with positive mass.
  for (std::size_t k = probs.size(); k-- > 0;)
    if (probs[k] > 0.0) return k;
  return 0;
}

std::vector<ValueEstimate> summarize(const std::vector<std::vector<double>>& per_rollout,
                                     std::size_t agents) {
  const auto n = static_cast<double>(per_rollout.size());
  std::vector<ValueEstimate> out(agents);
  for (std::size_t i = 0; i < agents; ++i) {
    double sum = 0.0;
    for (const auto& r : per_rollout) sum += r[i];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : per_rollout) ss += (r[i] - mean) * (r[i] - mean);
    out[i].mean = mean;
    out[i].standard_error = per_rollout.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  }
  return out;
}

void check_estimator_args(const SncgModel& model, const FinitePopulation& population,
                          std::size_t rollouts) {
  model.validate();
  population.validate(model);
  if (rollouts == 0) throw ValidationError("value estimation needs at least one rollout");
}

}  // namespace

LocalPolicy LocalPolicy::deterministic(const SncgModel& model, std::span<const std::size_t> choice) {
  if (choice.size() != model.zone_count())
    throw ValidationError("deterministic policy needs one action per zone");
  LocalPolicy p;
  p.probs.resize(model.zone_count());
  for (std::size_t z = 0; z < model.zone_count(); ++z) {
    p.probs[z].assign(model.action_count(z), 0.0);
    p.probs[z].at(choice[z]) = 1.0;
  }
  return p;
}

bool LocalPolicy::is_deterministic() const {
  return std::all_of(probs.begin(), probs.end(), [](const std::vector<double>& row) {
    return std::count(row.begin(), row.end(), 1.0) == 1;
  });
}

GlobalState FinitePopulation::state(std::size_t zone_count) const {
  std::vector<double> m(zone_count, 0.0);
  const double w = agent_mass();
  for (ZoneId z : zones) m.at(z) += w;
  return GlobalState(std::move(m));
}

void FinitePopulation::validate(const SncgModel& model) const {
  if (zones.empty()) throw ValidationError("population has no agents");
  if (policies.size() != zones.size())
    throw ValidationError("population needs one policy per agent");
  for (std::size_t i = 0; i < zones.size(); ++i) {
    if (zones[i] >= model.zone_count())
      throw ValidationError("agent " + std::to_string(i) + " is in an unknown zone");
    const auto& p = policies[i].probs;
    if (p.size() != model.zone_count())
      throw ValidationError("agent " + std::to_string(i) + " policy has the wrong zone count");
    for (std::size_t z = 0; z < p.size(); ++z) {
      if (p[z].size() != model.action_count(z))
        throw ValidationError("agent " + std::to_string(i) + " policy has the wrong action count");
      double s = 0.0;
      for (double q : p[z]) {
        if (q < 0.0) throw ValidationError("agent " + std::to_string(i) + " has a negative probability");
        s += q;
      }
      if (std::abs(s - 1.0) > 1e-9)
        throw ValidationError("agent " + std::to_string(i) + " policy does not sum to 1");
    }
  }
}

FinitePopulation initial_population(const SncgModel& model, std::size_t agent_count) {
  if (agent_count == 0) throw ValidationError("population needs at least one agent");
  FinitePopulation pop;
  const std::vector<std::size_t> first(model.zone_count(), 0);
  const LocalPolicy p = LocalPolicy::deterministic(model, first);
  for (std::size_t i = 0; i < agent_count; ++i) {
    pop.zones.push_back(i % model.zone_count());
    pop.policies.push_back(p);
  }
  return pop;
}

ActionLoad agent_action_load(const SncgModel& model, std::span<const ZoneId> zones,
                             std::span<const std::size_t> actions, std::span<const double> masses) {
  if (zones.size() != actions.size() || zones.size() != masses.size())
    throw ValidationError("agent_action_load: zones, actions and masses differ in length");
  ActionLoad out{std::vector<double>(model.label_count(), 0.0)};
  for (std::size_t i = 0; i < zones.size(); ++i)
    out.load[model.zones.at(zones[i]).actions.at(actions[i])] += masses[i];
  return out;
}

std::vector<double> rollout_returns(const SncgModel& model, const FinitePopulation& population,
                                    std::uint64_t seed, std::size_t rollout) {
  const std::size_t k_agents = population.agent_count();
  const std::size_t nz = model.zone_count();
  const std::size_t horizon = model.effective_horizon();
  const double w = population.agent_mass();

  std::vector<Rng> rngs;
  rngs.reserve(k_agents);
  for (std::size_t i = 0; i < k_agents; ++i) rngs.emplace_back(derive_seed(seed, rollout, i));

  std::vector<ZoneId> zone = population.zones;
  std::vector<std::size_t> action(k_agents, 0);
  std::vector<double> returns(k_agents, 0.0);
  std::vector<double> zone_reward(nz, 0.0);
  std::vector<double> label_reward(model.label_count(), 0.0);
  double disc = 1.0;

  for (std::size_t t = 0; t < horizon; ++t) {
    std::vector<double> mass(nz, 0.0);
    for (ZoneId z : zone) mass[z] += w;
    const GlobalState state(std::move(mass));

    ActionLoad load{std::vector<double>(model.label_count(), 0.0)};
    for (std::size_t i = 0; i < k_agents; ++i) {
      action[i] = sample_index(population.policies[i].probs[zone[i]], uniform01(rngs[i]));
      load.load[model.zones[zone[i]].actions[action[i]]] += w;
    }

    if (model.reward.regime == RewardRegime::R1) {
      for (ZoneId z = 0; z < nz; ++z) zone_reward[z] = model.reward.fn(state, z, load, std::nullopt);
      for (std::size_t i = 0; i < k_agents; ++i) returns[i] += disc * zone_reward[zone[i]];
    } else {
      for (std::size_t i = 0; i < k_agents; ++i) {
        const ActionId label = model.zones[zone[i]].actions[action[i]];
        returns[i] += disc * model.reward.fn(state, zone[i], load, label);
      }
    }

    for (std::size_t i = 0; i < k_agents; ++i) {
      // Draw both uniforms unconditionally so streams stay aligned across profiles.
      const double u_slip = uniform01(rngs[i]);
      const double u_zone = uniform01(rngs[i]);
      switch (model.transition.kind) {
        case TransitionKind::Identity: break;
        case TransitionKind::Deterministic:
          zone[i] = model.transition.destination[zone[i]][action[i]];
          break;
        case TransitionKind::Stochastic:
          zone[i] = u_slip < model.transition.noise
                        ? std::min(nz - 1, static_cast<ZoneId>(u_zone * static_cast<double>(nz)))
                        : model.transition.destination[zone[i]][action[i]];
          break;
      }
    }
    disc *= model.discount;
  }
  return returns;
}

std::vector<ValueEstimate> estimate_values(const SncgModel& model,
                                           const FinitePopulation& population,
                                           std::size_t rollouts, std::uint64_t seed) {
  check_estimator_args(model, population, rollouts);
  std::vector<std::vector<double>> per(rollouts);
  const auto n = static_cast<long>(rollouts);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r)
    per[static_cast<std::size_t>(r)] =
        rollout_returns(model, population, seed, static_cast<std::size_t>(r));
  return summarize(per, population.agent_count());
}

std::vector<ValueEstimate> estimate_values_serial(const SncgModel& model,
                                                  const FinitePopulation& population,
                                                  std::size_t rollouts, std::uint64_t seed) {
  check_estimator_args(model, population, rollouts);
  std::vector<std::vector<double>> per;
  per.reserve(rollouts);
  for (std::size_t r = 0; r < rollouts; ++r) per.push_back(rollout_returns(model, population, seed, r));
  return summarize(per, population.agent_count());
}

ValueEstimate estimate_value(const SncgModel& model, const FinitePopulation& population,
                             std::size_t agent, std::size_t rollouts, std::uint64_t seed) {
  if (agent >= population.agent_count())
    throw ValidationError("agent " + std::to_string(agent) + " is not in the population");
  return estimate_values(model, population, rollouts, seed)[agent];
}

std::size_t deterministic_policy_count(const SncgModel& model) {
  std::size_t n = 1;
  for (std::size_t z = 0; z < model.zone_count(); ++z) {
    n *= model.action_count(z);
    if (n > kMaxOraclePolicies) return n;
  }
  return n;
}

LocalPolicy deterministic_policy(const SncgModel& model, std::size_t index) {
  std::vector<std::size_t> choice(model.zone_count());
  for (std::size_t z = 0; z < model.zone_count(); ++z) {
    choice[z] = index % model.action_count(z);
    index /= model.action_count(z);
  }
  return LocalPolicy::deterministic(model, choice);
}

EquilibriumResult brute_force_equilibrium(const SncgModel& model, FinitePopulation start,
                                          const EquilibriumOptions& options) {
  model.validate();
  start.validate(model);
  const std::size_t n_policies = deterministic_policy_count(model);
  if (n_policies > kMaxOraclePolicies) {
    std::ostringstream os;
    os << "oracle policy set has " << n_policies << " policies, limit is " << kMaxOraclePolicies;
    throw ValidationError(os.str());
  }
  std::vector<LocalPolicy> candidates;
  for (std::size_t p = 0; p < n_policies; ++p) candidates.push_back(deterministic_policy(model, p));

  auto value_of = [&](const FinitePopulation& pop, std::size_t agent) {
    return estimate_values(model, pop, options.rollouts, options.seed)[agent].mean;
  };

  EquilibriumResult out;
  out.population = std::move(start);
  auto& pop = out.population;
  const std::size_t k_agents = pop.agent_count();

  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 0; i < k_agents; ++i) {
      const double current = value_of(pop, i);
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_p = 0;
      FinitePopulation trial = pop;
      for (std::size_t p = 0; p < n_policies; ++p) {
        trial.policies[i] = candidates[p];
        const double v = value_of(trial, i);
        if (v > best) {
          best = v;
          best_p = p;
        }
      }
      if (best > current + options.tol) {
        pop.policies[i] = candidates[best_p];
        ++out.improvements;
        improved = true;
        if (out.improvements >= options.max_iters) {
          for (const auto& v : estimate_values(model, pop, options.rollouts, options.seed))
            out.values.push_back(v.mean);
          out.converged = false;
          return out;
        }
      }
    }
  }
  for (const auto& v : estimate_values(model, pop, options.rollouts, options.seed))
    out.values.push_back(v.mean);
  out.converged = true;
  return out;
}

EquilibriumResult brute_force_equilibrium(const SncgModel& model, std::size_t agent_count,
                                          const EquilibriumOptions& options) {
  return brute_force_equilibrium(model, initial_population(model, agent_count), options);
}

double max_colocated_spread(const FinitePopulation& population, std::span<const double> values,
                            std::size_t zone_count) {
  std::vector<double> lo(zone_count, std::numeric_limits<double>::infinity());
  std::vector<double> hi(zone_count, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < population.agent_count(); ++i) {
    const ZoneId z = population.zones[i];
    lo[z] = std::min(lo[z], values[i]);
    hi[z] = std::max(hi[z], values[i]);
  }
  double spread = 0.0;
  for (std::size_t z = 0; z < zone_count; ++z)
    if (hi[z] >= lo[z]) spread = std::max(spread, hi[z] - lo[z]);
  return spread;
}

}  // namespace sncg
