#include "sncg/lvmq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "sncg/errors.hpp"

namespace sncg::lvmq {

std::string algo_name(Algo a) { return a == Algo::Lvmq ? "lvmq" : "il"; }

Algo parse_algo(const std::string& s) {
  if (s == "lvmq") return Algo::Lvmq;
  if (s == "il") return Algo::Il;
  throw ConfigError("algo: expected lvmq or il, got '" + s + "'");
}

void TrainConfig::validate() const {
  if (group_size == 0) throw ConfigError("group_size must be positive");
  if (net.hidden == 0) throw ConfigError("hidden must be positive");
  if (!(net.dropout >= 0.0 && net.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(net.adam.lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (central_capacity < batch || individual_capacity < batch)
    throw ConfigError("replay capacities must hold at least one batch");
  if (window == 0) throw ConfigError("window must be positive");
  for (const ExpDecay* e : {&schedules.eps1, &schedules.eps2})
    if (!(e->floor >= 0.0 && e->floor <= 1.0 && e->initial <= 1.0 && e->decay > 0.0 && e->decay < 1.0))
      throw ConfigError("exploration schedules need 0 <= floor, initial <= 1 and decay in (0, 1)");
  if (!(schedules.gamma >= 0.0 && schedules.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (seeds.empty()) throw ConfigError("seed list is empty");
}

std::size_t TrainConfig::episodes() const {
  Schedules s = schedules;
  if (algo == Algo::Il) s.eps1.initial = 0.0;
  const std::size_t e = s.episodes();
  return max_episodes > 0 ? std::min(e, max_episodes) : e;
}

namespace {

ExpDecay decay_from_json(const Json& j, const std::string& ctx, ExpDecay d) {
  static const std::set<std::string> keys = {"initial", "decay", "floor"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!keys.count(it.key())) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
  d.initial = field_or<double>(j, "initial", d.initial, ctx);
  d.decay = field_or<double>(j, "decay", d.decay, ctx);
  d.floor = field_or<double>(j, "floor", d.floor, ctx);
  return d;
}

Json decay_to_json(const ExpDecay& d) {
  return {{"initial", d.initial}, {"decay", d.decay}, {"floor", d.floor}};
}

}  // namespace

TrainConfig train_config_from_json(const Json& j) {
  static const std::set<std::string> keys = {
      "algo", "group_size", "hidden", "dropout", "layernorm", "lr", "batch", "warmup", "target_sync",
      "central_capacity", "individual_capacity", "eps1", "eps2", "gamma", "window", "max_episodes",
      "seeds", "env", "agents", "description"};
  if (!j.is_object()) throw ConfigError("config: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!keys.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
  const std::string ctx = "config";
  TrainConfig c;
  c.algo = parse_algo(field_or<std::string>(j, "algo", "lvmq", ctx));
  c.group_size = field_or<std::size_t>(j, "group_size", c.group_size, ctx);
  c.net.hidden = field_or<std::size_t>(j, "hidden", c.net.hidden, ctx);
  c.net.dropout = field_or<double>(j, "dropout", c.net.dropout, ctx);
  c.net.layernorm = field_or<bool>(j, "layernorm", c.net.layernorm, ctx);
  c.net.adam.lr = field_or<double>(j, "lr", c.net.adam.lr, ctx);
  c.batch = field_or<std::size_t>(j, "batch", c.batch, ctx);
  c.warmup = field_or<std::size_t>(j, "warmup", c.warmup, ctx);
  c.target_sync = field_or<std::size_t>(j, "target_sync", c.target_sync, ctx);
  c.central_capacity = field_or<std::size_t>(j, "central_capacity", c.central_capacity, ctx);
  c.individual_capacity = field_or<std::size_t>(j, "individual_capacity", c.individual_capacity, ctx);
  if (j.contains("eps1")) c.schedules.eps1 = decay_from_json(j["eps1"], "config.eps1", c.schedules.eps1);
  if (j.contains("eps2")) c.schedules.eps2 = decay_from_json(j["eps2"], "config.eps2", c.schedules.eps2);
  c.schedules.gamma = field_or<double>(j, "gamma", c.schedules.gamma, ctx);
  c.window = field_or<std::size_t>(j, "window", c.window, ctx);
  c.max_episodes = field_or<std::size_t>(j, "max_episodes", c.max_episodes, ctx);
  c.seeds = field_or<std::vector<std::uint64_t>>(j, "seeds", c.seeds, ctx);
  c.validate();
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"algo", algo_name(c.algo)},
          {"group_size", c.group_size},
          {"hidden", c.net.hidden},
          {"dropout", c.net.dropout},
          {"layernorm", c.net.layernorm},
          {"lr", c.net.adam.lr},
          {"batch", c.batch},
          {"warmup", c.warmup},
          {"target_sync", c.target_sync},
          {"central_capacity", c.central_capacity},
          {"individual_capacity", c.individual_capacity},
          {"eps1", decay_to_json(c.schedules.eps1)},
          {"eps2", decay_to_json(c.schedules.eps2)},
          {"gamma", c.schedules.gamma},
          {"window", c.window},
          {"max_episodes", c.max_episodes},
          {"seeds", c.seeds}};
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return train_config_from_json(read_json_file(path));
}

std::vector<double> quantiles5(std::vector<double> v) {
  if (v.empty()) return {};
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    out.push_back(v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]));
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ValidationError("median of an empty list");
  return quantiles5(std::move(v))[2];
}

std::string windows_csv(const ExperimentRecord& r) {
  std::string out = "window_index,mean_reward,mean_variance\n";
  char buf[96];
  for (const auto& w : r.windows) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", w.index, w.mean_reward, w.mean_variance);
    out += buf;
  }
  return out;
}

Json to_json(const EvalReport& e) {
  Json j{{"mean_return", e.mean_return},
         {"mean_variance", e.variance.mean},
         {"zone_variance", e.variance.per_zone},
         {"nu_quantiles", e.nu_quantiles},
         {"zone_values", e.zone_values}};
  if (e.audit) {
    j["epsilon_gap"] = e.audit->epsilon_gap;
    j["mean_gap"] = e.audit->mean_gap;
    j["population_value"] = e.audit->population_value;
    j["best_response"] = e.audit->best_response;
    j["cost_variance"] = e.audit->cost_variance;
    if (!e.audit->fractions.empty()) j["fractions"] = e.audit->fractions;
  }
  return j;
}

Json to_json(const ExperimentRecord& r) {
  Json w = Json::array();
  for (const auto& s : r.windows)
    w.push_back({{"index", s.index}, {"steps", s.steps}, {"mean_reward", s.mean_reward},
                 {"mean_variance", s.mean_variance}});
  return {{"algo", r.algo},       {"env", r.env_kind},         {"seed", r.seed},
          {"agents", r.agents},   {"episodes", r.episodes},    {"steps", r.steps},
          {"suggestion_rate", r.suggestion_rate}, {"windows", w}, {"final", to_json(r.final)}};
}

TrainedPolicy make_policy(const env::MultiAgentEnv& env, const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  TrainedPolicy p;
  p.algo = config.algo;
  p.env_kind = env.kind();
  p.action_counts = env.action_counts();
  if (p.action_counts.size() != env.num_zones())
    throw ValidationError("environment reports action counts for the wrong number of zones");
  for (std::size_t c : p.action_counts)
    if (c == 0) throw ValidationError("environment has a zone without actions");
  p.group_size = config.group_size;
  const std::size_t n = env.num_agents();
  const std::size_t groups = (n + config.group_size - 1) / config.group_size;
  for (std::size_t i = 0; i < n; ++i) {
    p.group_of.push_back(i / config.group_size);
    p.agent_id.push_back(static_cast<double>(i % config.group_size) / static_cast<double>(config.group_size));
  }
  for (std::size_t g = 0; g < groups; ++g)
    p.learners.emplace_back(p.action_counts, config.net, config.individual_capacity, derive_seed(seed, 0x51, g));
  if (config.algo == Algo::Lvmq)
    p.central.emplace(p.action_counts, config.net, config.central_capacity, derive_seed(seed, 0xce));
  return p;
}

namespace {

struct Pending {
  bool live = false;
  Transition t;
  double discount = 1.0;  // gamma^(steps since the decision)
};

std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

EvalReport summarize_values(const TrainedPolicy& policy, std::span<const double> state,
                            std::span<const ZoneId> zones) {
  EvalReport e;
  const std::size_t nz = state.size();
  std::vector<double> v(zones.size());
  std::vector<std::vector<double>> by_zone(nz);
  for (std::size_t i = 0; i < zones.size(); ++i) {
    v[i] = policy.learners[policy.group_of[i]].value(state, zones[i], policy.agent_id[i]);
    by_zone[zones[i]].push_back(v[i]);
  }
  e.variance = variance_by_zone(v, zones, nz);
  std::vector<double> occupied;
  for (std::size_t z = 0; z < nz; ++z) {
    e.zone_values.push_back(quantiles5(by_zone[z]));
    if (!by_zone[z].empty()) occupied.push_back(e.variance.per_zone[z]);
  }
  e.nu_quantiles = quantiles5(occupied);
  return e;
}

}  // namespace

void check_policy_fits(const TrainedPolicy& p, const env::MultiAgentEnv& env) {
  if (p.env_kind != env.kind())
    throw ValidationError("policy was trained on '" + p.env_kind + "', environment is '" + env.kind() + "'");
  if (p.action_counts != env.action_counts())
    throw ValidationError("policy zone/action layout does not match the environment");
  if (p.agent_count() != env.num_agents())
    throw ValidationError("policy has " + std::to_string(p.agent_count()) + " agents, environment has " +
                          std::to_string(env.num_agents()));
}

EvalReport evaluate_policy(env::MultiAgentEnv& env, const TrainedPolicy& policy, std::uint64_t seed) {
  check_policy_fits(policy, env);
  env.reset(seed);
  const GlobalState s0 = env.global_state();
  EvalReport e = summarize_values(policy, s0.vector(), env.agent_zones());
  e.returns.assign(env.num_agents(), 0.0);
  std::vector<std::size_t> actions(env.num_agents(), 0);
  for (std::size_t t = 0; t < env.horizon(); ++t) {
    const GlobalState s = env.global_state();
    const auto act = env.active();
    const auto& zones = env.agent_zones();
    for (std::size_t i = 0; i < actions.size(); ++i)
      actions[i] = act[i] ? policy.learners[policy.group_of[i]].greedy(s.vector(), zones[i], policy.agent_id[i]) : 0;
    const auto st = env.step(actions);
    for (std::size_t i = 0; i < actions.size(); ++i) e.returns[i] += st.rewards[i];
    if (st.episode_done) break;
  }
  double sum = 0.0;
  for (double r : e.returns) sum += r;
  e.mean_return = sum / static_cast<double>(e.returns.size());
  e.audit = env.audit();
  return e;
}

TrainResult run_training(env::MultiAgentEnv& env, const TrainConfig& config, std::uint64_t seed) {
  TrainResult out;
  out.policy = make_policy(env, config, seed);
  TrainedPolicy& pol = out.policy;
  ExperimentRecord& rec = out.record;
  rec.algo = algo_name(config.algo);
  rec.env_kind = env.kind();
  rec.seed = seed;
  rec.agents = env.num_agents();
  rec.episodes = config.episodes();

  Rng act_rng(derive_seed(seed, 0xac));
  Rng train_rng(derive_seed(seed, 0x7a));
  const std::size_t n = env.num_agents();
  const std::size_t nz = env.num_zones();
  const double gamma = config.schedules.gamma;
  std::vector<Pending> pending(n);
  std::vector<std::size_t> actions(n, 0);

  WindowStat win;
  std::size_t acts = 0, followed = 0;
  auto close_window = [&]() {
    if (win.steps == 0) return;
    win.mean_reward /= static_cast<double>(win.steps);
    win.mean_variance /= static_cast<double>(win.steps);
    rec.windows.push_back(win);
    win = WindowStat{rec.windows.size(), 0, 0.0, 0.0};
  };

  for (std::size_t ep = 0; ep < rec.episodes; ++ep) {
    const double eps1 = config.algo == Algo::Il ? 0.0 : config.schedules.eps1.at(ep);
    const double eps2 = config.schedules.eps2.at(ep);
    env.reset(derive_seed(seed, 0xe0, ep));
    for (auto& p : pending) p.live = false;

    for (std::size_t t = 0; t < env.horizon(); ++t) {
      const GlobalState s = env.global_state();
      const auto& sv = s.vector();
      const auto active = env.active();
      const std::vector<ZoneId> zones = env.agent_zones();

      std::vector<std::vector<double>> q(n);
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) {
        q[i] = pol.learners[pol.group_of[i]].q_values(sv, zones[i], pol.agent_id[i]);
        v[i] = *std::max_element(q[i].begin(), q[i].end());
      }
      const ZoneVariance nu = variance_by_zone(v, zones, nz);

      for (std::size_t i = 0; i < n; ++i) {
        if (!active[i] || !pending[i].live) continue;
        Transition tr = std::move(pending[i].t);
        tr.next_state = sv;
        tr.next_zone = zones[i];
        tr.discount = pending[i].discount;
        pol.learners[pol.group_of[i]].remember(std::move(tr));
        pending[i].live = false;
      }

      std::vector<std::vector<double>> suggestion;
      if (pol.central) suggestion = pol.central->suggest(sv);
      std::vector<std::vector<double>> count(nz);
      for (std::size_t z = 0; z < nz; ++z) count[z].assign(pol.action_counts[z], 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        actions[i] = 0;
        if (!active[i]) continue;
        const std::span<const double> sug =
            suggestion.empty() ? std::span<const double>{} : std::span<const double>(suggestion[zones[i]]);
        const ActDecision d = act(q[i], sug, eps1, eps2, act_rng);
        actions[i] = d.action;
        count[zones[i]][d.action] += 1.0;
        ++acts;
        if (d.branch == Branch::Suggested) ++followed;
      }
      if (pol.central) {
        const JointFlow a_true(count);
        pol.central->remember({sv, nu.mean, flatten(a_true.fractions())});
      }

      const env::EnvStep st = env.step(actions);
      double reward_sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        reward_sum += st.rewards[i];
        Pending& p = pending[i];
        if (active[i]) {
          p.live = true;
          p.t = Transition{sv, zones[i], actions[i], st.rewards[i], {}, 0, 1.0, false, pol.agent_id[i]};
          p.discount = gamma;
        } else if (p.live) {
          p.t.reward += p.discount * st.rewards[i];
          p.discount *= gamma;
        }
        if (p.live && st.terminal[i]) {
          p.t.terminal = true;
          p.t.next_state = sv;
          p.t.next_zone = p.t.zone;
          p.t.discount = 0.0;
          pol.learners[pol.group_of[i]].remember(std::move(p.t));
          p.live = false;
        }
      }

      win.mean_reward += reward_sum / static_cast<double>(n);
      win.mean_variance += nu.mean;
      ++win.steps;
      ++rec.steps;
      if (win.steps == config.window) close_window();

      if (rec.steps > config.warmup) {
        for (auto& l : pol.learners) l.train(config.batch, config.target_sync, train_rng);
        if (pol.central) pol.central->train(config.batch, train_rng);
      }

      if (st.episode_done) {
        // Truncated episodes bootstrap from the state where they stopped.
        const GlobalState end = env.global_state();
        const auto& end_zones = env.agent_zones();
        for (std::size_t i = 0; i < n; ++i) {
          if (!pending[i].live) continue;
          Transition tr = std::move(pending[i].t);
          tr.next_state = end.vector();
          tr.next_zone = end_zones[i];
          tr.discount = pending[i].discount;
          pol.learners[pol.group_of[i]].remember(std::move(tr));
          pending[i].live = false;
        }
        break;
      }
    }
  }
  close_window();
  rec.suggestion_rate = acts ? static_cast<double>(followed) / static_cast<double>(acts) : 0.0;
  rec.final = evaluate_policy(env, pol, derive_seed(seed, 0xee));
  return out;
}

Json policy_to_json(const TrainedPolicy& p) {
  Json learners = Json::array();
  for (const auto& l : p.learners) learners.push_back(nn::to_json(l.q()));
  Json j{{"format", "sncg-policy"},
         {"version", 1},
         {"algo", algo_name(p.algo)},
         {"env", p.env_kind},
         {"action_counts", p.action_counts},
         {"agents", p.agent_count()},
         {"group_size", p.group_size},
         {"learners", learners}};
  if (p.central) j["central"] = {{"mu", nn::to_json(p.central->mu())}, {"sigma", nn::to_json(p.central->sigma())}};
  return j;
}

TrainedPolicy policy_from_json(const Json& j) {
  const std::string ctx = "policy";
  if (field_as<std::string>(j, "format", ctx) != "sncg-policy")
    throw ValidationError("policy.format: expected sncg-policy");
  if (field_as<int>(j, "version", ctx) != 1) throw ValidationError("policy.version: unsupported");
  TrainedPolicy p;
  p.algo = parse_algo(field_as<std::string>(j, "algo", ctx));
  p.env_kind = field_as<std::string>(j, "env", ctx);
  p.action_counts = field_as<std::vector<std::size_t>>(j, "action_counts", ctx);
  p.group_size = field_as<std::size_t>(j, "group_size", ctx);
  const auto agents = field_as<std::size_t>(j, "agents", ctx);
  if (p.group_size == 0 || p.action_counts.empty()) throw ValidationError("policy: malformed layout");
  const Json& lj = require_field(j, "learners", ctx);
  if (!lj.is_array() || lj.size() != (agents + p.group_size - 1) / p.group_size)
    throw ValidationError("policy.learners: expected one network per agent group");
  for (const Json& q : lj) {
    nn::ParamSet params = nn::params_from_json(q);
    NetConfig net{params.spec().hidden_dim, params.spec().dropout_rate, params.spec().use_layernorm, {}};
    if (!(params.spec() == q_spec(p.action_counts, net)))
      throw ValidationError("policy.learners: network shape does not match the action layout");
    IndividualLearner l(p.action_counts, net, 1, 0);
    l.q() = params;
    l.target() = params;
    p.learners.push_back(std::move(l));
  }
  for (std::size_t i = 0; i < agents; ++i) {
    p.group_of.push_back(i / p.group_size);
    p.agent_id.push_back(static_cast<double>(i % p.group_size) / static_cast<double>(p.group_size));
  }
  if (j.contains("central") && !j["central"].is_null()) {
    nn::ParamSet mu = nn::params_from_json(require_field(j["central"], "mu", "policy.central"));
    nn::ParamSet sigma = nn::params_from_json(require_field(j["central"], "sigma", "policy.central"));
    NetConfig net{mu.spec().hidden_dim, mu.spec().dropout_rate, mu.spec().use_layernorm, {}};
    p.central.emplace(p.action_counts, net, 1, 0);
    if (!(mu.spec() == p.central->mu().spec()) || !(sigma.spec() == sigma_spec(p.action_counts, net)))
      throw ValidationError("policy.central: network shape does not match the action layout");
    p.central->mu() = mu;
    p.central->sigma() = sigma;
  }
  return p;
}

void save_policy(const std::filesystem::path& path, const TrainedPolicy& p) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << policy_to_json(p).dump() << '\n';
}

TrainedPolicy load_policy(const std::filesystem::path& path) { return policy_from_json(read_json_file(path)); }

}  // namespace sncg::lvmq
