#pragma once

// Training loop for LVMQ and the independent-learner baseline, experiment
// records and policy checkpoints.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sncg/env/env.hpp"
#include "sncg/json_util.hpp"
#include "sncg/lvmq/central.hpp"
#include "sncg/lvmq/learner.hpp"
#include "sncg/lvmq/schedule.hpp"

namespace sncg::lvmq {

enum class Algo { Lvmq, Il };

std::string algo_name(Algo a);
Algo parse_algo(const std::string& s);

inline const std::vector<std::uint64_t> kDefaultSeeds = {0, 1, 2022, 5000, 100000};

struct TrainConfig {
  Algo algo = Algo::Lvmq;
  std::size_t group_size = 10;
  NetConfig net;
  std::size_t batch = 32;
  std::size_t warmup = 1000;       // environment steps before the first update
  std::size_t target_sync = 1000;  // individual updates between target syncs
  std::size_t central_capacity = 100000;
  std::size_t individual_capacity = 50000;
  Schedules schedules;
  std::size_t window = 1000;
  std::size_t max_episodes = 0;  // 0 = run until both exploration rates hit the floor
  std::vector<std::uint64_t> seeds = kDefaultSeeds;

  void validate() const;
  std::size_t episodes() const;
};

/// Unknown keys are rejected so typos surface before any training.
TrainConfig train_config_from_json(const Json& j);
Json to_json(const TrainConfig& c);
TrainConfig load_train_config(const std::filesystem::path& path);

struct WindowStat {
  std::size_t index = 0;
  std::size_t steps = 0;
  double mean_reward = 0.0;    // per agent per step
  double mean_variance = 0.0;  // mean nu per step
};

/// Five-number summary: min, 25%, median, 75%, max (linear interpolation).
std::vector<double> quantiles5(std::vector<double> values);
double median(std::vector<double> values);

struct EvalReport {
  std::vector<double> returns;                 // per agent, greedy episode
  double mean_return = 0.0;
  ZoneVariance variance;                       // of max-Q values at the start state
  std::vector<std::vector<double>> zone_values;  // per zone, five-number summary (empty zone: none)
  std::vector<double> nu_quantiles;            // over occupied zones
  std::optional<env::RoutingAudit> audit;
};

struct ExperimentRecord {
  std::string algo;
  std::string env_kind;
  std::uint64_t seed = 0;
  std::size_t agents = 0;
  std::size_t episodes = 0;
  std::size_t steps = 0;
  double suggestion_rate = 0.0;  // fraction of acts that followed the central suggestion
  std::vector<WindowStat> windows;
  EvalReport final;
};

/// Window metrics as CSV: window_index,mean_reward,mean_variance.
std::string windows_csv(const ExperimentRecord& r);
Json to_json(const EvalReport& e);
Json to_json(const ExperimentRecord& r);

/// Learned networks plus the agent-to-group map.
struct TrainedPolicy {
  Algo algo = Algo::Lvmq;
  std::string env_kind;
  std::vector<std::size_t> action_counts;
  std::size_t group_size = 1;
  std::vector<IndividualLearner> learners;
  std::optional<CentralAgent> central;

  std::size_t agent_count() const { return group_of.size(); }
  std::vector<std::size_t> group_of;
  std::vector<double> agent_id;
};

TrainedPolicy make_policy(const env::MultiAgentEnv& env, const TrainConfig& config, std::uint64_t seed);

struct TrainResult {
  ExperimentRecord record;
  TrainedPolicy policy;
};

/// Runs one seeded experiment to completion. Throws ValidationError if the
/// configuration does not fit the environment.
TrainResult run_training(env::MultiAgentEnv& env, const TrainConfig& config, std::uint64_t seed);

/// One greedy episode (no exploration) followed by the environment's audit.
EvalReport evaluate_policy(env::MultiAgentEnv& env, const TrainedPolicy& policy, std::uint64_t seed);

Json policy_to_json(const TrainedPolicy& p);
TrainedPolicy policy_from_json(const Json& j);
void save_policy(const std::filesystem::path& path, const TrainedPolicy& p);
TrainedPolicy load_policy(const std::filesystem::path& path);
/// Throws ValidationError when the policy was trained on a different layout.
void check_policy_fits(const TrainedPolicy& p, const env::MultiAgentEnv& env);

}  // namespace sncg::lvmq
