#pragma once

// Stochastic non-atomic congestion game model: global states as mass
// distributions over zones, joint flows, action loads, rewards and
// transitions, plus finite-population simulation used by the oracles.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sncg {

using ZoneId = std::size_t;
using ActionId = std::size_t;

inline constexpr double kMassTolerance = 1e-9;

/// Distribution of agent mass over zones; entries are nonnegative and sum to 1.
class GlobalState {
 public:
  GlobalState() = default;
  explicit GlobalState(std::vector<double> masses);

  static GlobalState uniform(std::size_t zones);
  /// All mass in `zone`.
  static GlobalState point(std::size_t zones, ZoneId zone);

  std::span<const double> masses() const { return masses_; }
  double operator[](ZoneId z) const { return masses_[z]; }
  std::size_t zone_count() const { return masses_.size(); }
  const std::vector<double>& vector() const { return masses_; }

  friend bool operator==(const GlobalState&, const GlobalState&) = default;

 private:
  std::vector<double> masses_;
};

/// Per-zone mass split over that zone's local actions (f_z^a).
class JointFlow {
 public:
  JointFlow() = default;
  explicit JointFlow(std::vector<std::vector<double>> flow);

  std::size_t zone_count() const { return flow_.size(); }
  const std::vector<double>& zone(ZoneId z) const { return flow_[z]; }
  double zone_mass(ZoneId z) const;
  const std::vector<std::vector<double>>& values() const { return flow_; }

  /// Throws ValidationError naming the first zone whose flow does not sum to its mass.
  void check_consistent(std::span<const double> zone_masses) const;
  void check_consistent(const GlobalState& state) const { check_consistent(state.masses()); }

  /// Per-zone distributions (fractions). Zones without mass get a uniform split.
  std::vector<std::vector<double>> fractions() const;

  friend bool operator==(const JointFlow&, const JointFlow&) = default;

 private:
  std::vector<std::vector<double>> flow_;
};

/// Total mass selecting each action label across all zones (phi^a).
struct ActionLoad {
  std::vector<double> load;
  double operator[](ActionId label) const { return load[label]; }
  friend bool operator==(const ActionLoad&, const ActionLoad&) = default;
};

enum class RewardRegime { R1, R2 };

/// What the congestion polynomial of a reward is evaluated at.
enum class RewardArgument {
  OwnZoneMass,    // s_z
  ActionLoad,     // phi^label for a fixed label
  OwnActionLoad,  // phi^a for the agent's own action (R2)
  ZoneActionLoad, // phi of the label designated for the agent's zone
};

/// R_z = base_z - sum_k c_k x^k. Coefficients must be nonnegative, so the reward
/// never increases with load. `zone_coefficients`, when set, gives each zone its own.
struct PolynomialReward {
  RewardRegime regime = RewardRegime::R1;
  RewardArgument argument = RewardArgument::OwnZoneMass;
  ActionId label = 0;
  std::vector<ActionId> zone_labels;  // ZoneActionLoad
  std::vector<double> base;
  std::vector<double> coefficients;
  std::vector<std::vector<double>> zone_coefficients;

  double operator()(const GlobalState& s, ZoneId z, const ActionLoad& load,
                    std::optional<ActionId> own_label) const;
};

/// Reward (negative cost) of an agent in zone z; `own_label` is set for R2 models.
using RewardFn = std::function<double(const GlobalState&, ZoneId, const ActionLoad&,
                                      std::optional<ActionId>)>;

struct RewardSpec {
  RewardRegime regime = RewardRegime::R1;
  RewardFn fn;

  static RewardSpec polynomial(PolynomialReward spec);
  static RewardSpec zero(RewardRegime regime = RewardRegime::R1);
  static RewardSpec constant(double r, RewardRegime regime = RewardRegime::R1);
};

enum class TransitionKind { Identity, Deterministic, Stochastic };

/// Deterministic part: destination[z][k] is where local action k in zone z leads.
/// Stochastic adds noise: at flow level a quantized random mass transfer between two
/// zones (|delta| <= noise, multiples of quantum); at agent level each agent lands in
/// a uniformly random zone with probability `noise`.
struct TransitionSpec {
  TransitionKind kind = TransitionKind::Identity;
  std::vector<std::vector<ZoneId>> destination;
  double noise = 0.0;
  double quantum = 0.01;
};

struct Zone {
  std::string name;
  std::vector<ActionId> actions;  // labels of the local actions
};

struct SncgModel {
  std::vector<std::string> action_labels;
  std::vector<Zone> zones;
  RewardSpec reward;
  TransitionSpec transition;
  double discount = 0.9;
  std::size_t horizon = 1;  // 0 = infinite (requires discount < 1)

  std::size_t zone_count() const { return zones.size(); }
  std::size_t label_count() const { return action_labels.size(); }
  std::size_t action_count(ZoneId z) const { return zones[z].actions.size(); }
  std::vector<std::size_t> action_counts() const;

  /// Throws ValidationError / ConfigError.
  void validate() const;
  /// Steps simulated per rollout; infinite horizons are truncated where gamma^H < 1e-12.
  std::size_t effective_horizon() const;
};

ActionLoad action_load(const SncgModel& model, const GlobalState& state, const JointFlow& flow);

struct StepResult {
  GlobalState next;
  std::vector<std::vector<double>> rewards;  // [zone][local action]; R1 rows are constant
};

StepResult step(const SncgModel& model, const GlobalState& state, const JointFlow& flow,
                std::uint64_t seed);

/// Per-zone distribution over local actions.
struct LocalPolicy {
  std::vector<std::vector<double>> probs;

  static LocalPolicy deterministic(const SncgModel& model, std::span<const std::size_t> choice);
  bool is_deterministic() const;
};

/// K agents of mass 1/K each.
struct FinitePopulation {
  std::vector<ZoneId> zones;
  std::vector<LocalPolicy> policies;

  std::size_t agent_count() const { return zones.size(); }
  double agent_mass() const { return 1.0 / static_cast<double>(zones.size()); }
  GlobalState state(std::size_t zone_count) const;
  void validate(const SncgModel& model) const;
};

/// Agents spread over zones as evenly as possible (agent k in zone k mod |Z|) with the
/// all-first-action policy.
FinitePopulation initial_population(const SncgModel& model, std::size_t agent_count);

/// Loads of explicit agents with individual masses: agent i in zone zones[i] picks
/// local action actions[i].
ActionLoad agent_action_load(const SncgModel& model, std::span<const ZoneId> zones,
                             std::span<const std::size_t> actions, std::span<const double> masses);

struct ValueEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Discounted return of every agent in one rollout. Each agent draws from its own
/// random stream (derived from seed, rollout, agent), so comparing profiles that
/// differ in one agent uses common random numbers.
std::vector<double> rollout_returns(const SncgModel& model, const FinitePopulation& population,
                                    std::uint64_t seed, std::size_t rollout);

/// Monte-Carlo value of every agent (OpenMP over rollouts).
std::vector<ValueEstimate> estimate_values(const SncgModel& model,
                                           const FinitePopulation& population,
                                           std::size_t rollouts, std::uint64_t seed);
/// Serial reference for estimate_values; results are bit-identical.
std::vector<ValueEstimate> estimate_values_serial(const SncgModel& model,
                                                  const FinitePopulation& population,
                                                  std::size_t rollouts, std::uint64_t seed);

ValueEstimate estimate_value(const SncgModel& model, const FinitePopulation& population,
                             std::size_t agent, std::size_t rollouts, std::uint64_t seed);

struct ZoneVariance {
  std::vector<double> per_zone;  // population variance; 0 for zones with < 2 agents
  double mean = 0.0;             // over zones with at least one agent
};

ZoneVariance variance_by_zone(std::span<const double> values, std::span<const ZoneId> zones,
                              std::size_t zone_count);

struct EquilibriumOptions {
  std::size_t max_iters = 1000;  // improvement steps
  double tol = 1e-3;
  std::size_t rollouts = 64;
  std::uint64_t seed = 0;
};

struct EquilibriumResult {
  FinitePopulation population;
  std::vector<double> values;
  std::size_t improvements = 0;
  bool converged = false;
};

/// Largest policy set the oracle will enumerate per agent.
inline constexpr std::size_t kMaxOraclePolicies = 256;

/// Number of zone-indexed deterministic policies (product of |A_z|).
std::size_t deterministic_policy_count(const SncgModel& model);
LocalPolicy deterministic_policy(const SncgModel& model, std::size_t index);

/// Round-robin best-response dynamics over deterministic zone-indexed policies.
/// Values use common random numbers, so the dynamics run on one sampled game.
EquilibriumResult brute_force_equilibrium(const SncgModel& model, FinitePopulation start,
                                          const EquilibriumOptions& options = {});
EquilibriumResult brute_force_equilibrium(const SncgModel& model, std::size_t agent_count,
                                          const EquilibriumOptions& options = {});

/// Largest value difference between two agents that start in the same zone.
double max_colocated_spread(const FinitePopulation& population, std::span<const double> values,
                            std::size_t zone_count);

}  // namespace sncg
