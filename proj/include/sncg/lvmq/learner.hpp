#pragma once

// Individual Q-learners. Agents in a group share one network and one replay
// store; the network sees (state, one-hot zone, agent id within the group).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sncg/core.hpp"
#include "sncg/lvmq/replay.hpp"
#include "sncg/nn/mlp.hpp"

namespace sncg::lvmq {

struct Transition {
  std::vector<double> state;
  ZoneId zone = 0;
  std::size_t action = 0;
  double reward = 0.0;  // discounted sum collected until the next decision
  std::vector<double> next_state;
  ZoneId next_zone = 0;
  double discount = 1.0;  // gamma^(steps until the next decision)
  bool terminal = false;
  double agent_id = 0.0;
};

struct NetConfig {
  std::size_t hidden = 256;
  double dropout = 0.5;
  bool layernorm = true;
  nn::AdamConfig adam;
};

class IndividualLearner {
 public:
  IndividualLearner(std::vector<std::size_t> action_counts, const NetConfig& net, std::size_t capacity,
                    std::uint64_t seed);

  std::size_t zone_count() const { return counts_.size(); }
  std::size_t action_count(ZoneId z) const { return counts_[z]; }
  std::vector<double> input(std::span<const double> state, ZoneId zone, double agent_id) const;

  /// Eval-mode Q-values of the actions available in `zone` (online network).
  std::vector<double> q_values(std::span<const double> state, ZoneId zone, double agent_id) const;
  /// max_a Q(s, z, a).
  double value(std::span<const double> state, ZoneId zone, double agent_id) const;
  /// Argmax with ties to the lowest index.
  std::size_t greedy(std::span<const double> state, ZoneId zone, double agent_id) const;

  void remember(Transition t) { buffer_.push(std::move(t)); }
  const ReplayBuffer<Transition>& buffer() const { return buffer_; }

  /// One Adam step on the squared TD error of a uniformly sampled minibatch.
  /// Returns the loss, or nullopt (no update) when the buffer holds fewer than
  /// `batch` records. The target network is synced every `sync_period` updates.
  std::optional<double> train(std::size_t batch, std::size_t sync_period, Rng& rng);
  /// Same step on explicit transitions (no sampling, no buffer requirement).
  double train_on(std::span<const Transition> batch, std::size_t sync_period, Rng& rng);

  const nn::ParamSet& q() const { return q_; }
  nn::ParamSet& q() { return q_; }
  const nn::ParamSet& target() const { return target_; }
  nn::ParamSet& target() { return target_; }
  std::size_t updates() const { return updates_; }
  const NetConfig& net_config() const { return net_; }
  const std::vector<std::size_t>& action_counts() const { return counts_; }

 private:
  double step(const std::vector<const Transition*>& batch, std::size_t sync_period, Rng& rng);

  std::vector<std::size_t> counts_;
  NetConfig net_;
  nn::ParamSet q_, target_;
  ReplayBuffer<Transition> buffer_;
  std::size_t updates_ = 0;
};

nn::MlpSpec q_spec(const std::vector<std::size_t>& action_counts, const NetConfig& net);

enum class Branch { Suggested, Uniform, Greedy };

struct ActDecision {
  std::size_t action = 0;
  Branch branch = Branch::Greedy;
};

/// With probability eps1 sample from the suggestion, else with probability eps2 a
/// uniform action, else argmax of q (ties to the lowest index). Each branch draws a
/// fixed number of uniforms, so seeded runs replay exactly.
ActDecision act(std::span<const double> q_values, std::span<const double> suggestion, double eps1,
                double eps2, Rng& rng);

/// Index drawn from a discrete distribution with one uniform u in [0, 1).
std::size_t sample_discrete(std::span<const double> probs, double u);

/// Per-zone variance of max-Q values: v_i = max_a Q_{g(i)}(s, z_i, a).
ZoneVariance compute_mean_variance(const std::vector<IndividualLearner>& learners,
                                   std::span<const std::size_t> group_of,
                                   std::span<const double> agent_ids, std::span<const double> state,
                                   std::span<const ZoneId> zones);

}  // namespace sncg::lvmq
