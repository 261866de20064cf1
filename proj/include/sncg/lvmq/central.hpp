#pragma once

// Central entity: mu(s) proposes per-zone action distributions, sigma(s, a)
// predicts the mean per-zone value variance the agents reach under a.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sncg/lvmq/learner.hpp"
#include "sncg/lvmq/replay.hpp"
#include "sncg/nn/mlp.hpp"

namespace sncg::lvmq {

struct CentralRecord {
  std::vector<double> state;
  double nu = 0.0;
  std::vector<double> action;  // flattened per-zone fractions
};

struct CentralLoss {
  double sigma_loss = 0.0;  // MSE before the sigma step
  double mu_objective = 0.0;  // mean sigma(s, mu(s)) before the mu step
};

class CentralAgent {
 public:
  CentralAgent(std::vector<std::size_t> action_counts, const NetConfig& net, std::size_t capacity,
               std::uint64_t seed);

  std::size_t zone_count() const { return counts_.size(); }
  std::size_t flat_actions() const { return flat_; }

  /// Eval-mode mu(s), split into one distribution per zone.
  std::vector<std::vector<double>> suggest(std::span<const double> state) const;
  /// sigma(s, a) in eval mode.
  double variance(std::span<const double> state, std::span<const double> flat_action) const;

  void remember(CentralRecord r) { buffer_.push(std::move(r)); }
  const ReplayBuffer<CentralRecord>& buffer() const { return buffer_; }

  /// Minibatch update of sigma (MSE to stored nu) then mu (descent on sigma(s, mu(s))).
  /// nullopt and no change when the buffer holds fewer than `batch` records.
  std::optional<CentralLoss> train(std::size_t batch, Rng& rng);

  /// sigma step on explicit records (train-mode dropout).
  double train_sigma(std::span<const CentralRecord> batch, Rng& rng);
  /// mu step on explicit states; returns the objective before the step.
  double train_mu(const std::vector<std::vector<double>>& states, Rng& rng);
  /// Gradient of mean_b sigma(s_b, mu(s_b)) w.r.t. mu's parameters, mu forwards
  /// using `mu_modes`, sigma in eval mode.
  std::vector<double> mu_gradient(const std::vector<std::vector<double>>& states,
                                  std::span<const nn::Mode> mu_modes, double* objective = nullptr) const;

  const nn::ParamSet& mu() const { return mu_; }
  nn::ParamSet& mu() { return mu_; }
  const nn::ParamSet& sigma() const { return sigma_; }
  nn::ParamSet& sigma() { return sigma_; }
  const NetConfig& net_config() const { return net_; }
  const std::vector<std::size_t>& action_counts() const { return counts_; }

 private:
  std::vector<std::size_t> counts_;
  std::size_t flat_ = 0;
  NetConfig net_;
  nn::ParamSet mu_, sigma_;
  ReplayBuffer<CentralRecord> buffer_;
};

nn::MlpSpec mu_spec(const std::vector<std::size_t>& action_counts, const NetConfig& net);
nn::MlpSpec sigma_spec(const std::vector<std::size_t>& action_counts, const NetConfig& net);

}  // namespace sncg::lvmq
