#include "sncg/lvmq/learner.hpp"

#include <algorithm>
#include <numeric>

#include "sncg/errors.hpp"

namespace sncg::lvmq {

nn::MlpSpec q_spec(const std::vector<std::size_t>& action_counts, const NetConfig& net) {
  nn::MlpSpec s;
  const std::size_t nz = action_counts.size();
  s.input_dim = 2 * nz + 1;
  s.hidden_dim = net.hidden;
  s.output_dim = *std::max_element(action_counts.begin(), action_counts.end());
  s.dropout_rate = net.dropout;
  s.use_layernorm = net.layernorm;
  return s;
}

IndividualLearner::IndividualLearner(std::vector<std::size_t> action_counts, const NetConfig& net,
                                     std::size_t capacity, std::uint64_t seed)
    : counts_(std::move(action_counts)),
      net_(net),
      q_(q_spec(counts_, net), seed),
      target_(q_),
      buffer_(capacity) {
  target_.touch();
}

std::vector<double> IndividualLearner::input(std::span<const double> state, ZoneId zone,
                                             double agent_id) const {
  const std::size_t nz = counts_.size();
  if (state.size() != nz) throw ValidationError("learner: state has the wrong number of zones");
  if (zone >= nz) throw ValidationError("learner: zone out of range");
  std::vector<double> x(2 * nz + 1, 0.0);
  std::copy(state.begin(), state.end(), x.begin());
  x[nz + zone] = 1.0;
  x[2 * nz] = agent_id;
  return x;
}

std::vector<double> IndividualLearner::q_values(std::span<const double> state, ZoneId zone,
                                                double agent_id) const {
  auto out = nn::predict(q_, input(state, zone, agent_id));
  out.resize(counts_[zone]);
  return out;
}

double IndividualLearner::value(std::span<const double> state, ZoneId zone, double agent_id) const {
  const auto q = q_values(state, zone, agent_id);
  return *std::max_element(q.begin(), q.end());
}

std::size_t IndividualLearner::greedy(std::span<const double> state, ZoneId zone, double agent_id) const {
  const auto q = q_values(state, zone, agent_id);
  return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

std::optional<double> IndividualLearner::train(std::size_t batch, std::size_t sync_period, Rng& rng) {
  if (batch == 0 || buffer_.size() < batch) return std::nullopt;
  std::vector<const Transition*> sample;
  sample.reserve(batch);
  for (std::size_t k : buffer_.sample_indices(batch, rng)) sample.push_back(&buffer_.at(k));
  return step(sample, sync_period, rng);
}

double IndividualLearner::train_on(std::span<const Transition> batch, std::size_t sync_period, Rng& rng) {
  if (batch.empty()) throw ValidationError("train_on: empty minibatch");
  std::vector<const Transition*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  return step(ptrs, sync_period, rng);
}

double IndividualLearner::step(const std::vector<const Transition*>& batch, std::size_t sync_period,
                               Rng& rng) {
  const std::size_t n = batch.size();
  std::vector<double> y(n);
  std::vector<std::vector<double>> inputs(n);
  std::vector<nn::Mode> modes(n);
  for (std::size_t b = 0; b < n; ++b) {
    const Transition& t = *batch[b];
    if (t.action >= counts_.at(t.zone)) throw ValidationError("train_on: action not available in zone");
    y[b] = t.reward;
    if (!t.terminal) {
      auto tq = nn::predict(target_, input(t.next_state, t.next_zone, t.agent_id));
      tq.resize(counts_.at(t.next_zone));
      y[b] += t.discount * *std::max_element(tq.begin(), tq.end());
    }
    inputs[b] = input(t.state, t.zone, t.agent_id);
    modes[b] = nn::Mode::training(rng());
  }
  auto fwd = nn::forward_batch(q_, inputs, modes);
  std::vector<nn::Trace> traces;
  traces.reserve(n);
  std::vector<std::vector<double>> dy(n, std::vector<double>(q_.spec().output_dim, 0.0));
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t b = 0; b < n; ++b) {
    const double err = fwd[b].output[batch[b]->action] - y[b];
    loss += err * err * inv_n;
    dy[b][batch[b]->action] = 2.0 * err * inv_n;
    traces.push_back(std::move(fwd[b].trace));
  }
  const auto g = nn::backward_batch(q_, traces, dy);
  nn::adam_step(q_, g.params, net_.adam);
  ++updates_;
  if (sync_period > 0 && updates_ % sync_period == 0) nn::sync_target(q_, target_);
  return loss;
}

std::size_t sample_discrete(std::span<const double> probs, double u) {
  double cum = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cum += probs[k];
    if (u < cum) return k;
  }
  for (std::size_t k = probs.size(); k-- > 0;)
    if (probs[k] > 0.0) return k;
  return 0;
}

ActDecision act(std::span<const double> q_values, std::span<const double> suggestion, double eps1,
                double eps2, Rng& rng) {
  if (q_values.empty()) throw ValidationError("act: zone has no actions");
  const double u1 = uniform01(rng);
  if (u1 < eps1) {
    if (suggestion.size() != q_values.size()) throw ValidationError("act: suggestion has the wrong size");
    return {sample_discrete(suggestion, uniform01(rng)), Branch::Suggested};
  }
  if (uniform01(rng) < eps2) return {uniform_index(rng, q_values.size()), Branch::Uniform};
  const auto it = std::max_element(q_values.begin(), q_values.end());
  return {static_cast<std::size_t>(it - q_values.begin()), Branch::Greedy};
}

ZoneVariance compute_mean_variance(const std::vector<IndividualLearner>& learners,
                                   std::span<const std::size_t> group_of,
                                   std::span<const double> agent_ids, std::span<const double> state,
                                   std::span<const ZoneId> zones) {
  if (group_of.size() != zones.size() || agent_ids.size() != zones.size())
    throw ValidationError("compute_mean_variance: one group, id and zone per agent");
  std::vector<double> v(zones.size());
  for (std::size_t i = 0; i < zones.size(); ++i)
    v[i] = learners.at(group_of[i]).value(state, zones[i], agent_ids[i]);
  return variance_by_zone(v, zones, state.size());
}

}  // namespace sncg::lvmq
