#include "sncg/lvmq/central.hpp"

#include <numeric>

#include "sncg/errors.hpp"

namespace sncg::lvmq {

nn::MlpSpec mu_spec(const std::vector<std::size_t>& action_counts, const NetConfig& net) {
  nn::MlpSpec s;
  s.input_dim = action_counts.size();
  s.hidden_dim = net.hidden;
  s.output_dim = std::accumulate(action_counts.begin(), action_counts.end(), std::size_t{0});
  s.head = nn::OutputHead::block_softmax(action_counts);
  s.dropout_rate = net.dropout;
  s.use_layernorm = net.layernorm;
  return s;
}

nn::MlpSpec sigma_spec(const std::vector<std::size_t>& action_counts, const NetConfig& net) {
  nn::MlpSpec s;
  s.input_dim = action_counts.size() +
                std::accumulate(action_counts.begin(), action_counts.end(), std::size_t{0});
  s.hidden_dim = net.hidden;
  s.output_dim = 1;
  s.dropout_rate = net.dropout;
  s.use_layernorm = net.layernorm;
  return s;
}

CentralAgent::CentralAgent(std::vector<std::size_t> action_counts, const NetConfig& net,
                           std::size_t capacity, std::uint64_t seed)
    : counts_(std::move(action_counts)),
      flat_(std::accumulate(counts_.begin(), counts_.end(), std::size_t{0})),
      net_(net),
      mu_(mu_spec(counts_, net), derive_seed(seed, 1)),
      sigma_(sigma_spec(counts_, net), derive_seed(seed, 2)),
      buffer_(capacity) {}

std::vector<std::vector<double>> CentralAgent::suggest(std::span<const double> state) const {
  if (state.size() != counts_.size()) throw ValidationError("suggest: state has the wrong number of zones");
  const auto flat = nn::predict(mu_, state);
  std::vector<std::vector<double>> out;
  std::size_t off = 0;
  for (std::size_t c : counts_) {
    out.emplace_back(flat.begin() + static_cast<long>(off), flat.begin() + static_cast<long>(off + c));
    off += c;
  }
  return out;
}

namespace {

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> x(a.begin(), a.end());
  x.insert(x.end(), b.begin(), b.end());
  return x;
}

}  // namespace

double CentralAgent::variance(std::span<const double> state, std::span<const double> flat_action) const {
  if (flat_action.size() != flat_) throw ValidationError("variance: joint action has the wrong size");
  return nn::predict(sigma_, concat(state, flat_action))[0];
}

double CentralAgent::train_sigma(std::span<const CentralRecord> batch, Rng& rng) {
  if (batch.empty()) throw ValidationError("train_sigma: empty minibatch");
  const std::size_t n = batch.size();
  std::vector<std::vector<double>> inputs(n);
  std::vector<nn::Mode> modes(n);
  for (std::size_t b = 0; b < n; ++b) {
    if (batch[b].action.size() != flat_) throw ValidationError("train_sigma: joint action has the wrong size");
    inputs[b] = concat(batch[b].state, batch[b].action);
    modes[b] = nn::Mode::training(rng());
  }
  const auto fwd = nn::forward_batch(sigma_, inputs, modes);
  std::vector<nn::Trace> traces;
  std::vector<std::vector<double>> dy(n);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t b = 0; b < n; ++b) {
    const double err = fwd[b].output[0] - batch[b].nu;
    loss += err * err * inv_n;
    dy[b] = {2.0 * err * inv_n};
    traces.push_back(fwd[b].trace);
  }
  const auto g = nn::backward_batch(sigma_, traces, dy);
  nn::adam_step(sigma_, g.params, net_.adam);
  return loss;
}

std::vector<double> CentralAgent::mu_gradient(const std::vector<std::vector<double>>& states,
                                              std::span<const nn::Mode> mu_modes,
                                              double* objective) const {
  const std::size_t n = states.size();
  if (n == 0) throw ValidationError("mu_gradient: no states");
  const std::size_t nz = counts_.size();
  const auto mu_fwd = nn::forward_batch(mu_, states, mu_modes);

  std::vector<std::vector<double>> sig_in(n);
  for (std::size_t b = 0; b < n; ++b) sig_in[b] = concat(states[b], mu_fwd[b].output);
  const std::vector<nn::Mode> eval(n, nn::Mode::eval());
  const auto sig_fwd = nn::forward_batch(sigma_, sig_in, eval);

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<nn::Trace> sig_traces, mu_traces;
  double obj = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    obj += sig_fwd[b].output[0] * inv_n;
    sig_traces.push_back(sig_fwd[b].trace);
    mu_traces.push_back(mu_fwd[b].trace);
  }
  if (objective) *objective = obj;
  const std::vector<std::vector<double>> ones(n, std::vector<double>{inv_n});
  const auto sig_grad = nn::backward_batch(sigma_, sig_traces, ones);

  // d sigma / d a is the tail of sigma's input gradient; chain it through mu.
  std::vector<std::vector<double>> da(n);
  for (std::size_t b = 0; b < n; ++b)
    da[b].assign(sig_grad.inputs[b].begin() + static_cast<long>(nz), sig_grad.inputs[b].end());
  return nn::backward_batch(mu_, mu_traces, da).params;
}

double CentralAgent::train_mu(const std::vector<std::vector<double>>& states, Rng& rng) {
  std::vector<nn::Mode> modes(states.size());
  for (auto& m : modes) m = nn::Mode::training(rng());
  double obj = 0.0;
  const auto g = mu_gradient(states, modes, &obj);
  nn::adam_step(mu_, g, net_.adam);
  return obj;
}

std::optional<CentralLoss> CentralAgent::train(std::size_t batch, Rng& rng) {
  if (batch == 0 || buffer_.size() < batch) return std::nullopt;
  std::vector<CentralRecord> sample;
  sample.reserve(batch);
  for (std::size_t k : buffer_.sample_indices(batch, rng)) sample.push_back(buffer_.at(k));
  CentralLoss out;
  out.sigma_loss = train_sigma(sample, rng);
  std::vector<std::vector<double>> states;
  for (const auto& r : sample) states.push_back(r.state);
  out.mu_objective = train_mu(states, rng);
  return out;
}

}  // namespace sncg::lvmq
