#pragma once

// One-hidden-layer perceptron with manual reverse mode:
//   pre    = W1 x + b1
//   normed = gain * (pre - mean) / sqrt(var + eps) + bias     (if layer norm)
//   hidden = dropout(activation(normed))
//   out    = head(W2 hidden + b2)
// The head is either linear or a softmax per block of outputs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sncg/json_util.hpp"

namespace sncg::nn {

enum class Activation { ReLU, Identity };

struct OutputHead {
  enum class Kind { Linear, BlockSoftmax };
  Kind kind = Kind::Linear;
  std::vector<std::size_t> blocks;  // BlockSoftmax only; sizes sum to output_dim

  static OutputHead linear() { return {}; }
  static OutputHead block_softmax(std::vector<std::size_t> blocks) {
    return {Kind::BlockSoftmax, std::move(blocks)};
  }
  friend bool operator==(const OutputHead&, const OutputHead&) = default;
};

struct MlpSpec {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 256;
  std::size_t output_dim = 1;
  OutputHead head;
  double dropout_rate = 0.5;
  bool use_layernorm = true;
  Activation activation = Activation::ReLU;

  void validate() const;
  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Offsets of each parameter block inside the flat weight vector.
struct Layout {
  std::size_t w1, b1, gain, bias, w2, b2, total;
  explicit Layout(const MlpSpec& spec);
};

inline constexpr const char* kBlockNames[] = {"W1", "b1", "ln_gain", "ln_bias", "W2", "b2"};

/// Weights plus Adam state. `version` changes on every in-place update so stale
/// traces can be rejected.
class ParamSet {
 public:
  /// Weights uniform in +-1/sqrt(fan_in); layer-norm gain 1, bias 0.
  ParamSet(const MlpSpec& spec, std::uint64_t seed);
  static ParamSet zeros(const MlpSpec& spec);

  const MlpSpec& spec() const { return spec_; }
  const Layout& layout() const { return layout_; }
  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }
  std::vector<double>& first_moment() { return m_; }
  std::vector<double>& second_moment() { return v_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  std::uint64_t step() const { return step_; }
  std::uint64_t version() const { return version_; }

  /// Name of the parameter block holding flat index i (W1, b1, ...).
  std::string block_name(std::size_t i) const;

  void touch() { ++version_; }
  void set_step(std::uint64_t s) { step_ = s; }

 private:
  explicit ParamSet(const MlpSpec& spec);

  MlpSpec spec_;
  Layout layout_;
  std::vector<double> weights_, m_, v_;
  std::uint64_t step_ = 0;
  std::uint64_t version_ = 0;
};

struct Mode {
  bool train = false;
  std::uint64_t seed = 0;
  static Mode eval() { return {}; }
  static Mode training(std::uint64_t seed) { return {true, seed}; }
};

struct Trace {
  std::vector<double> input, pre, xhat, normed, hidden, mask, output;
  double inv_std = 1.0;
  std::uint64_t version = 0;
  const ParamSet* owner = nullptr;
};

struct Forward {
  std::vector<double> output;
  Trace trace;
};

struct Gradients {
  std::vector<double> params;  // flat, same layout as ParamSet::weights()
  std::vector<double> input;
};

struct BatchGradients {
  std::vector<double> params;              // summed over samples
  std::vector<std::vector<double>> inputs;  // per sample
};

Forward forward(const ParamSet& params, std::span<const double> input, Mode mode = Mode::eval());
/// Eval-mode output only.
std::vector<double> predict(const ParamSet& params, std::span<const double> input);

/// Gradients of <output, output_gradient> w.r.t. parameters and input.
Gradients backward(const ParamSet& params, const Trace& trace,
                   std::span<const double> output_gradient);

/// Batched forward (OpenMP across samples).
std::vector<Forward> forward_batch(const ParamSet& params,
                                   const std::vector<std::vector<double>>& inputs,
                                   std::span<const Mode> modes);
std::vector<Forward> forward_batch_serial(const ParamSet& params,
                                          const std::vector<std::vector<double>>& inputs,
                                          std::span<const Mode> modes);

/// Sum of per-sample gradients. Per-sample work runs in parallel; the sum is taken in
/// sample order, so the result is bit-identical to the serial reference.
BatchGradients backward_batch(const ParamSet& params, std::span<const Trace> traces,
                              const std::vector<std::vector<double>>& output_gradients);
BatchGradients backward_batch_serial(const ParamSet& params, std::span<const Trace> traces,
                                     const std::vector<std::vector<double>>& output_gradients);

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Throws NumericError naming the block on non-finite gradients.
void adam_step(ParamSet& params, std::span<const double> gradients, const AdamConfig& config);

/// Hard copy of weights; Adam moments of the target are left alone.
void sync_target(const ParamSet& source, ParamSet& target);

Json spec_to_json(const MlpSpec& spec);
MlpSpec spec_from_json(const Json& j);
/// Checkpoint document; doubles are written with round-trip precision.
Json to_json(const ParamSet& params);
ParamSet params_from_json(const Json& j);
void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace sncg::nn
