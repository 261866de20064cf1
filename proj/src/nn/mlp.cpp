#include "sncg/nn/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sncg/errors.hpp"
#include "sncg/random.hpp"

namespace sncg::nn {

namespace {

constexpr double kLayerNormEps = 1e-5;

}  // namespace

void MlpSpec::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0)
    throw ValidationError("network dimensions must be positive");
  if (!(dropout_rate >= 0.0) || dropout_rate >= 1.0)
    throw ValidationError("dropout rate must lie in [0, 1)");
  if (head.kind == OutputHead::Kind::BlockSoftmax) {
    if (head.blocks.empty()) throw ValidationError("softmax head needs at least one block");
    std::size_t total = 0;
    for (std::size_t b : head.blocks) {
      if (b == 0) throw ValidationError("softmax blocks must be nonempty");
      total += b;
    }
    if (total != output_dim) throw ValidationError("softmax block sizes must sum to output_dim");
  }
}

Layout::Layout(const MlpSpec& spec) {
  w1 = 0;
  b1 = w1 + spec.hidden_dim * spec.input_dim;
  gain = b1 + spec.hidden_dim;
  bias = gain + spec.hidden_dim;
  w2 = bias + spec.hidden_dim;
  b2 = w2 + spec.output_dim * spec.hidden_dim;
  total = b2 + spec.output_dim;
}

ParamSet::ParamSet(const MlpSpec& spec) : spec_(spec), layout_((spec.validate(), spec)) {
  weights_.assign(layout_.total, 0.0);
  m_.assign(layout_.total, 0.0);
  v_.assign(layout_.total, 0.0);
}

ParamSet::ParamSet(const MlpSpec& spec, std::uint64_t seed) : ParamSet(spec) {
  Rng rng(seed);
  auto fill = [&](std::size_t from, std::size_t to, double bound) {
    for (std::size_t i = from; i < to; ++i) weights_[i] = (2.0 * uniform01(rng) - 1.0) * bound;
  };
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
  const double hid_bound = 1.0 / std::sqrt(static_cast<double>(spec.hidden_dim));
  fill(layout_.w1, layout_.gain, in_bound);
  std::fill(weights_.begin() + static_cast<long>(layout_.gain),
            weights_.begin() + static_cast<long>(layout_.bias), 1.0);
  fill(layout_.w2, layout_.total, hid_bound);
}

ParamSet ParamSet::zeros(const MlpSpec& spec) {
  ParamSet p(spec);
  std::fill(p.weights_.begin() + static_cast<long>(p.layout_.gain),
            p.weights_.begin() + static_cast<long>(p.layout_.bias), 1.0);
  return p;
}

std::string ParamSet::block_name(std::size_t i) const {
  const std::size_t starts[] = {layout_.w1, layout_.b1, layout_.gain, layout_.bias, layout_.w2, layout_.b2};
  std::size_t block = 0;
  for (std::size_t b = 0; b < 6; ++b)
    if (i >= starts[b]) block = b;
  return kBlockNames[block];
}

Forward forward(const ParamSet& params, std::span<const double> input, Mode mode) {
  const MlpSpec& s = params.spec();
  if (input.size() != s.input_dim)
    throw ValidationError("forward: input has " + std::to_string(input.size()) +
                          " entries, network expects " + std::to_string(s.input_dim));
  const Layout& L = params.layout();
  const auto w = params.weights();
  const std::size_t H = s.hidden_dim, I = s.input_dim, O = s.output_dim;

  Forward f;
  Trace& t = f.trace;
  t.input.assign(input.begin(), input.end());
  t.pre.resize(H);
  for (std::size_t h = 0; h < H; ++h) {
    const double* row = &w[L.w1 + h * I];
    double acc = w[L.b1 + h];
    for (std::size_t i = 0; i < I; ++i) acc += row[i] * input[i];
    t.pre[h] = acc;
  }

  t.normed.resize(H);
  if (s.use_layernorm) {
    const double mean = std::accumulate(t.pre.begin(), t.pre.end(), 0.0) / static_cast<double>(H);
    double var = 0.0;
    for (double p : t.pre) var += (p - mean) * (p - mean);
    var /= static_cast<double>(H);
    t.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    t.xhat.resize(H);
    for (std::size_t h = 0; h < H; ++h) {
      t.xhat[h] = (t.pre[h] - mean) * t.inv_std;
      t.normed[h] = w[L.gain + h] * t.xhat[h] + w[L.bias + h];
    }
  } else {
    t.normed = t.pre;
  }

  t.mask.assign(H, 1.0);
  if (mode.train && s.dropout_rate > 0.0) {
    // Counter-based stream: one splitmix64 draw per unit, cheap to seed per sample.
    const double scale = 1.0 / (1.0 - s.dropout_rate);
    std::uint64_t state = mode.seed;
    for (double& m : t.mask) {
      state += 0x9e3779b97f4a7c15ULL;
      const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
      m = u < s.dropout_rate ? 0.0 : scale;
    }
  }
  t.hidden.resize(H);
  for (std::size_t h = 0; h < H; ++h) {
    const double a = s.activation == Activation::ReLU ? std::max(0.0, t.normed[h]) : t.normed[h];
    t.hidden[h] = a * t.mask[h];
  }

  t.output.resize(O);
  for (std::size_t o = 0; o < O; ++o) {
    const double* row = &w[L.w2 + o * H];
    double acc = w[L.b2 + o];
    for (std::size_t h = 0; h < H; ++h) acc += row[h] * t.hidden[h];
    t.output[o] = acc;
  }
  if (s.head.kind == OutputHead::Kind::BlockSoftmax) {
    std::size_t off = 0;
    for (std::size_t b : s.head.blocks) {
      const double mx = *std::max_element(t.output.begin() + static_cast<long>(off),
                                          t.output.begin() + static_cast<long>(off + b));
      double z = 0.0;
      for (std::size_t k = off; k < off + b; ++k) z += (t.output[k] = std::exp(t.output[k] - mx));
      for (std::size_t k = off; k < off + b; ++k) t.output[k] /= z;
      off += b;
    }
  }
  t.version = params.version();
  t.owner = &params;
  f.output = t.output;
  return f;
}

std::vector<double> predict(const ParamSet& params, std::span<const double> input) {
  return forward(params, input, Mode::eval()).output;
}

Gradients backward(const ParamSet& params, const Trace& t, std::span<const double> dy) {
  if (t.owner != &params || t.version != params.version())
    throw ValidationError("backward: trace does not belong to the current parameters");
  const MlpSpec& s = params.spec();
  if (dy.size() != s.output_dim) throw ValidationError("backward: output gradient has the wrong size");
  const Layout& L = params.layout();
  const auto w = params.weights();
  const std::size_t H = s.hidden_dim, I = s.input_dim, O = s.output_dim;

  Gradients g;
  g.params.assign(L.total, 0.0);
  g.input.assign(I, 0.0);

  std::vector<double> dlogit(dy.begin(), dy.end());
  if (s.head.kind == OutputHead::Kind::BlockSoftmax) {
    std::size_t off = 0;
    for (std::size_t b : s.head.blocks) {
      double dot = 0.0;
      for (std::size_t k = off; k < off + b; ++k) dot += t.output[k] * dy[k];
      for (std::size_t k = off; k < off + b; ++k) dlogit[k] = t.output[k] * (dy[k] - dot);
      off += b;
    }
  }

  std::vector<double> dhidden(H, 0.0);
  for (std::size_t o = 0; o < O; ++o) {
    const double d = dlogit[o];
    g.params[L.b2 + o] = d;
    if (d == 0.0) continue;
    double* gw = &g.params[L.w2 + o * H];
    const double* row = &w[L.w2 + o * H];
    for (std::size_t h = 0; h < H; ++h) {
      gw[h] = d * t.hidden[h];
      dhidden[h] += d * row[h];
    }
  }

  std::vector<double> dnormed(H);
  for (std::size_t h = 0; h < H; ++h) {
    const double da = dhidden[h] * t.mask[h];
    dnormed[h] = s.activation == Activation::ReLU ? (t.normed[h] > 0.0 ? da : 0.0) : da;
  }

  std::vector<double> dpre(H);
  if (s.use_layernorm) {
    std::vector<double> dxhat(H);
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
      g.params[L.gain + h] = dnormed[h] * t.xhat[h];
      g.params[L.bias + h] = dnormed[h];
      dxhat[h] = dnormed[h] * w[L.gain + h];
      mean_d += dxhat[h];
      mean_dx += dxhat[h] * t.xhat[h];
    }
    mean_d /= static_cast<double>(H);
    mean_dx /= static_cast<double>(H);
    for (std::size_t h = 0; h < H; ++h)
      dpre[h] = t.inv_std * (dxhat[h] - mean_d - t.xhat[h] * mean_dx);
  } else {
    dpre = dnormed;
  }

  for (std::size_t h = 0; h < H; ++h) {
    const double d = dpre[h];
    g.params[L.b1 + h] = d;
    if (d == 0.0) continue;
    double* gw = &g.params[L.w1 + h * I];
    const double* row = &w[L.w1 + h * I];
    for (std::size_t i = 0; i < I; ++i) {
      gw[i] = d * t.input[i];
      g.input[i] += d * row[i];
    }
  }
  return g;
}

std::vector<Forward> forward_batch(const ParamSet& params,
                                   const std::vector<std::vector<double>>& inputs,
                                   std::span<const Mode> modes) {
  if (modes.size() != inputs.size()) throw ValidationError("forward_batch: one mode per input");
  std::vector<Forward> out(inputs.size());
  const auto n = static_cast<long>(inputs.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = forward(params, inputs[k], modes[k]);
  }
  return out;
}

std::vector<Forward> forward_batch_serial(const ParamSet& params,
                                          const std::vector<std::vector<double>>& inputs,
                                          std::span<const Mode> modes) {
  if (modes.size() != inputs.size()) throw ValidationError("forward_batch: one mode per input");
  std::vector<Forward> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(forward(params, inputs[i], modes[i]));
  return out;
}

BatchGradients backward_batch(const ParamSet& params, std::span<const Trace> traces,
                              const std::vector<std::vector<double>>& output_gradients) {
  if (traces.size() != output_gradients.size())
    throw ValidationError("backward_batch: one output gradient per trace");
  const std::size_t n = traces.size();
  std::vector<Gradients> per(n);
  const auto ln = static_cast<long>(n);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < ln; ++i) {
    const auto k = static_cast<std::size_t>(i);
    per[k] = backward(params, traces[k], output_gradients[k]);
  }

  BatchGradients out;
  const std::size_t P = params.layout().total;
  out.params.assign(P, 0.0);
  const auto lp = static_cast<long>(P);
#pragma omp parallel for schedule(static)
  for (long j = 0; j < lp; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += per[k].params[static_cast<std::size_t>(j)];
    out.params[static_cast<std::size_t>(j)] = acc;
  }
  out.inputs.reserve(n);
  for (auto& g : per) out.inputs.push_back(std::move(g.input));
  return out;
}

BatchGradients backward_batch_serial(const ParamSet& params, std::span<const Trace> traces,
                                     const std::vector<std::vector<double>>& output_gradients) {
  if (traces.size() != output_gradients.size())
    throw ValidationError("backward_batch: one output gradient per trace");
  BatchGradients out;
  out.params.assign(params.layout().total, 0.0);
  std::vector<std::vector<double>> per_params;
  for (std::size_t k = 0; k < traces.size(); ++k) {
    Gradients g = backward(params, traces[k], output_gradients[k]);
    per_params.push_back(std::move(g.params));
    out.inputs.push_back(std::move(g.input));
  }
  for (std::size_t j = 0; j < out.params.size(); ++j) {
    double acc = 0.0;
    for (const auto& p : per_params) acc += p[j];
    out.params[j] = acc;
  }
  return out;
}

void adam_step(ParamSet& params, std::span<const double> gradients, const AdamConfig& config) {
  const std::size_t P = params.layout().total;
  if (gradients.size() != P) throw ValidationError("adam_step: gradient has the wrong size");
  for (std::size_t i = 0; i < P; ++i)
    if (!std::isfinite(gradients[i]))
      throw NumericError("adam_step: non-finite gradient in " + params.block_name(i));

  params.set_step(params.step() + 1);
  const auto t = static_cast<double>(params.step());
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  auto w = params.weights();
  auto& m = params.first_moment();
  auto& v = params.second_moment();
  for (std::size_t i = 0; i < P; ++i) {
    const double g = gradients[i];
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
    w[i] -= config.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.eps);
  }
  params.touch();
}

void sync_target(const ParamSet& source, ParamSet& target) {
  if (!(source.spec() == target.spec())) throw ValidationError("sync_target: network specs differ");
  std::copy(source.weights().begin(), source.weights().end(), target.weights().begin());
  target.touch();
}

Json spec_to_json(const MlpSpec& spec) {
  Json j{{"input_dim", spec.input_dim},
         {"hidden_dim", spec.hidden_dim},
         {"output_dim", spec.output_dim},
         {"dropout_rate", spec.dropout_rate},
         {"use_layernorm", spec.use_layernorm},
         {"activation", spec.activation == Activation::ReLU ? "relu" : "identity"}};
  if (spec.head.kind == OutputHead::Kind::BlockSoftmax)
    j["head"] = {{"kind", "block_softmax"}, {"blocks", spec.head.blocks}};
  else
    j["head"] = {{"kind", "linear"}};
  return j;
}

MlpSpec spec_from_json(const Json& j) {
  MlpSpec s;
  s.input_dim = field_as<std::size_t>(j, "input_dim", "spec");
  s.hidden_dim = field_as<std::size_t>(j, "hidden_dim", "spec");
  s.output_dim = field_as<std::size_t>(j, "output_dim", "spec");
  s.dropout_rate = field_as<double>(j, "dropout_rate", "spec");
  s.use_layernorm = field_as<bool>(j, "use_layernorm", "spec");
  const auto act = field_as<std::string>(j, "activation", "spec");
  if (act == "relu") s.activation = Activation::ReLU;
  else if (act == "identity") s.activation = Activation::Identity;
  else throw ValidationError("spec.activation: unknown value '" + act + "'");
  const Json& head = require_field(j, "head", "spec");
  const auto kind = field_as<std::string>(head, "kind", "spec.head");
  if (kind == "block_softmax")
    s.head = OutputHead::block_softmax(field_as<std::vector<std::size_t>>(head, "blocks", "spec.head"));
  else if (kind != "linear")
    throw ValidationError("spec.head.kind: unknown value '" + kind + "'");
  s.validate();
  return s;
}

Json to_json(const ParamSet& params) {
  const auto w = params.weights();
  return Json{{"format", "sncg-mlp"},
              {"version", 1},
              {"spec", spec_to_json(params.spec())},
              {"step", params.step()},
              {"weights", std::vector<double>(w.begin(), w.end())},
              {"first_moment", params.first_moment()},
              {"second_moment", params.second_moment()}};
}

ParamSet params_from_json(const Json& j) {
  if (field_as<std::string>(j, "format", "checkpoint") != "sncg-mlp")
    throw ValidationError("checkpoint.format: expected sncg-mlp");
  if (field_as<int>(j, "version", "checkpoint") != 1)
    throw ValidationError("checkpoint.version: unsupported");
  ParamSet p = ParamSet::zeros(spec_from_json(require_field(j, "spec", "checkpoint")));
  const auto w = field_as<std::vector<double>>(j, "weights", "checkpoint");
  const auto m = field_as<std::vector<double>>(j, "first_moment", "checkpoint");
  const auto v = field_as<std::vector<double>>(j, "second_moment", "checkpoint");
  const std::size_t P = p.layout().total;
  if (w.size() != P || m.size() != P || v.size() != P)
    throw ValidationError("checkpoint: weight arrays do not match the spec");
  std::copy(w.begin(), w.end(), p.weights().begin());
  p.first_moment() = m;
  p.second_moment() = v;
  p.set_step(field_as<std::uint64_t>(j, "step", "checkpoint"));
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << to_json(params).dump() << '\n';
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  return params_from_json(read_json_file(path));
}

}  // namespace sncg::nn
