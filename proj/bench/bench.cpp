// Parallel kernels against their serial references: wall time and bit-equality.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "sncg/core.hpp"
#include "sncg/env/env.hpp"
#include "sncg/lvmq/trainer.hpp"
#include "sncg/model_io.hpp"
#include "sncg/nn/mlp.hpp"

using namespace sncg;

namespace {

double best_ms(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double par, double ser, bool same) {
  std::printf("%-28s %10.2f %10.2f %8.2fx  %s\n", name, par, ser, ser / par, same ? "identical" : "MISMATCH");
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %10s %10s %9s\n", "kernel", "par ms", "serial ms", "speedup");
  bool ok = true;

  {
    const auto model = load_model(std::string(SNCG_DATA_DIR) + "/models/grid_world.json");
    const auto pop = initial_population(model, 200);
    std::vector<ValueEstimate> a, b;
    const double tp = best_ms(reps, [&] { a = estimate_values(model, pop, 256, 7); });
    const double ts = best_ms(reps, [&] { b = estimate_values_serial(model, pop, 256, 7); });
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i)
      same = a[i].mean == b[i].mean && a[i].standard_error == b[i].standard_error;
    row("estimate_values (K=200)", tp, ts, same);
    ok = ok && same;
  }

  {
    nn::MlpSpec spec;
    spec.input_dim = 16;
    spec.hidden_dim = 256;
    spec.output_dim = 8;
    const nn::ParamSet p(spec, 3);
    Rng rng(4);
    const std::size_t n = 512;
    std::vector<std::vector<double>> xs(n, std::vector<double>(spec.input_dim));
    for (auto& x : xs)
      for (auto& v : x) v = uniform01(rng) * 2 - 1;
    std::vector<nn::Mode> modes(n);
    for (std::size_t k = 0; k < n; ++k) modes[k] = nn::Mode::training(k);
    std::vector<nn::Forward> fa, fb;
    const double tp = best_ms(reps, [&] { fa = nn::forward_batch(p, xs, modes); });
    const double ts = best_ms(reps, [&] { fb = nn::forward_batch_serial(p, xs, modes); });
    bool same = true;
    for (std::size_t k = 0; k < n; ++k) same = same && same_bits(fa[k].output, fb[k].output);
    row("forward_batch (512x256)", tp, ts, same);
    ok = ok && same;

    std::vector<nn::Trace> traces;
    for (auto& f : fa) traces.push_back(f.trace);
    std::vector<std::vector<double>> dy(n, std::vector<double>(spec.output_dim, 0.01));
    nn::BatchGradients ga, gb;
    const double bp = best_ms(reps, [&] { ga = nn::backward_batch(p, traces, dy); });
    const double bs = best_ms(reps, [&] { gb = nn::backward_batch_serial(p, traces, dy); });
    const bool gsame = same_bits(ga.params, gb.params);
    row("backward_batch (512x256)", bp, bs, gsame);
    ok = ok && gsame;
  }

  {
    const auto envp = std::string(SNCG_DATA_DIR) + "/envs/grid_world.json";
    lvmq::TrainConfig cfg;
    cfg.net.hidden = 16;
    cfg.net.dropout = 0.0;
    cfg.net.adam.lr = 1e-3;
    cfg.group_size = 5;
    cfg.warmup = 50;
    cfg.central_capacity = cfg.individual_capacity = 500;
    cfg.max_episodes = 40;
    const long seeds = 8;
    std::vector<std::string> pa(seeds), sa(seeds);
    auto one = [&](long k) {
      auto env = env::build_env(envp);
      return lvmq::to_json(lvmq::run_training(*env, cfg, static_cast<std::uint64_t>(k)).record).dump();
    };
    const double tp = best_ms(1, [&] {
#pragma omp parallel for schedule(dynamic, 1)
      for (long k = 0; k < seeds; ++k) pa[static_cast<std::size_t>(k)] = one(k);
    });
    const double ts = best_ms(1, [&] {
      for (long k = 0; k < seeds; ++k) sa[static_cast<std::size_t>(k)] = one(k);
    });
    row("seed fan-out (8 runs)", tp, ts, pa == sa);
    ok = ok && pa == sa;
  }
  return ok ? 0 : 1;
}
