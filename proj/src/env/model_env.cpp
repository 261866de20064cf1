#include "sncg/env/model_env.hpp"

#include <algorithm>

#include "sncg/errors.hpp"

namespace sncg::env {

ModelEnv::ModelEnv(SncgModel model, std::size_t agents) : model_(std::move(model)), agents_(agents) {
  model_.validate();
  if (agents_ == 0) throw ValidationError("environment needs at least one agent");
  reset(0);
}

void ModelEnv::reset(std::uint64_t seed) {
  rng_.seed(derive_seed(seed, 0x6d6f64));
  zones_.resize(agents_);
  for (auto& z : zones_) z = uniform_index(rng_, model_.zone_count());
  t_ = 0;
}

GlobalState ModelEnv::global_state() const {
  std::vector<double> m(model_.zone_count(), 0.0);
  const double w = 1.0 / static_cast<double>(agents_);
  for (ZoneId z : zones_) m[z] += w;
  return GlobalState(std::move(m));
}

EnvStep ModelEnv::step(const std::vector<std::size_t>& actions) {
  check_actions(*this, actions);
  const std::size_t nz = model_.zone_count();
  const double w = 1.0 / static_cast<double>(agents_);
  const GlobalState state = global_state();

  ActionLoad load{std::vector<double>(model_.label_count(), 0.0)};
  for (std::size_t i = 0; i < agents_; ++i) load.load[model_.zones[zones_[i]].actions[actions[i]]] += w;

  EnvStep out;
  out.rewards.resize(agents_);
  if (model_.reward.regime == RewardRegime::R1) {
    std::vector<double> zr(nz);
    for (ZoneId z = 0; z < nz; ++z) zr[z] = model_.reward.fn(state, z, load, std::nullopt);
    for (std::size_t i = 0; i < agents_; ++i) out.rewards[i] = zr[zones_[i]];
  } else {
    for (std::size_t i = 0; i < agents_; ++i)
      out.rewards[i] = model_.reward.fn(state, zones_[i], load, model_.zones[zones_[i]].actions[actions[i]]);
  }

  for (std::size_t i = 0; i < agents_; ++i) {
    const double u_slip = uniform01(rng_);
    const double u_zone = uniform01(rng_);
    switch (model_.transition.kind) {
      case TransitionKind::Identity: break;
      case TransitionKind::Deterministic:
        zones_[i] = model_.transition.destination[zones_[i]][actions[i]];
        break;
      case TransitionKind::Stochastic:
        zones_[i] = u_slip < model_.transition.noise
                        ? std::min(nz - 1, static_cast<ZoneId>(u_zone * static_cast<double>(nz)))
                        : model_.transition.destination[zones_[i]][actions[i]];
        break;
    }
  }
  ++t_;
  out.episode_done = t_ >= horizon();
  // Only a genuinely finite horizon ends the game; truncated infinite ones bootstrap.
  out.terminal.assign(agents_, out.episode_done && model_.horizon != 0);
  return out;
}

}  // namespace sncg::env
