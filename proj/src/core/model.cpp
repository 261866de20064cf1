#include "sncg/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sncg/errors.hpp"
#include "sncg/random.hpp"

namespace sncg {

namespace {

double poly(std::span<const double> c, double x) {
  double acc = 0.0;
  for (std::size_t k = c.size(); k-- > 0;) acc = acc * x + c[k];
  return acc;
}

}  // namespace

GlobalState::GlobalState(std::vector<double> masses) : masses_(std::move(masses)) {
  if (masses_.empty()) throw ValidationError("global state has no zones");
  double total = 0.0;
  for (std::size_t z = 0; z < masses_.size(); ++z) {
    if (!(masses_[z] >= 0.0) || !std::isfinite(masses_[z])) {
      std::ostringstream os;
      os << "global state: zone " << z << " has invalid mass " << masses_[z];
      throw ValidationError(os.str());
    }
    total += masses_[z];
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    std::ostringstream os;
    os << "global state masses sum to " << total << ", expected 1";
    throw ValidationError(os.str());
  }
}

GlobalState GlobalState::uniform(std::size_t zones) {
  return GlobalState(std::vector<double>(zones, 1.0 / static_cast<double>(zones)));
}

GlobalState GlobalState::point(std::size_t zones, ZoneId zone) {
  std::vector<double> m(zones, 0.0);
  m.at(zone) = 1.0;
  return GlobalState(std::move(m));
}

JointFlow::JointFlow(std::vector<std::vector<double>> flow) : flow_(std::move(flow)) {
  for (std::size_t z = 0; z < flow_.size(); ++z)
    for (double f : flow_[z])
      if (!(f >= 0.0) || !std::isfinite(f)) {
        std::ostringstream os;
        os << "joint flow: zone " << z << " has invalid entry " << f;
        throw ValidationError(os.str());
      }
}

double JointFlow::zone_mass(ZoneId z) const {
  return std::accumulate(flow_[z].begin(), flow_[z].end(), 0.0);
}

void JointFlow::check_consistent(std::span<const double> zone_masses) const {
  if (zone_masses.size() != flow_.size()) {
    std::ostringstream os;
    os << "joint flow covers " << flow_.size() << " zones, state has " << zone_masses.size();
    throw ValidationError(os.str());
  }
  for (std::size_t z = 0; z < flow_.size(); ++z) {
    const double m = zone_mass(z);
    if (std::abs(m - zone_masses[z]) > kMassTolerance) {
      std::ostringstream os;
      os << "joint flow: zone " << z << " flow sums to " << m << " but zone mass is "
         << zone_masses[z];
      throw ValidationError(os.str());
    }
  }
}

std::vector<std::vector<double>> JointFlow::fractions() const {
  std::vector<std::vector<double>> out(flow_.size());
  for (std::size_t z = 0; z < flow_.size(); ++z) {
    const double m = zone_mass(z);
    const std::size_t n = flow_[z].size();
    out[z].resize(n);
    for (std::size_t k = 0; k < n; ++k)
      out[z][k] = m > 0.0 ? flow_[z][k] / m : 1.0 / static_cast<double>(n);
  }
  return out;
}

double PolynomialReward::operator()(const GlobalState& s, ZoneId z, const ActionLoad& load,
                                    std::optional<ActionId> own_label) const {
  double x = 0.0;
  switch (argument) {
    case RewardArgument::OwnZoneMass: x = s[z]; break;
    case RewardArgument::ActionLoad: x = load[label]; break;
    case RewardArgument::OwnActionLoad:
      if (!own_label) throw ValidationError("own-action reward evaluated without an action");
      x = load[*own_label];
      break;
    case RewardArgument::ZoneActionLoad: x = load[zone_labels.at(z)]; break;
  }
  const double b = base.empty() ? 0.0 : base[base.size() == 1 ? 0 : z];
  return b - poly(zone_coefficients.empty() ? coefficients : zone_coefficients.at(z), x);
}

RewardSpec RewardSpec::polynomial(PolynomialReward spec) {
  for (double c : spec.coefficients)
    if (c < 0.0) throw ValidationError("reward coefficients must be nonnegative");
  for (const auto& row : spec.zone_coefficients)
    for (double c : row)
      if (c < 0.0) throw ValidationError("reward coefficients must be nonnegative");
  if (spec.argument == RewardArgument::OwnActionLoad && spec.regime != RewardRegime::R2)
    throw ValidationError("own-action load reward requires regime R2");
  RewardSpec out;
  out.regime = spec.regime;
  out.fn = [spec = std::move(spec)](const GlobalState& s, ZoneId z, const ActionLoad& l,
                                    std::optional<ActionId> a) { return spec(s, z, l, a); };
  return out;
}

RewardSpec RewardSpec::zero(RewardRegime regime) { return constant(0.0, regime); }

RewardSpec RewardSpec::constant(double r, RewardRegime regime) {
  RewardSpec out;
  out.regime = regime;
  out.fn = [r](const GlobalState&, ZoneId, const ActionLoad&, std::optional<ActionId>) {
    return r;
  };
  return out;
}

std::vector<std::size_t> SncgModel::action_counts() const {
  std::vector<std::size_t> out;
  out.reserve(zones.size());
  for (const auto& z : zones) out.push_back(z.actions.size());
  return out;
}

void SncgModel::validate() const {
  if (zones.empty()) throw ValidationError("model has no zones");
  for (std::size_t z = 0; z < zones.size(); ++z) {
    if (zones[z].actions.empty())
      throw ValidationError("zone '" + zones[z].name + "' has no actions");
    for (ActionId a : zones[z].actions)
      if (a >= action_labels.size())
        throw ValidationError("zone '" + zones[z].name + "' references an unknown action label");
  }
  if (!reward.fn) throw ValidationError("model has no reward function");
  if (!(discount >= 0.0) || discount > 1.0) throw ConfigError("discount must lie in [0, 1]");
  if (horizon == 0 && discount >= 1.0)
    throw ConfigError("infinite horizon requires discount < 1");
  if (transition.kind != TransitionKind::Identity) {
    if (transition.destination.size() != zones.size())
      throw ValidationError("transition destination table must have one row per zone");
    for (std::size_t z = 0; z < zones.size(); ++z) {
      if (transition.destination[z].size() != zones[z].actions.size())
        throw ValidationError("transition row for zone '" + zones[z].name +
                              "' must have one entry per action");
      for (ZoneId d : transition.destination[z])
        if (d >= zones.size()) throw ValidationError("transition leads to an unknown zone");
    }
  }
  if (transition.kind == TransitionKind::Stochastic) {
    if (transition.noise < 0.0 || transition.noise > 1.0)
      throw ValidationError("transition noise must lie in [0, 1]");
    if (!(transition.quantum > 0.0)) throw ValidationError("transition quantum must be positive");
  }
}

std::size_t SncgModel::effective_horizon() const {
  if (horizon > 0) return horizon;
  if (discount <= 0.0) return 1;
  return static_cast<std::size_t>(std::ceil(std::log(1e-12) / std::log(discount)));
}

ActionLoad action_load(const SncgModel& model, const GlobalState& state, const JointFlow& flow) {
  if (flow.zone_count() != model.zone_count())
    throw ValidationError("joint flow zone count does not match the model");
  for (std::size_t z = 0; z < flow.zone_count(); ++z)
    if (flow.zone(z).size() != model.action_count(z))
      throw ValidationError("joint flow: zone " + std::to_string(z) +
                            " has the wrong number of actions");
  flow.check_consistent(state);
  ActionLoad out{std::vector<double>(model.label_count(), 0.0)};
  for (std::size_t z = 0; z < flow.zone_count(); ++z)
    for (std::size_t k = 0; k < flow.zone(z).size(); ++k)
      out.load[model.zones[z].actions[k]] += flow.zone(z)[k];
  return out;
}

StepResult step(const SncgModel& model, const GlobalState& state, const JointFlow& flow,
                std::uint64_t seed) {
  const ActionLoad load = action_load(model, state, flow);
  const std::size_t nz = model.zone_count();

  StepResult out;
  out.rewards.resize(nz);
  for (ZoneId z = 0; z < nz; ++z) {
    const auto& labels = model.zones[z].actions;
    out.rewards[z].resize(labels.size());
    if (model.reward.regime == RewardRegime::R1) {
      const double r = model.reward.fn(state, z, load, std::nullopt);
      std::fill(out.rewards[z].begin(), out.rewards[z].end(), r);
    } else {
      for (std::size_t k = 0; k < labels.size(); ++k)
        out.rewards[z][k] = model.reward.fn(state, z, load, labels[k]);
    }
  }

  if (model.transition.kind == TransitionKind::Identity) {
    out.next = state;
    return out;
  }

  std::vector<double> next(nz, 0.0);
  for (ZoneId z = 0; z < nz; ++z)
    for (std::size_t k = 0; k < flow.zone(z).size(); ++k)
      next[model.transition.destination[z][k]] += flow.zone(z)[k];

  if (model.transition.kind == TransitionKind::Stochastic && nz > 1) {
    Rng rng(derive_seed(seed, 0x5170));
    const auto steps = static_cast<long>(std::floor(model.transition.noise /
                                                     model.transition.quantum + 1e-9));
    const long pick = static_cast<long>(uniform_index(rng, static_cast<std::size_t>(2 * steps + 1)));
    const double delta = static_cast<double>(pick - steps) * model.transition.quantum;
    const ZoneId from = uniform_index(rng, nz);
    ZoneId to = uniform_index(rng, nz - 1);
    if (to >= from) ++to;
    // Positive delta moves mass from -> to, negative the other way; clipped to what exists.
    const double moved = delta >= 0.0 ? std::min(delta, next[from]) : -std::min(-delta, next[to]);
    next[from] -= moved;
    next[to] += moved;
  }
  // Renormalize away accumulated rounding so the result validates.
  const double total = std::accumulate(next.begin(), next.end(), 0.0);
  for (double& m : next) m = std::max(0.0, m / total);
  out.next = GlobalState(std::move(next));
  return out;
}

ZoneVariance variance_by_zone(std::span<const double> values, std::span<const ZoneId> zones,
                              std::size_t zone_count) {
  if (values.empty()) throw ValidationError("variance_by_zone: no agents");
  if (values.size() != zones.size())
    throw ValidationError("variance_by_zone: values and zones differ in length");
  std::vector<double> sum(zone_count, 0.0);
  std::vector<std::size_t> count(zone_count, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (zones[i] >= zone_count) throw ValidationError("variance_by_zone: zone out of range");
    sum[zones[i]] += values[i];
    ++count[zones[i]];
  }
  ZoneVariance out;
  out.per_zone.assign(zone_count, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const ZoneId z = zones[i];
    if (count[z] < 2) continue;
    const double d = values[i] - sum[z] / static_cast<double>(count[z]);
    out.per_zone[z] += d * d;
  }
  std::size_t present = 0;
  double total = 0.0;
  for (std::size_t z = 0; z < zone_count; ++z) {
    if (count[z] == 0) continue;
    ++present;
    if (count[z] >= 2) out.per_zone[z] /= static_cast<double>(count[z]);
    total += out.per_zone[z];
  }
  out.mean = total / static_cast<double>(present);
  return out;
}

}  // namespace sncg
