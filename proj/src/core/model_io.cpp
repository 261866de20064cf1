#include "sncg/model_io.hpp"

#include <algorithm>

#include "sncg/errors.hpp"

namespace sncg {

namespace {

std::size_t index_of(const std::vector<std::string>& names, const std::string& name,
                     const std::string& context) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ValidationError(context + ": unknown name '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

}  // namespace

SncgModel model_from_json(const Json& j) {
  SncgModel m;
  m.action_labels = field_as<std::vector<std::string>>(j, "actions", "model");

  std::vector<std::string> zone_names;
  const Json& zones = require_field(j, "zones", "model");
  if (!zones.is_array()) throw ValidationError("model.zones: expected an array");
  for (const Json& zj : zones) {
    Zone z;
    z.name = field_as<std::string>(zj, "name", "model.zones[]");
    for (const auto& label : field_as<std::vector<std::string>>(zj, "actions", "model.zones[" + z.name + "]"))
      z.actions.push_back(index_of(m.action_labels, label, "model.zones[" + z.name + "].actions"));
    zone_names.push_back(z.name);
    m.zones.push_back(std::move(z));
  }

  const Json& rj = require_field(j, "reward", "model");
  PolynomialReward pr;
  const auto regime = field_as<std::string>(rj, "regime", "model.reward");
  if (regime == "R1") pr.regime = RewardRegime::R1;
  else if (regime == "R2") pr.regime = RewardRegime::R2;
  else throw ValidationError("model.reward.regime: expected R1 or R2, got '" + regime + "'");
  const auto arg = field_as<std::string>(rj, "argument", "model.reward");
  if (arg == "own_zone_mass") pr.argument = RewardArgument::OwnZoneMass;
  else if (arg == "action_load") {
    pr.argument = RewardArgument::ActionLoad;
    pr.label = index_of(m.action_labels, field_as<std::string>(rj, "label", "model.reward"),
                        "model.reward.label");
  } else if (arg == "own_action_load") {
    pr.argument = RewardArgument::OwnActionLoad;
  } else if (arg == "zone_action_load") {
    pr.argument = RewardArgument::ZoneActionLoad;
    for (const auto& name : field_as<std::vector<std::string>>(rj, "labels", "model.reward"))
      pr.zone_labels.push_back(index_of(m.action_labels, name, "model.reward.labels"));
    if (pr.zone_labels.size() != m.zones.size())
      throw ValidationError("model.reward.labels: need one label per zone");
  }
  else throw ValidationError("model.reward.argument: unknown value '" + arg + "'");
  const Json& base = require_field(rj, "base", "model.reward");
  if (base.is_number()) pr.base = {base.get<double>()};
  else pr.base = field_as<std::vector<double>>(rj, "base", "model.reward");
  if (pr.base.size() != 1 && pr.base.size() != m.zones.size())
    throw ValidationError("model.reward.base: need one value or one per zone");
  const Json& coef = require_field(rj, "coefficients", "model.reward");
  if (!coef.empty() && coef.is_array() && coef.front().is_array()) {
    pr.zone_coefficients = field_as<std::vector<std::vector<double>>>(rj, "coefficients", "model.reward");
    if (pr.zone_coefficients.size() != m.zones.size())
      throw ValidationError("model.reward.coefficients: need one list per zone");
  } else {
    pr.coefficients = field_as<std::vector<double>>(rj, "coefficients", "model.reward");
  }
  m.reward = RewardSpec::polynomial(std::move(pr));

  const Json& tj = require_field(j, "transition", "model");
  const auto kind = field_as<std::string>(tj, "kind", "model.transition");
  if (kind == "identity") m.transition.kind = TransitionKind::Identity;
  else if (kind == "deterministic") m.transition.kind = TransitionKind::Deterministic;
  else if (kind == "stochastic") m.transition.kind = TransitionKind::Stochastic;
  else throw ValidationError("model.transition.kind: unknown value '" + kind + "'");
  if (m.transition.kind != TransitionKind::Identity) {
    for (const auto& row : field_as<std::vector<std::vector<std::string>>>(tj, "destination", "model.transition")) {
      std::vector<ZoneId> dest;
      for (const auto& name : row) dest.push_back(index_of(zone_names, name, "model.transition.destination"));
      m.transition.destination.push_back(std::move(dest));
    }
  }
  m.transition.noise = field_or<double>(tj, "noise", 0.0, "model.transition");
  m.transition.quantum = field_or<double>(tj, "quantum", 0.01, "model.transition");

  m.discount = field_as<double>(j, "discount", "model");
  m.horizon = field_as<std::size_t>(j, "horizon", "model");
  m.validate();
  return m;
}

SncgModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path));
}

}  // namespace sncg
