#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "sncg/core.hpp"
#include "sncg/errors.hpp"
#include "sncg/model_io.hpp"
#include "sncg/random.hpp"

using namespace sncg;

namespace {

// Two zones, shared labels stay/move, moves swap zones.
SncgModel grid_model(TransitionKind kind, double noise = 0.0) {
  SncgModel m;
  m.action_labels = {"stay", "move"};
  m.zones = {{"z1", {0, 1}}, {"z2", {0, 1}}};
  PolynomialReward r;
  r.argument = RewardArgument::OwnZoneMass;
  r.base = {1.0};
  r.coefficients = {0.0, 1.0};
  m.reward = RewardSpec::polynomial(r);
  m.transition.kind = kind;
  if (kind != TransitionKind::Identity) m.transition.destination = {{0, 1}, {1, 0}};
  m.transition.noise = noise;
  m.discount = 0.9;
  m.horizon = 5;
  return m;
}

JointFlow figure_flow() { return JointFlow({{0.1, 0.1}, {0.48, 0.32}}); }

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("global state validates masses") {
  CHECK_NOTHROW(GlobalState({0.2, 0.8}));
  CHECK_THROWS_AS(GlobalState({-0.1, 1.1}), ValidationError);
  CHECK_THROWS_AS(GlobalState({0.2, 0.7}), ValidationError);
  CHECK_THROWS_AS(GlobalState(std::vector<double>{}), ValidationError);
  CHECK_NOTHROW(GlobalState({0.5, 0.5 + 5e-10}));
}

TEST_CASE("action load of the grid world figure") {
  const auto m = grid_model(TransitionKind::Deterministic);
  const auto load = action_load(m, GlobalState({0.2, 0.8}), figure_flow());
  CHECK(load[0] == doctest::Approx(0.58).epsilon(1e-12));
  CHECK(load[1] == doctest::Approx(0.42).epsilon(1e-12));
  CHECK(std::abs(load[0] + load[1] - 1.0) < 1e-9);
}

TEST_CASE("action load edge cases") {
  SncgModel m = grid_model(TransitionKind::Identity);
  m.zones = {{"z1", {0}}, {"z2", {0, 1}}};
  auto load = action_load(m, GlobalState({1.0, 0.0}), JointFlow({{1.0}, {0.0, 0.0}}));
  CHECK(load[0] == 1.0);
  CHECK(load[1] == 0.0);

  const auto full = grid_model(TransitionKind::Identity);
  load = action_load(full, GlobalState({0.0, 1.0}), JointFlow({{0.0, 0.0}, {0.3, 0.7}}));
  CHECK(load[0] == doctest::Approx(0.3));
  CHECK(load[1] == doctest::Approx(0.7));
}

TEST_CASE("inconsistent flow names the zone") {
  const auto m = grid_model(TransitionKind::Deterministic);
  const auto msg = error_of([&] {
    action_load(m, GlobalState({0.2, 0.8}), JointFlow({{0.1, 0.1}, {0.5, 0.32}}));
  });
  CHECK(msg.find("zone 1") != std::string::npos);
  CHECK_THROWS_AS(step(m, GlobalState({0.2, 0.8}), JointFlow({{0.2, 0.1}, {0.48, 0.32}}), 0),
                  ValidationError);
  CHECK_THROWS_AS(JointFlow({{-0.1, 0.3}}), ValidationError);
}

TEST_CASE("some seed realizes the figure transition") {
  const auto m = grid_model(TransitionKind::Stochastic, 0.1);
  const GlobalState s({0.2, 0.8});
  bool found = false;
  for (std::uint64_t seed = 0; seed < 2000 && !found; ++seed) {
    const auto r = step(m, s, figure_flow(), seed);
    found = std::abs(r.next[0] - 0.4) < 1e-9 && std::abs(r.next[1] - 0.6) < 1e-9;
  }
  CHECK(found);
  // Without noise the image is the column flow: 0.1 stays in z1, 0.32 moves in.
  const auto det = step(grid_model(TransitionKind::Deterministic), s, figure_flow(), 0);
  CHECK(det.next[0] == doctest::Approx(0.42));
  CHECK(det.next[1] == doctest::Approx(0.58));
}

TEST_CASE("identity transition keeps the state") {
  const auto m = grid_model(TransitionKind::Identity);
  const GlobalState s({0.2, 0.8});
  for (std::uint64_t seed : {0ULL, 7ULL, 99ULL}) CHECK(step(m, s, figure_flow(), seed).next == s);
}

TEST_CASE("step is deterministic per seed") {
  const auto m = grid_model(TransitionKind::Stochastic, 0.1);
  const GlobalState s({0.2, 0.8});
  const auto a = step(m, s, figure_flow(), 42);
  const auto b = step(m, s, figure_flow(), 42);
  CHECK(a.next == b.next);
  CHECK(a.rewards == b.rewards);
  // R1: every action in a zone sees the same reward
  CHECK(a.rewards[0][0] == a.rewards[0][1]);
  CHECK(a.rewards[0][0] == doctest::Approx(0.8));
}

TEST_CASE("property: mass is conserved by every step") {
  const auto m = grid_model(TransitionKind::Stochastic, 0.3);
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const double a = uniform01(rng);
    const double f0 = uniform01(rng) * a, f1 = uniform01(rng) * (1.0 - a);
    const JointFlow flow({{f0, a - f0}, {f1, 1.0 - a - f1}});
    const auto r = step(m, GlobalState({a, 1.0 - a}), flow, rng());
    CHECK(std::abs(r.next[0] + r.next[1] - 1.0) < 1e-9);
    CHECK(r.next[0] >= 0.0);
    CHECK(r.next[1] >= 0.0);
  }
}

TEST_CASE("property: rewards never increase with load") {
  PolynomialReward spec;
  spec.regime = RewardRegime::R2;
  spec.argument = RewardArgument::OwnActionLoad;
  spec.base = {3.0, 2.0};
  spec.coefficients = {0.5, 1.0, 0.25};
  const auto r2 = RewardSpec::polynomial(spec);
  PolynomialReward zone_spec;
  zone_spec.argument = RewardArgument::ZoneActionLoad;
  zone_spec.zone_labels = {0, 1};
  zone_spec.base = {1.0, 0.8};
  zone_spec.zone_coefficients = {{0.0, 1.0}, {0.0, 0.6}};
  const auto r1 = RewardSpec::polynomial(zone_spec);
  Rng rng(11);
  const GlobalState s({0.5, 0.5});
  for (int trial = 0; trial < 1000; ++trial) {
    ActionLoad lo{{uniform01(rng), uniform01(rng)}};
    ActionLoad hi = lo;
    const std::size_t k = uniform_index(rng, 2);
    hi.load[k] += uniform01(rng);
    for (ZoneId z = 0; z < 2; ++z) {
      CHECK(r1.fn(s, z, hi, std::nullopt) <= r1.fn(s, z, lo, std::nullopt));
      for (ActionId a = 0; a < 2; ++a) CHECK(r2.fn(s, z, hi, a) <= r2.fn(s, z, lo, a));
    }
  }
}

TEST_CASE("negative reward coefficients are rejected") {
  PolynomialReward spec;
  spec.coefficients = {1.0, -0.5};
  CHECK_THROWS_AS(RewardSpec::polynomial(spec), ValidationError);
}

TEST_CASE("value of a null reward is zero") {
  auto m = grid_model(TransitionKind::Stochastic, 0.2);
  m.reward = RewardSpec::zero();
  const auto pop = initial_population(m, 6);
  for (const auto& v : estimate_values(m, pop, 16, 3)) {
    CHECK(v.mean == 0.0);
    CHECK(v.standard_error == 0.0);
  }
}

TEST_CASE("myopic value is the immediate reward") {
  auto m = grid_model(TransitionKind::Deterministic);
  m.discount = 0.0;
  m.horizon = 4;
  // 3 of 4 agents in z1: reward there 1 - 0.75
  FinitePopulation pop;
  pop.zones = {0, 0, 0, 1};
  pop.policies.assign(4, deterministic_policy(m, 0));
  const auto v = estimate_values(m, pop, 8, 0);
  CHECK(v[0].mean == doctest::Approx(0.25));
  CHECK(v[3].mean == doctest::Approx(0.75));
}

TEST_CASE("constant reward matches the geometric sum") {
  auto m = grid_model(TransitionKind::Stochastic, 0.5);
  const double r = 0.7, gamma = 0.9;
  m.reward = RewardSpec::constant(r);
  m.discount = gamma;
  for (std::size_t h : {1u, 5u, 20u}) {
    m.horizon = h;
    const auto pop = initial_population(m, 4);
    const auto v = estimate_value(m, pop, 2, 32, 1);
    const double closed = r * (1.0 - std::pow(gamma, static_cast<double>(h))) / (1.0 - gamma);
    CHECK(v.mean == doctest::Approx(closed).epsilon(1e-12));
  }
}

TEST_CASE("undiscounted infinite horizon is a configuration error") {
  auto m = grid_model(TransitionKind::Deterministic);
  m.discount = 1.0;
  m.horizon = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  CHECK_THROWS_AS(estimate_value(m, initial_population(grid_model(TransitionKind::Identity), 2), 0, 4, 0),
                  ConfigError);
}

TEST_CASE("parallel value estimates equal the serial reference bit for bit") {
  const auto m = grid_model(TransitionKind::Stochastic, 0.2);
  auto pop = initial_population(m, 12);
  pop.policies[3] = LocalPolicy{{{0.3, 0.7}, {0.6, 0.4}}};
  const auto a = estimate_values(m, pop, 64, 17);
  const auto b = estimate_values_serial(m, pop, 64, 17);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].mean == b[i].mean);
    CHECK(a[i].standard_error == b[i].standard_error);
  }
}

TEST_CASE("variance by zone") {
  const std::vector<ZoneId> one = {0, 0, 0};
  CHECK(variance_by_zone(std::vector<double>{2, 2, 2}, one, 1).per_zone[0] == 0.0);

  const std::vector<ZoneId> pair = {0, 0};
  CHECK(variance_by_zone(std::vector<double>{1, 3}, pair, 1).per_zone[0] == doctest::Approx(1.0));

  // zone 0: values {5, 5} -> 0; zone 1: {0, 2, 4, 2} -> 2; zone 2 empty and ignored
  const std::vector<ZoneId> zones = {0, 0, 1, 1, 1, 1};
  const auto v = variance_by_zone(std::vector<double>{5, 5, 0, 2, 4, 2}, zones, 3);
  CHECK(v.per_zone[1] == doctest::Approx(2.0));
  CHECK(v.mean == doctest::Approx(1.0));

  // singleton zones contribute zero
  const std::vector<ZoneId> single = {0, 1};
  CHECK(variance_by_zone(std::vector<double>{1, 9}, single, 2).mean == 0.0);

  CHECK_THROWS_AS(variance_by_zone(std::vector<double>{}, std::vector<ZoneId>{}, 2), ValidationError);
}

TEST_CASE("oracle: single-action zones need no improvement") {
  auto m = grid_model(TransitionKind::Identity);
  m.zones = {{"z1", {0}}, {"z2", {0}}};
  const auto res = brute_force_equilibrium(m, 6);
  CHECK(res.converged);
  CHECK(res.improvements == 0);
}

TEST_CASE("oracle matches exhaustive enumeration on a 2x2 one-shot game") {
  SncgModel m;
  m.action_labels = {"a", "b"};
  m.zones = {{"only", {0, 1}}};
  m.reward.regime = RewardRegime::R2;
  m.reward.fn = [](const GlobalState&, ZoneId, const ActionLoad& load, std::optional<ActionId> a) {
    const double base = *a == 0 ? 3.0 : 1.5;
    return base - 2.0 * load[*a];
  };
  m.discount = 0.9;
  m.horizon = 1;

  auto payoff = [](std::size_t mine, std::size_t other) {
    const double base = mine == 0 ? 3.0 : 1.5;
    return base - 2.0 * (mine == other ? 1.0 : 0.5);
  };
  std::vector<std::pair<std::size_t, std::size_t>> nash;
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b)
      if (payoff(a, b) >= payoff(1 - a, b) && payoff(b, a) >= payoff(1 - b, a)) nash.emplace_back(a, b);
  REQUIRE(nash.size() == 1);

  FinitePopulation start;
  start.zones = {0, 0};
  start.policies.assign(2, deterministic_policy(m, 1));
  const auto res = brute_force_equilibrium(m, start);
  REQUIRE(res.converged);
  const auto pick = [&](std::size_t i) { return res.population.policies[i].probs[0][0] == 1.0 ? 0u : 1u; };
  CHECK(pick(0) == nash[0].first);
  CHECK(pick(1) == nash[0].second);
  CHECK(res.values[0] == doctest::Approx(payoff(nash[0].first, nash[0].second)));
}

TEST_CASE("oracle: co-located values agree on a symmetric R1 model") {
  auto m = grid_model(TransitionKind::Deterministic);
  m.horizon = 3;
  EquilibriumOptions opt;
  opt.tol = 1e-3;
  const auto res = brute_force_equilibrium(m, 10, opt);
  REQUIRE(res.converged);
  const double bound = 2.0 * opt.tol * (1.0 - std::pow(m.discount, 3.0)) / (1.0 - m.discount);
  CHECK(max_colocated_spread(res.population, res.values, 2) <= bound);
}

TEST_CASE("oracle rejects oversized policy sets") {
  SncgModel m = grid_model(TransitionKind::Identity);
  m.action_labels = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q"};
  std::vector<ActionId> all(17);
  for (ActionId a = 0; a < 17; ++a) all[a] = a;
  m.zones = {{"z1", all}, {"z2", all}};
  CHECK_THROWS_AS(brute_force_equilibrium(m, 2), ValidationError);
}

TEST_CASE("probe agents: zero mass is invisible, finite mass moves loads by at most 1/K") {
  const auto m = grid_model(TransitionKind::Identity);
  const std::size_t k = 20;
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ZoneId> zones(k);
    std::vector<std::size_t> actions(k);
    for (std::size_t i = 0; i < k; ++i) {
      zones[i] = uniform_index(rng, 2);
      actions[i] = uniform_index(rng, 2);
    }
    std::vector<double> masses(k, 1.0 / static_cast<double>(k));
    const auto base = agent_action_load(m, zones, actions, masses);

    auto z2 = zones;
    auto a2 = actions;
    auto m2 = masses;
    z2.push_back(uniform_index(rng, 2));
    a2.push_back(uniform_index(rng, 2));
    m2.push_back(0.0);
    CHECK(agent_action_load(m, z2, a2, m2) == base);

    const std::size_t j = uniform_index(rng, k);
    auto flipped = actions;
    flipped[j] = 1 - flipped[j];
    const auto moved = agent_action_load(m, zones, flipped, masses);
    for (std::size_t l = 0; l < base.load.size(); ++l)
      CHECK(std::abs(moved.load[l] - base.load[l]) <= 1.0 / static_cast<double>(k) + 1e-15);
  }
}

TEST_CASE("model file round trip") {
  const auto m = load_model(std::string(SNCG_DATA_DIR) + "/models/grid_world.json");
  CHECK(m.zone_count() == 2);
  CHECK(m.label_count() == 4);
  CHECK(m.transition.kind == TransitionKind::Stochastic);
  // stay_left load 0.1 -> left reward 1 - 0.1, stay_right 0.48 -> 0.8 - 0.6 * 0.48
  const auto r = step(m, GlobalState({0.2, 0.8}), figure_flow(), 0);
  CHECK(r.rewards[0][0] == doctest::Approx(0.9));
  CHECK(r.rewards[1][1] == doctest::Approx(0.8 - 0.6 * 0.48));
}

TEST_CASE("malformed model names the field") {
  Json j = {{"actions", {"a"}}, {"reward", {{"regime", "R1"}}}};
  CHECK(error_of([&] { model_from_json(j); }).find("zones") != std::string::npos);
  j = Json::parse(R"({"actions":["a"],"zones":[{"name":"z","actions":["b"]}],
                      "reward":{"regime":"R1","argument":"own_zone_mass","coefficients":[0]},
                      "discount":0.5,"horizon":1})");
  CHECK_THROWS_AS(model_from_json(j), ValidationError);
}
