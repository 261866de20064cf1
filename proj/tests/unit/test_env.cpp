#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "doctest.h"
#include "sncg/env/env.hpp"
#include "sncg/env/model_env.hpp"
#include "sncg/env/routing_env.hpp"
#include "sncg/env/taxi_env.hpp"
#include "sncg/errors.hpp"
#include "sncg/random.hpp"
#include "support/taxi_fuzz.hpp"

using namespace sncg;
using namespace sncg::env;

namespace {

std::string data(const std::string& rel) { return std::string(SNCG_DATA_DIR) + "/" + rel; }

std::vector<std::size_t> random_actions(const MultiAgentEnv& env, Rng& rng) {
  const auto counts = env.action_counts();
  std::vector<std::size_t> a(env.num_agents(), 0);
  const auto act = env.active();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (act[i]) a[i] = uniform_index(rng, counts[env.agent_zones()[i]]);
  return a;
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

// A -> B directly (2 + phi) or through C (phi, then phi).
RoutingNetwork detour_network(double scale = 1.0) {
  RoutingNetwork net;
  net.nodes = {"A", "B", "C"};
  net.edges = {{"AB", 0, 1, ncg::CostPolynomial({2.0 * scale, scale})},
               {"AC", 0, 2, ncg::CostPolynomial({0.0, scale})},
               {"CB", 2, 1, ncg::CostPolynomial({0.0, scale})}};
  RoutePopulation p;
  p.name = "P";
  p.mass = 1.0;
  p.origin = 0;
  p.destination = 1;
  p.next_edges = {{0, 1}, {}, {2}};
  net.populations = {p};
  return net;
}

}  // namespace

TEST_CASE("fixtures build") {
  auto single = build_env(data("envs/main_network_single.json"));
  CHECK(single->kind() == "routing_single");
  CHECK(single->num_agents() == 200);
  CHECK(single->action_counts() == std::vector<std::size_t>{3, 3});
  auto ex1 = build_env(data("envs/appendix_ex1_single.json"), 40);
  CHECK(ex1->num_agents() == 40);
  CHECK(ex1->action_counts() == std::vector<std::size_t>{4, 4});
  CHECK(build_env(data("envs/grid_world.json"))->kind() == "sncg_model");
  CHECK(build_env(data("envs/taxi_synthetic.json"))->num_zones() == 10);
  auto multi = build_env(data("envs/main_network_multistage.json"));
  CHECK(multi->kind() == "routing_multistage");
  CHECK(multi->horizon() == 10);
}

TEST_CASE("environment specs are validated") {
  CHECK(error_of([] { env_from_json(Json{{"kind", "maze"}}, "."); }).find("maze") != std::string::npos);
  CHECK(error_of([] { env_from_json(Json{{"kind", "routing_single"}}, "."); }).find("network") !=
        std::string::npos);
  Json taxi = {{"kind", "taxi"}, {"zones", 4}, {"agents", 10}, {"dar", -1.0}};
  CHECK(error_of([&] { env_from_json(taxi, "."); }).find("dar") != std::string::npos);
  taxi["dar"] = 0.5;
  taxi["travel_time"] = {{0, 1}, {1, 0}};
  CHECK_THROWS_AS(env_from_json(taxi, "."), ValidationError);
}

TEST_CASE("agents are split over populations by mass") {
  ncg::RoutingGame g;
  g.resources = {{"r", ncg::CostPolynomial({1.0})}};
  g.populations = {{"a", 0.7, {{"p", {0}}}}, {"b", 0.3, {{"p", {0}}}}, {"c", 0.001, {{"p", {0}}}}};
  const auto c = agents_per_population(g, 10);
  CHECK(c[0] + c[1] + c[2] == 10);
  CHECK(c[2] >= 1);
  CHECK(c[0] >= 6);
  CHECK_THROWS_AS(agents_per_population(g, 2), ValidationError);
}

TEST_CASE("single-stage reward is minus the path cost of the induced flow") {
  auto e = build_env(data("envs/appendix_ex2_single.json"), 60);
  auto& env = dynamic_cast<SingleStageRoutingEnv&>(*e);
  Rng rng(1);
  for (int ep = 0; ep < 50; ++ep) {
    env.reset(ep);
    const auto a = random_actions(env, rng);
    const auto flow = env.induced_flow(a);
    ncg::check_flow(env.game(), flow, true);
    const auto costs = ncg::path_costs(env.game(), flow);
    const auto st = env.step(a);
    CHECK(st.episode_done);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(st.rewards[i] == -costs[env.agent_zones()[i]][a[i]]);
      CHECK(st.terminal[i]);
    }
    const auto audit = env.audit();
    REQUIRE(audit);
    CHECK(audit->epsilon_gap == ncg::epsilon_of_flow(env.game(), flow));
  }
  auto bad = random_actions(env, rng);
  bad[0] = 4;
  CHECK_THROWS_AS(env.step(bad), ValidationError);
}

TEST_CASE("grid world agents follow the model") {
  auto e = build_env(data("envs/grid_world.json"));
  auto& env = dynamic_cast<ModelEnv&>(*e);
  Rng rng(4);
  env.reset(3);
  for (std::size_t t = 0; t < env.horizon(); ++t) {
    const auto s = env.global_state();
    const auto zones = env.agent_zones();
    const auto a = random_actions(env, rng);
    std::vector<double> masses(zones.size(), 1.0 / static_cast<double>(zones.size()));
    const auto load = agent_action_load(env.model(), zones, a, masses);
    const auto st = env.step(a);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(st.rewards[i] == doctest::Approx(env.model().reward.fn(s, zones[i], load, std::nullopt)));
    double total = 0.0;
    for (std::size_t z = 0; z < env.num_zones(); ++z) total += env.global_state()[z];
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK(st.episode_done == (t + 1 == env.horizon()));
  }
}

TEST_CASE("environment resets replay exactly") {
  for (const char* spec : {"envs/grid_world.json", "envs/taxi_synthetic.json"}) {
    auto env = build_env(data(spec));
    std::vector<std::vector<double>> first;
    for (int rep = 0; rep < 2; ++rep) {
      env->reset(77);
      Rng rng(5);
      std::vector<double> trace;
      for (int t = 0; t < 30; ++t) {
        const auto st = env->step(random_actions(*env, rng));
        trace.insert(trace.end(), st.rewards.begin(), st.rewards.end());
        for (std::size_t z = 0; z < env->num_zones(); ++z) trace.push_back(env->global_state()[z]);
      }
      first.push_back(trace);
    }
    CHECK(first[0] == first[1]);
  }
}

TEST_CASE("multistage network from the main fixture") {
  const auto net = network_from_game_json(read_json_file(data("networks/main_network.json")));
  CHECK(net.nodes.size() == 6);
  CHECK(net.edges.size() == 9);
  REQUIRE(net.populations.size() == 2);
  const auto& p1 = net.populations[0];
  const auto node = [&](const char* n) {
    return static_cast<std::size_t>(std::find(net.nodes.begin(), net.nodes.end(), n) - net.nodes.begin());
  };
  CHECK(p1.origin == node("A"));
  CHECK(p1.destination == node("B"));
  CHECK(p1.next_edges[node("A")].size() == 3);
  CHECK(p1.next_edges[node("C")].size() == 1);
  CHECK(p1.next_edges[node("B")].empty());
}

TEST_CASE("multistage best response") {
  const auto net = detour_network();
  // everyone takes AB at t = 0: cost 3; the detour is free against those loads
  const TimedLoads herded = {{1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
  const auto br = multistage_best_response(net, herded, 4, {3.0});
  CHECK(br.value[0] == 0.0);
  CHECK(br.gap[0] == doctest::Approx(3.0));
  CHECK(br.epsilon_gap > 0.0);

  const auto free = detour_network(0.0);
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    TimedLoads l(3, std::vector<double>(3));
    for (auto& row : l)
      for (double& x : row) x = uniform01(rng);
    CHECK(multistage_best_response(free, l, 3, {0.0}).epsilon_gap == 0.0);
  }
  CHECK_THROWS_AS(multistage_best_response(net, herded, 0, {}), NumericError);
}

TEST_CASE("multistage episodes conserve mass and end at the destination") {
  auto e = build_env(data("envs/main_network_multistage.json"), 50);
  auto& env = dynamic_cast<MultiStageRoutingEnv&>(*e);
  Rng rng(6);
  for (int ep = 0; ep < 20; ++ep) {
    env.reset(ep);
    bool done = false;
    std::size_t steps = 0;
    while (!done) {
      const auto zones = env.agent_zones();
      const auto act = env.active();
      const std::size_t nn = env.network().nodes.size();
      // 2 populations of mass 1 over 50 agents
      std::map<std::size_t, double> at_node;
      for (std::size_t i = 0; i < zones.size(); ++i)
        if (act[i]) at_node[zones[i] % nn] += 0.04;
      const auto a = random_actions(env, rng);
      const auto st = env.step(a);
      std::map<std::size_t, double> outflow;
      const auto& load = env.episode_loads().back();
      for (std::size_t k = 0; k < load.size(); ++k) outflow[env.network().edges[k].from] += load[k];
      for (const auto& [n, m] : outflow) CHECK(m <= at_node[n] + 1e-12);
      double out = 0.0, in = 0.0;
      for (const auto& [n, m] : outflow) out += m;
      for (const auto& [n, m] : at_node) in += m;
      CHECK(out == doctest::Approx(in));
      for (std::size_t i = 0; i < zones.size(); ++i)
        if (!act[i]) CHECK(st.rewards[i] == 0.0);
      done = st.episode_done;
      ++steps;
    }
    CHECK(steps <= env.horizon());
    for (bool a : env.active()) CHECK_FALSE(a);
    const auto audit = env.audit();
    REQUIRE(audit);
    CHECK(audit->epsilon_gap >= -1e-12);
  }
}

TEST_CASE("taxi with no demand only pays for movement") {
  auto e = build_env(data("envs/taxi_zero_demand.json"));
  auto& env = dynamic_cast<TaxiEnv&>(*e);
  Rng rng(8);
  env.reset(1);
  double total = 0.0;
  for (std::size_t t = 0; t < env.horizon(); ++t) {
    const auto st = env.step(random_actions(env, rng));
    for (double r : st.rewards) {
      CHECK(r <= 0.0);
      total += r;
    }
    for (const auto& ev : env.events()) CHECK(ev.kind != TaxiEvent::Kind::Match);
  }
  CHECK(env.served() == 0);
  CHECK(total < 0.0);
}

TEST_CASE("property: taxi invariants over a million fuzzed steps") {
  constexpr std::size_t kSeeds = 100, kSteps = 10000;
  std::vector<testing::FuzzStats> stats(kSeeds);
#pragma omp parallel for schedule(dynamic)
  for (long s = 0; s < static_cast<long>(kSeeds); ++s)
    stats[static_cast<std::size_t>(s)] = testing::fuzz_taxi(static_cast<std::uint64_t>(s), kSteps);
  std::size_t steps = 0;
  for (const auto& s : stats) {
    steps += s.steps;
    INFO(s.first);
    CHECK(s.failures == 0);
  }
  CHECK(steps == 1000000);
}

TEST_CASE("served fraction grows with fleet size at fixed demand") {
  auto served_fraction = [](std::size_t agents, double dar) {
    std::size_t served = 0, generated = 0;
    for (std::uint64_t ep = 0; ep < 10; ++ep) {
      TaxiConfig c = TaxiConfig::synthetic(10, agents);
      c.dar = dar;
      c.episode_length = 300;
      TaxiEnv env(c);
      env.reset(ep);
      for (std::size_t t = 0; t < c.episode_length; ++t) env.step(env.agent_zones());
      served += env.served();
      generated += env.generated();
    }
    return static_cast<double>(served) / static_cast<double>(generated);
  };
  // both fleets see about 10 requests per step
  const double small = served_fraction(20, 0.5);
  const double large = served_fraction(200, 0.05);
  CHECK(large > small);
}

TEST_CASE("taxi trip weights") {
  TaxiConfig c = TaxiConfig::synthetic(6, 10);
  for (auto pattern : {TripPattern::Uniform, TripPattern::NonUniform}) {
    c.pattern = pattern;
    const auto w = c.trip_weights();
    double total = 0.0;
    for (std::size_t o = 0; o < 6; ++o) {
      CHECK(w[o][o] == 0.0);
      for (double x : w[o]) total += x;
    }
    CHECK(total == doctest::Approx(1.0));
  }
  // hot origins send more of their demand on long trips
  const auto w = c.trip_weights();
  CHECK(w[0][3] > w[0][1]);
  CHECK(w[4][3] == doctest::Approx(w[4][1]));
}

TEST_CASE("demand matrix ingestion") {
  const auto csv = temp_file("sncg_demand.csv", "origin,destination,bucket,count\n0,1,0,4\n2,0,1,3.5\n");
  const auto recs = load_demand_csv(csv);
  REQUIRE(recs.size() == 2);
  CHECK(recs[1].origin == 2);
  CHECK(recs[1].bucket == 1);
  CHECK(recs[1].count == 3.5);

  Json spec = {{"kind", "taxi"}, {"zones", 3}, {"agents", 5}, {"episode_length", 20}, {"bucket_steps", 10},
               {"demand_file", csv.filename().string()}, {"demand_scale", 100.0}};
  auto env = env_from_json(spec, csv.parent_path());
  auto& taxi = dynamic_cast<TaxiEnv&>(*env);
  std::size_t early = 0, late = 0;
  for (int t = 0; t < 20; ++t) {
    env->step(env->agent_zones());
    for (const auto& ev : taxi.events())
      if (ev.kind == TaxiEvent::Kind::Arrival) {
        CHECK(((ev.origin == 0 && ev.destination == 1) || (ev.origin == 2 && ev.destination == 0)));
        if (ev.origin == 0) CHECK(t < 10);
        (t < 10 ? early : late)++;
      }
  }
  // Poisson(400) then Poisson(350)
  CHECK(early > 300);
  CHECK(late > 250);

  const auto bad = temp_file("sncg_bad_demand.csv", "from,to,bucket,count\n");
  CHECK_THROWS_AS(load_demand_csv(bad), ValidationError);
  std::filesystem::remove(csv);
  std::filesystem::remove(bad);
}
