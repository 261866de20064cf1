#include <algorithm>
#include <cmath>
#include <string>

#include "doctest.h"
#include "sncg/errors.hpp"
#include "sncg/ncg/routing_game.hpp"
#include "sncg/random.hpp"

using namespace sncg;
using namespace sncg::ncg;

namespace {

RoutingGame network(const std::string& name) {
  return load_routing_game(std::string(SNCG_DATA_DIR) + "/networks/" + name + ".json");
}

FlowProfile table_flow(const RoutingGame& g) {
  return FlowProfile::from_fractions(g, {{0.0, 0.187, 0.813}, {0.223, 0.053, 0.724}});
}

FlowProfile random_flow(const RoutingGame& g, Rng& rng) {
  FlowProfile f = FlowProfile::zero(g);
  for (std::size_t p = 0; p < g.populations.size(); ++p) {
    double total = 0.0;
    for (double& x : f.path_flow[p]) {
      x = -std::log(1.0 - uniform01(rng));
      total += x;
    }
    for (double& x : f.path_flow[p]) x *= g.populations[p].mass / total;
  }
  return f;
}

FrankWolfeResult solve(const RoutingGame& g, double tol = 1e-6) {
  FrankWolfeOptions o;
  o.tol = tol;
  return solve_frank_wolfe(g, o);
}

RoutingGame two_link() {
  RoutingGame g;
  g.resources = {{"x", CostPolynomial({0.0, 1.0})}};
  g.populations = {{"p", 1.0, {{"only", {0}}}}};
  return g;
}

}  // namespace

TEST_CASE("cost polynomial") {
  const CostPolynomial c({2.0, 0.0, 3.0});
  CHECK(c(0.0) == 2.0);
  CHECK(c(2.0) == doctest::Approx(14.0));
  CHECK(c.integral(2.0) == doctest::Approx(4.0 + 8.0));
  CHECK_THROWS_AS(CostPolynomial({1.0, -1.0}), ValidationError);
}

TEST_CASE("fixture shapes") {
  const auto g = network("main_network");
  CHECK(g.resources.size() == 9);
  REQUIRE(g.populations.size() == 2);
  CHECK(g.populations[0].paths.size() == 3);
  CHECK(g.populations[1].paths.size() == 3);
  const auto e1 = network("appendix_ex1");
  CHECK(e1.resources.size() == 12);
  for (const auto& p : e1.populations) CHECK(p.paths.size() == 4);
}

TEST_CASE("resource loads") {
  const auto g = network("main_network");
  const auto load = resource_load(g, table_flow(g));
  CHECK(load[g.resource_index("DB")] == doctest::Approx(1.0));
  CHECK(load[g.resource_index("CD")] == doctest::Approx(0.187 + 0.053));
  for (double l : resource_load(g, FlowProfile::zero(g))) CHECK(l == 0.0);

  const auto one = two_link();
  FlowProfile f = FlowProfile::zero(one);
  f.path_flow[0][0] = 1.0;
  CHECK(resource_load(one, f)[0] == 1.0);
}

TEST_CASE("property: loads are linear in path flow") {
  const auto g = network("appendix_ex2");
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto x = random_flow(g, rng), y = random_flow(g, rng);
    const double a = uniform01(rng);
    FlowProfile mix = x;
    for (std::size_t p = 0; p < mix.path_flow.size(); ++p)
      for (std::size_t k = 0; k < mix.path_flow[p].size(); ++k)
        mix.path_flow[p][k] = a * x.path_flow[p][k] + (1.0 - a) * y.path_flow[p][k];
    const auto lx = resource_load(g, x), ly = resource_load(g, y), lm = resource_load(g, mix);
    for (std::size_t r = 0; r < lm.size(); ++r) CHECK(std::abs(lm[r] - (a * lx[r] + (1.0 - a) * ly[r])) < 1e-9);
  }
}

TEST_CASE("path costs at the published main-network flow") {
  const auto g = network("main_network");
  const auto f = table_flow(g);
  CHECK(path_cost(g, f, 0, g.path_index(0, "AB")) == doctest::Approx(2.0));
  CHECK(std::abs(path_cost(g, f, 0, g.path_index(0, "ADB")) - 1.14) <= 0.01);
  CHECK(std::abs(path_cost(g, f, 0, g.path_index(0, "ACDB")) - 1.14) <= 0.01);
  CHECK(std::abs(path_cost(g, f, 1, g.path_index(1, "EF")) - 1.22) <= 0.01);
  CHECK_THROWS_AS(path_cost(g, f, 0, 7), ValidationError);
  CHECK_THROWS_AS(g.path_index(0, "EF"), ValidationError);

  // whole first population on AB: phi_AB = 1, cost 1 + 2
  auto all_ab = FlowProfile::zero(g);
  all_ab.path_flow[0][0] = 1.0;
  all_ab.path_flow[1][0] = 1.0;
  CHECK(path_cost(g, all_ab, 0, 0) == doctest::Approx(3.0));
}

TEST_CASE("potential") {
  const auto g = network("main_network");
  CHECK(potential(g, FlowProfile::zero(g)) == 0.0);
  auto one = two_link();
  FlowProfile f = FlowProfile::zero(one);
  f.path_flow[0][0] = 1.0;
  CHECK(potential(one, f) == doctest::Approx(0.5));

  const double at_table = potential(g, table_flow(g));
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) CHECK(at_table <= potential(g, random_flow(g, rng)));
}

TEST_CASE("best response") {
  const auto g = network("main_network");
  // At zero load ACDB and ADB both cost 0; the earlier listed path wins the tie.
  const auto zero = best_response_path(g, FlowProfile::zero(g), 0);
  CHECK(zero.cost == 0.0);
  CHECK(path_cost(g, FlowProfile::zero(g), 0, g.path_index(0, "ADB")) == 0.0);
  CHECK(path_cost(g, FlowProfile::zero(g), 0, g.path_index(0, "AB")) == 2.0);
  CHECK(zero.path == g.path_index(0, "ACDB"));

  const auto br = best_response_path(g, table_flow(g), 0);
  CHECK(std::abs(br.cost - 1.14) <= 0.01);

  const auto one = two_link();
  FlowProfile f = FlowProfile::zero(one);
  f.path_flow[0][0] = 1.0;
  CHECK(best_response_path(one, f, 0).path == 0);
}

TEST_CASE("main network equilibrium matches the equal-cost linear system") {
  // Used paths ACDB, ADB and EF, ECDF, ECF with equal costs per population give
  // 4.5 x + 3 y1 = 1, y2 = y0 + 1/2, y1 = 1/2 - 2 y0, 3 x + 3.25 y1 = y2.
  const double y0 = 1.1875 / 5.25;
  const double y1 = 0.5 - 2.0 * y0;
  const double y2 = y0 + 0.5;
  const double x = (1.0 - 3.0 * y1) / 4.5;
  const auto g = network("main_network");
  const auto res = solve(g, 1e-9);
  REQUIRE(res.converged);
  const auto fr = res.flow.fractions(g);
  CHECK(fr[0][0] == doctest::Approx(0.0));
  CHECK(std::abs(fr[0][1] - x) < 5e-4);
  CHECK(std::abs(fr[0][2] - (1.0 - x)) < 5e-4);
  CHECK(std::abs(fr[1][0] - y0) < 5e-4);
  CHECK(std::abs(fr[1][1] - y1) < 5e-4);
  CHECK(std::abs(fr[1][2] - y2) < 5e-4);
}

TEST_CASE("example 1 network equilibrium") {
  const auto g = network("appendix_ex1");
  const auto res = solve(g);
  REQUIRE(res.converged);
  const std::vector<std::vector<double>> expect = {{1, 0, 0, 0}, {0.879, 0, 0, 0.121}};
  const auto fr = res.flow.fractions(g);
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(fr[p][k] - expect[p][k]) <= 5e-3);
  const auto c = path_costs(g, res.flow);
  // first-population costs are published to one decimal
  CHECK(std::abs(c[0][0] - 0.5) <= 0.05);
  CHECK(std::abs(c[0][1] - 1.0) <= 0.05);
  CHECK(std::abs(c[0][2] - 2.0) <= 0.05);
  CHECK(std::abs(c[0][3] - 1.5) <= 0.05);
  CHECK(std::abs(c[1][0] - 0.29) <= 0.01);
  CHECK(std::abs(c[1][1] - 0.5) <= 0.01);
  CHECK(std::abs(c[1][2] - 0.74) <= 0.01);
  CHECK(std::abs(c[1][3] - 0.29) <= 0.01);
}

TEST_CASE("example 2 network certificate") {
  const auto g = network("appendix_ex2");
  const auto res = solve(g);
  REQUIRE(res.converged);
  const auto rep = certify_wardrop(g, res.flow, 0.02);
  CHECK(rep.clean(0.02));
  const auto c = path_costs(g, res.flow);
  for (double v : c[0]) CHECK(std::abs(v - 2.66) <= 0.02);
  CHECK(std::abs(c[1][g.path_index(1, "FG")] - 4.36) <= 0.02);
  CHECK(std::abs(c[1][g.path_index(1, "FEG")] - 4.36) <= 0.02);
  CHECK(std::abs(c[1][g.path_index(1, "FCDG")] - 4.36) <= 0.02);
  CHECK(std::abs(c[1][g.path_index(1, "FCEG")] - 4.63) <= 0.02);
  CHECK(res.flow.path_flow[1][g.path_index(1, "FCEG")] < 1e-4);
}

TEST_CASE("property: potential never increases along the iterates") {
  for (const char* name : {"main_network", "appendix_ex1", "appendix_ex2"}) {
    const auto res = solve(network(name), 1e-8);
    const auto& h = res.potential_history;
    REQUIRE(h.size() > 1);
    for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k] <= h[k - 1] + 1e-12);
  }
}

TEST_CASE("property: duality gap bounds the suboptimality") {
  const auto g = network("appendix_ex2");
  const double opt = potential(g, solve(g, 1e-11).flow);
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const auto f = random_flow(g, rng);
    const double gap = duality_gap(g, f);
    CHECK(gap >= 0.0);
    CHECK(gap >= potential(g, f) - opt - 1e-9);
  }
}

TEST_CASE("property: Wardrop certificate clean and epsilon small at solved flows") {
  for (const char* name : {"main_network", "appendix_ex1", "appendix_ex2"}) {
    const auto g = network(name);
    const auto res = solve(g);
    CHECK(certify_wardrop(g, res.flow, 0.02).clean(0.02));
    const double eps = epsilon_of_flow(g, res.flow);
    CHECK(eps >= 0.0);
    CHECK(eps <= 1e-3);
  }
}

TEST_CASE("epsilon of a herded flow") {
  const auto g = network("main_network");
  auto f = table_flow(g);
  f.path_flow[1] = {1.0, 0.0, 0.0};
  const auto load = resource_load(g, f);
  const auto c = [&](const char* r) { return g.resources[g.resource_index(r)].cost(load[g.resource_index(r)]); };
  const double ef = c("EF");
  const double ecdf = c("EC") + c("CD") + c("DF");
  const double ecf = c("EC") + c("CF");
  const double pop1 = std::max(
      path_cost(g, f, 0, 1) - std::min({path_cost(g, f, 0, 0), path_cost(g, f, 0, 1), path_cost(g, f, 0, 2)}),
      path_cost(g, f, 0, 2) - std::min({path_cost(g, f, 0, 0), path_cost(g, f, 0, 1), path_cost(g, f, 0, 2)}));
  const double expect = std::max(ef - std::min(ecdf, ecf), pop1);
  CHECK(ef - std::min(ecdf, ecf) > 0.0);
  CHECK(epsilon_of_flow(g, f) == doctest::Approx(expect).epsilon(1e-12));

  const auto one = two_link();
  FlowProfile s = FlowProfile::zero(one);
  s.path_flow[0][0] = 1.0;
  CHECK(epsilon_of_flow(one, s) == 0.0);
}

TEST_CASE("perturbed flow is reported") {
  const auto g = network("main_network");
  const auto eq = solve(g).flow;
  // empty ECDF onto EF: ECDF becomes an unused path cheaper than EF
  auto f = eq;
  const std::size_t ecdf = g.path_index(1, "ECDF");
  f.path_flow[1][0] += f.path_flow[1][ecdf];
  f.path_flow[1][ecdf] = 0.0;
  const auto rep = certify_wardrop(g, f, 0.0);
  REQUIRE(rep.violations.size() == 1);
  CHECK(rep.violations[0].population == 1);
  CHECK(rep.violations[0].unused_path == ecdf);
  CHECK(rep.violations[0].unused_cost < rep.violations[0].worst_used_cost);

  // a little pop-1 mass on AB, which costs 2 against about 1.14, shows as spread
  auto g2 = eq;
  g2.path_flow[0][0] = 0.01;
  g2.path_flow[0][2] -= 0.01;
  const auto rep2 = certify_wardrop(g, g2, 0.0);
  CHECK_FALSE(rep2.clean(0.02));
  CHECK(rep2.populations[0].max_used_cost >= 2.0);
  CHECK(rep2.populations[0].used_paths.front() == 0u);
}

TEST_CASE("loose tolerance stops early") {
  const auto res = solve(network("main_network"), 1.0);
  CHECK(res.converged);
  CHECK(res.iterations <= 5);
  CHECK(res.gap <= 1.0);
}

TEST_CASE("iteration cap reports non-convergence") {
  FrankWolfeOptions o;
  o.tol = 1e-14;
  o.max_iters = 3;
  const auto res = solve_frank_wolfe(network("appendix_ex2"), o);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 3);
  CHECK_THROWS_AS(solve(network("main_network"), 0.0), ValidationError);
}

TEST_CASE("network JSON round trip and errors") {
  const auto g = network("appendix_ex2");
  const auto back = routing_game_from_json(routing_game_to_json(g));
  REQUIRE(back.resources.size() == g.resources.size());
  for (std::size_t r = 0; r < g.resources.size(); ++r)
    CHECK(back.resources[r].cost.coefficients() == g.resources[r].cost.coefficients());

  Json bad = routing_game_to_json(g);
  bad["populations"][0]["paths"][0]["resources"] = {"ZZ"};
  CHECK_THROWS_AS(routing_game_from_json(bad), ValidationError);
  bad = routing_game_to_json(g);
  bad.erase("resources");
  try {
    routing_game_from_json(bad);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("resources") != std::string::npos);
  }
}
