#include "sncg/env/taxi_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sncg/errors.hpp"

namespace sncg::env {

void TaxiConfig::validate() const {
  if (zones < 2) throw ValidationError("taxi: need at least 2 zones");
  if (agents == 0) throw ValidationError("taxi: need at least one agent");
  if (!(dar >= 0.0) || !std::isfinite(dar)) throw ValidationError("taxi: dar must be a nonnegative number");
  if (!(movement_cost >= 0.0)) throw ValidationError("taxi: movement_cost must be nonnegative");
  if (ttl == 0) throw ValidationError("taxi: ttl must be at least 1");
  if (episode_length == 0) throw ValidationError("taxi: episode_length must be positive");
  if (travel_time.size() != zones || fare.size() != zones)
    throw ValidationError("taxi: travel_time and fare must be zones x zones");
  for (std::size_t o = 0; o < zones; ++o) {
    if (travel_time[o].size() != zones || fare[o].size() != zones)
      throw ValidationError("taxi: row " + std::to_string(o) + " of travel_time/fare has the wrong length");
    for (std::size_t d = 0; d < zones; ++d) {
      if (o == d && travel_time[o][d] != 0)
        throw ValidationError("taxi: travel_time diagonal must be 0");
      if (o != d && travel_time[o][d] == 0)
        throw ValidationError("taxi: travel_time[" + std::to_string(o) + "][" + std::to_string(d) +
                              "] must be at least 1");
      if (!std::isfinite(fare[o][d])) throw ValidationError("taxi: fare entries must be finite");
    }
  }
  for (std::size_t h : hot_zones)
    if (h >= zones) throw ValidationError("taxi: hot zone " + std::to_string(h) + " out of range");
  if (bucket_steps == 0) throw ValidationError("taxi: bucket_steps must be positive");
  if (!(demand_scale >= 0.0)) throw ValidationError("taxi: demand_scale must be nonnegative");
  for (const auto& r : demand)
    if (r.origin >= zones || r.destination >= zones || r.origin == r.destination || !(r.count >= 0.0))
      throw ValidationError("taxi: invalid demand record");
}

TaxiConfig TaxiConfig::synthetic(std::size_t zones, std::size_t agents) {
  TaxiConfig c;
  c.zones = zones;
  c.agents = agents;
  c.travel_time.assign(zones, std::vector<std::size_t>(zones, 0));
  c.fare.assign(zones, std::vector<double>(zones, 0.0));
  for (std::size_t o = 0; o < zones; ++o)
    for (std::size_t d = 0; d < zones; ++d) {
      if (o == d) continue;
      const std::size_t gap = o > d ? o - d : d - o;
      c.travel_time[o][d] = 1 + std::min(gap, zones - gap);
      c.fare[o][d] = 1.0 + 0.5 * static_cast<double>(c.travel_time[o][d]);
    }
  c.hot_zones.clear();
  for (std::size_t h = 0; h < std::min<std::size_t>(3, zones); ++h) c.hot_zones.push_back(h);
  return c;
}

std::vector<std::vector<double>> TaxiConfig::trip_weights() const {
  const std::size_t n = zones;
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (std::size_t o = 0; o < n; ++o) {
    const bool hot = pattern == TripPattern::NonUniform &&
                     std::find(hot_zones.begin(), hot_zones.end(), o) != hot_zones.end();
    double row = 0.0;
    for (std::size_t d = 0; d < n; ++d)
      if (d != o) row += (w[o][d] = hot ? static_cast<double>(travel_time[o][d]) : 1.0);
    for (double& x : w[o]) x /= row * static_cast<double>(n);
  }
  return w;
}

TaxiEnv::TaxiEnv(TaxiConfig config) : config_(std::move(config)) {
  config_.validate();
  weights_ = config_.trip_weights();
  reset(0);
}

void TaxiEnv::reset(std::uint64_t seed) {
  rng_.seed(derive_seed(seed, 0x7461));
  zones_.resize(config_.agents);
  for (auto& z : zones_) z = uniform_index(rng_, config_.zones);
  busy_.assign(config_.agents, 0);
  demand_.clear();
  events_.clear();
  t_ = next_id_ = 0;
  generated_ = served_ = expired_ = 0;

  scheduled_.assign(config_.demand.empty() ? 0 : config_.episode_length, {});
  for (std::size_t r = 0; r < config_.demand.size(); ++r) {
    const double mean = config_.demand_scale * config_.demand[r].count;
    if (mean <= 0.0) continue;
    std::poisson_distribution<std::size_t> pois(mean);
    const std::size_t n = pois(rng_);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t s = config_.demand[r].bucket * config_.bucket_steps + uniform_index(rng_, config_.bucket_steps);
      if (s < config_.episode_length) scheduled_[s].push_back(r);
    }
  }
}

GlobalState TaxiEnv::global_state() const {
  std::vector<double> m(config_.zones, 0.0);
  const double w = 1.0 / static_cast<double>(config_.agents);
  for (ZoneId z : zones_) m[z] += w;
  return GlobalState(std::move(m));
}

std::vector<bool> TaxiEnv::active() const {
  std::vector<bool> out(config_.agents);
  for (std::size_t i = 0; i < config_.agents; ++i) out[i] = busy_[i] == 0;
  return out;
}

void TaxiEnv::generate_demand() {
  auto add = [&](std::size_t o, std::size_t d) {
    demand_.push_back({next_id_, o, d, config_.ttl});
    events_.push_back({TaxiEvent::Kind::Arrival, t_, next_id_, 0, o, d});
    ++next_id_;
    ++generated_;
  };
  if (!config_.demand.empty()) {
    if (t_ < scheduled_.size())
      for (std::size_t r : scheduled_[t_]) add(config_.demand[r].origin, config_.demand[r].destination);
    return;
  }
  double rate = config_.dar * static_cast<double>(config_.agents);
  if (config_.arrival == ArrivalMode::Dynamic)
    rate *= 1.0 + 0.5 * std::sin(4.0 * std::numbers::pi * static_cast<double>(t_) /
                                 static_cast<double>(config_.episode_length));
  if (rate <= 0.0) return;
  std::poisson_distribution<std::size_t> pois(rate);
  const std::size_t n = pois(rng_);
  const std::size_t nz = config_.zones;
  for (std::size_t k = 0; k < n; ++k) {
    double u = uniform01(rng_);
    std::size_t o = 0, d = 0;
    bool placed = false;
    for (o = 0; o < nz && !placed; ++o)
      for (d = 0; d < nz; ++d) {
        u -= weights_[o][d];
        if (u < 0.0) {
          placed = true;
          break;
        }
      }
    if (placed) add(o - 1, d);
    else add(nz - 1, nz - 2);  // rounding tail
  }
}

EnvStep TaxiEnv::step(const std::vector<std::size_t>& actions) {
  check_actions(*this, actions);
  events_.clear();
  const std::size_t nz = config_.zones;
  const std::size_t na = config_.agents;
  const auto act = active();

  generate_demand();

  EnvStep out;
  out.rewards.assign(na, 0.0);
  out.terminal.assign(na, false);

  std::vector<std::vector<std::size_t>> idle(nz), waiting(nz);
  for (std::size_t i = 0; i < na; ++i)
    if (act[i]) idle[zones_[i]].push_back(i);
  for (std::size_t k = 0; k < demand_.size(); ++k) waiting[demand_[k].origin].push_back(k);

  std::vector<bool> matched(na, false), taken(demand_.size(), false);
  for (std::size_t z = 0; z < nz; ++z) {
    auto& ag = idle[z];
    auto& dm = waiting[z];
    const std::size_t m = std::min(ag.size(), dm.size());
    // Partial Fisher-Yates on both sides gives uniformly random pairs.
    for (std::size_t k = 0; k < m; ++k) {
      std::swap(ag[k], ag[k + uniform_index(rng_, ag.size() - k)]);
      std::swap(dm[k], dm[k + uniform_index(rng_, dm.size() - k)]);
      const std::size_t i = ag[k];
      const Demand& d = demand_[dm[k]];
      const std::size_t tt = config_.travel_time[d.origin][d.destination];
      out.rewards[i] = config_.fare[d.origin][d.destination] - config_.movement_cost * static_cast<double>(tt);
      busy_[i] = tt;
      zones_[i] = d.destination;
      matched[i] = true;
      taken[dm[k]] = true;
      events_.push_back({TaxiEvent::Kind::Match, t_, d.id, i, d.origin, d.destination});
      ++served_;
    }
  }

  for (std::size_t i = 0; i < na; ++i) {
    if (!act[i] || matched[i] || actions[i] == zones_[i]) continue;
    const std::size_t from = zones_[i], to = actions[i];
    const std::size_t tt = config_.travel_time[from][to];
    out.rewards[i] = -config_.movement_cost * static_cast<double>(tt);
    busy_[i] = tt;
    zones_[i] = to;
    events_.push_back({TaxiEvent::Kind::Relocate, t_, 0, i, from, to});
  }

  std::vector<Demand> live;
  live.reserve(demand_.size());
  for (std::size_t k = 0; k < demand_.size(); ++k) {
    if (taken[k]) continue;
    Demand d = demand_[k];
    if (--d.ttl == 0) {
      events_.push_back({TaxiEvent::Kind::Expire, t_, d.id, 0, d.origin, d.destination});
      ++expired_;
    } else {
      live.push_back(d);
    }
  }
  demand_ = std::move(live);

  for (std::size_t i = 0; i < na; ++i)
    if (busy_[i] > 0 && --busy_[i] == 0)
      events_.push_back({TaxiEvent::Kind::TripEnd, t_, 0, i, zones_[i], zones_[i]});

  ++t_;
  out.episode_done = t_ >= config_.episode_length;
  return out;
}

std::vector<DemandRecord> load_demand_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open demand file " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("origin,destination,bucket,count", 0) != 0)
    throw ValidationError(path.string() + ": expected header origin,destination,bucket,count");
  std::vector<DemandRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    DemandRecord r;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ss >> r.origin >> c1 >> r.destination >> c2 >> r.bucket >> c3 >> r.count) || c1 != ',' ||
        c2 != ',' || c3 != ',')
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": malformed record");
    out.push_back(r);
  }
  return out;
}

TaxiConfig taxi_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  const std::string ctx = "taxi";
  TaxiConfig c = TaxiConfig::synthetic(field_or<std::size_t>(j, "zones", 10, ctx),
                                       field_or<std::size_t>(j, "agents", 200, ctx));
  if (j.contains("travel_time")) c.travel_time = field_as<std::vector<std::vector<std::size_t>>>(j, "travel_time", ctx);
  if (j.contains("fare")) c.fare = field_as<std::vector<std::vector<double>>>(j, "fare", ctx);
  if (j.contains("hot_zones")) c.hot_zones = field_as<std::vector<std::size_t>>(j, "hot_zones", ctx);
  c.movement_cost = field_or<double>(j, "movement_cost", c.movement_cost, ctx);
  c.dar = field_or<double>(j, "dar", c.dar, ctx);
  c.ttl = field_or<std::size_t>(j, "ttl", c.ttl, ctx);
  c.episode_length = field_or<std::size_t>(j, "episode_length", c.episode_length, ctx);
  const auto arrival = field_or<std::string>(j, "arrival", "static", ctx);
  if (arrival == "static") c.arrival = ArrivalMode::Static;
  else if (arrival == "dynamic") c.arrival = ArrivalMode::Dynamic;
  else throw ValidationError("taxi.arrival: unknown value '" + arrival + "'");
  const auto pattern = field_or<std::string>(j, "pattern", "uniform", ctx);
  if (pattern == "uniform") c.pattern = TripPattern::Uniform;
  else if (pattern == "non_uniform") c.pattern = TripPattern::NonUniform;
  else throw ValidationError("taxi.pattern: unknown value '" + pattern + "'");
  if (j.contains("demand_file")) {
    const std::filesystem::path p = field_as<std::string>(j, "demand_file", ctx);
    c.demand = load_demand_csv(p.is_absolute() ? p : base_dir / p);
  }
  c.bucket_steps = field_or<std::size_t>(j, "bucket_steps", c.bucket_steps, ctx);
  c.demand_scale = field_or<double>(j, "demand_scale", c.demand_scale, ctx);
  c.validate();
  return c;
}

}  // namespace sncg::env
