#pragma once

// Synthetic aggregation simulator: taxis wait in zones, customer demand arrives
// per origin-destination pair and expires after a time-to-live.

#include "sncg/env/env.hpp"
#include "sncg/random.hpp"

namespace sncg::env {

enum class ArrivalMode { Static, Dynamic };
enum class TripPattern { Uniform, NonUniform };

/// Externally supplied demand: `count` requests from origin to destination during
/// time bucket `bucket` (bucket_steps steps each).
struct DemandRecord {
  std::size_t origin = 0, destination = 0, bucket = 0;
  double count = 0.0;
};

struct TaxiConfig {
  std::size_t zones = 10;
  std::size_t agents = 200;
  std::vector<std::vector<std::size_t>> travel_time;  // steps; diagonal 0
  std::vector<std::vector<double>> fare;
  double movement_cost = 0.1;  // per step travelled
  double dar = 0.5;            // demand per step per agent
  ArrivalMode arrival = ArrivalMode::Static;
  TripPattern pattern = TripPattern::Uniform;
  std::vector<std::size_t> hot_zones = {0, 1, 2};  // long-trip origins (non-uniform)
  std::size_t ttl = 5;
  std::size_t episode_length = 1000;
  std::vector<DemandRecord> demand;  // replaces Poisson arrivals when nonempty
  std::size_t bucket_steps = 60;
  double demand_scale = 1.0;

  void validate() const;
  /// Zones on a ring; travel time 1 + ring distance, fare 1 + 0.5 per step.
  static TaxiConfig synthetic(std::size_t zones, std::size_t agents);
  /// W[o][d]: share of per-step demand on each pair, summing to 1.
  std::vector<std::vector<double>> trip_weights() const;
};

struct TaxiEvent {
  enum class Kind { Arrival, Match, Relocate, Expire, TripEnd };
  Kind kind;
  std::size_t step = 0;
  std::size_t demand = 0;  // demand id (Arrival, Match, Expire)
  std::size_t agent = 0;   // (Match, Relocate, TripEnd)
  std::size_t origin = 0, destination = 0;
};

struct Demand {
  std::size_t id = 0;
  std::size_t origin = 0, destination = 0;
  std::size_t ttl = 0;  // steps left, counting the current one
};

/// Local action = destination zone (own zone = wait). Matching precedes movement:
/// in each zone min(idle agents, live demand) uniformly random pairs are served;
/// served agents earn fare - movement_cost * travel time and are busy until they
/// reach the destination. Unmatched agents relocate at movement cost.
class TaxiEnv final : public MultiAgentEnv {
 public:
  explicit TaxiEnv(TaxiConfig config);

  std::string kind() const override { return "taxi"; }
  std::size_t num_agents() const override { return config_.agents; }
  std::size_t num_zones() const override { return config_.zones; }
  std::vector<std::size_t> action_counts() const override {
    return std::vector<std::size_t>(config_.zones, config_.zones);
  }
  std::size_t horizon() const override { return config_.episode_length; }

  void reset(std::uint64_t seed) override;
  GlobalState global_state() const override;
  const std::vector<ZoneId>& agent_zones() const override { return zones_; }
  std::vector<bool> active() const override;
  EnvStep step(const std::vector<std::size_t>& actions) override;

  const TaxiConfig& config() const { return config_; }
  const std::vector<Demand>& live_demand() const { return demand_; }
  /// Steps until each agent is free again (0 = idle).
  const std::vector<std::size_t>& busy() const { return busy_; }
  /// Events of the most recent step.
  const std::vector<TaxiEvent>& events() const { return events_; }
  std::size_t time() const { return t_; }
  std::size_t generated() const { return generated_; }
  std::size_t served() const { return served_; }
  std::size_t expired() const { return expired_; }

 private:
  void generate_demand();

  TaxiConfig config_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<std::size_t>> scheduled_;  // [step] -> record indices
  std::vector<ZoneId> zones_;
  std::vector<std::size_t> busy_;
  std::vector<Demand> demand_;
  std::vector<TaxiEvent> events_;
  std::size_t t_ = 0, next_id_ = 0;
  std::size_t generated_ = 0, served_ = 0, expired_ = 0;
  Rng rng_;
};

TaxiConfig taxi_config_from_json(const Json& j, const std::filesystem::path& base_dir);
/// CSV with header origin,destination,bucket,count.
std::vector<DemandRecord> load_demand_csv(const std::filesystem::path& path);

}  // namespace sncg::env
