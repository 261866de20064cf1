#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace sncg::lvmq {

/// value(e) = max(floor, initial * decay^e) for episode e.
struct ExpDecay {
  double initial = 1.0;
  double decay = 0.999;
  double floor = 0.05;

  double at(std::size_t episode) const {
    return std::max(floor, initial * std::pow(decay, static_cast<double>(episode)));
  }
  /// First episode whose value sits on the floor.
  std::size_t episodes_to_floor() const {
    if (initial <= floor) return 0;
    if (decay >= 1.0) return static_cast<std::size_t>(-1);
    std::size_t e = static_cast<std::size_t>(std::floor(std::log(floor / initial) / std::log(decay)));
    while (e > 0 && at(e - 1) <= floor) --e;
    while (at(e) > floor) ++e;
    return e;
  }
};

struct Schedules {
  ExpDecay eps1{0.9, 0.999, 0.05};  // follow the central suggestion
  ExpDecay eps2{1.0, 0.999, 0.05};  // uniform exploration
  double gamma = 0.99;

  /// Training stops once both exploration rates reach their floors.
  std::size_t episodes() const { return std::max(eps1.episodes_to_floor(), eps2.episodes_to_floor()); }
};

}  // namespace sncg::lvmq
