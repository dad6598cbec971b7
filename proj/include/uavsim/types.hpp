#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace uavsim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec2 xy() const { return {x, y}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double horizontal_distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double distance(Vec3 a, Vec3 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

/// Ground sensor state. Invariants: 0 <= queue_len <= queue_cap, battery_j >= 0,
/// alive iff battery_j > 0.
struct SensorState {
  int id = 0;
  Vec2 position;
  int queue_len = 0;
  int queue_cap = 40;
  double battery_j = 50.0;
  double arrival_rate = 0.0;  // mean packets per step
  bool alive = true;

  friend bool operator==(const SensorState&, const SensorState&) = default;
};

/// UAV kinematic state. waypoint_idx is the waypoint the UAV is heading to, or the
/// one it is hovering at when `hovering` is set.
struct UavState {
  int id = 0;
  Vec3 position;
  double velocity = 1.0;
  double v_max = 20.0;
  double battery_j = 0.0;
  double energy_per_m = 0.0;
  double distance_flown_m = 0.0;
  std::size_t waypoint_idx = 0;
  bool hovering = false;
  int hover_count = 0;

  friend bool operator==(const UavState&, const UavState&) = default;
};

/// Closed waypoint loop: after the last waypoint the UAV heads back to the first.
struct Trajectory {
  std::vector<Vec3> waypoints;
  int hover_steps = 1;

  std::size_t next_index(std::size_t idx) const { return (idx + 1) % waypoints.size(); }
};

}  // namespace uavsim
