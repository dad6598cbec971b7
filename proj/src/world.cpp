#include "uavsim/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace uavsim {

bool PacketLedger::balances(std::span<const SensorState> sensors) const {
  std::int64_t queued = 0;
  for (const SensorState& s : sensors) queued += s.queue_len;
  return generated == delivered + lost_overflow + lost_comm + queued;
}

void validate(const SensorState& sensor) {
  if (sensor.queue_cap < 0 || sensor.queue_len < 0 || sensor.queue_len > sensor.queue_cap) {
    throw std::invalid_argument("sensor queue must satisfy 0 <= queue_len <= queue_cap");
  }
  if (!(sensor.battery_j >= 0.0)) throw std::invalid_argument("sensor battery must be non-negative");
  if (sensor.alive != (sensor.battery_j > 0.0)) {
    throw std::invalid_argument("sensor alive flag must match battery > 0");
  }
  if (!(sensor.arrival_rate >= 0.0) || !std::isfinite(sensor.arrival_rate)) {
    throw std::invalid_argument("sensor arrival rate must be finite and non-negative");
  }
}

void validate(const Trajectory& trajectory) {
  const auto& w = trajectory.waypoints;
  if (w.empty()) throw std::invalid_argument("trajectory needs at least one waypoint");
  if (trajectory.hover_steps < 1) throw std::invalid_argument("hover_steps must be >= 1");
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i].z > 0.0)) throw std::invalid_argument("waypoint altitude must be positive");
    if (w.size() > 1 && w[i] == w[trajectory.next_index(i)]) {
      throw std::invalid_argument("consecutive waypoints must be distinct");
    }
  }
}

void validate(const UavState& uav, const Trajectory& trajectory) {
  validate(trajectory);
  if (!(uav.v_max > 0.0)) throw std::invalid_argument("v_max must be positive");
  if (!(uav.velocity > 0.0 && uav.velocity <= uav.v_max)) {
    throw std::invalid_argument("UAV velocity must lie in (0, v_max]");
  }
  if (!(uav.position.z > 0.0)) throw std::invalid_argument("UAV altitude must be positive");
  if (uav.waypoint_idx >= trajectory.waypoints.size()) {
    throw std::invalid_argument("waypoint index out of trajectory bounds");
  }
}

ArrivalOutcome step_arrivals(std::span<SensorState> sensors, std::mt19937_64& rng, PacketLedger& ledger) {
  ArrivalOutcome out;
  out.records.reserve(sensors.size());
  for (SensorState& s : sensors) {
    ArrivalRecord rec;
    rec.sensor_id = s.id;
    if (s.alive && s.arrival_rate > 0.0) {
      std::poisson_distribution<int> poisson(s.arrival_rate);
      rec.arrived = poisson(rng);
    }
    rec.demand = s.queue_len + rec.arrived;
    rec.overflow = std::max(0, rec.demand - s.queue_cap);
    s.queue_len = rec.demand - rec.overflow;
    ledger.generated += rec.arrived;
    ledger.lost_overflow += rec.overflow;
    if (rec.overflow > 0) {
      ++out.overflow_events;
      out.overflow_packets += rec.overflow;
    }
    out.records.push_back(rec);
  }
  return out;
}

ServeOutcome serve_sensor(SensorState& sensor, const UavState& uav, const LinkQuality& link,
                          const ChannelParams& params, const EnergyModel& energy, int step_budget,
                          PacketLedger& ledger) {
  if (!sensor.alive) throw std::logic_error("cannot serve a dead sensor");
  if (horizontal_distance(uav.position.xy(), sensor.position) > params.coverage_radius_m) {
    throw std::invalid_argument("sensor is outside the UAV coverage radius");
  }
  if (step_budget < 0) throw std::invalid_argument("step budget must be non-negative");

  ServeOutcome out;
  out.attempted = std::min(sensor.queue_len, step_budget);
  out.comm_failed = link.gain_db <= params.gain_threshold_db;
  sensor.queue_len -= out.attempted;
  if (out.comm_failed) {
    out.lost = out.attempted;
    ledger.lost_comm += out.attempted;
  } else {
    out.delivered = out.attempted;
    ledger.delivered += out.attempted;
  }
  sensor.battery_j = std::max(0.0, sensor.battery_j - out.attempted * energy.joules_per_packet());
  if (sensor.battery_j <= 0.0) sensor.alive = false;
  return out;
}

UavState advance_uav(const UavState& uav, const Trajectory& trajectory, double commanded_velocity, double dt) {
  if (!(commanded_velocity > 0.0)) throw std::invalid_argument("commanded velocity must be positive");
  if (commanded_velocity > uav.v_max) throw std::invalid_argument("commanded velocity exceeds v_max");
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  if (trajectory.waypoints.empty() || uav.waypoint_idx >= trajectory.waypoints.size()) {
    throw std::invalid_argument("waypoint index out of trajectory bounds");
  }

  UavState next = uav;
  next.velocity = commanded_velocity;

  if (next.hovering) {
    if (next.hover_count < trajectory.hover_steps || trajectory.waypoints.size() == 1) {
      next.hover_count = std::min(next.hover_count + 1, trajectory.hover_steps);
      return next;
    }
    next.hovering = false;
    next.hover_count = 0;
    next.waypoint_idx = trajectory.next_index(next.waypoint_idx);
  }

  const Vec3 target = trajectory.waypoints[next.waypoint_idx];
  const double remaining = distance(next.position, target);
  const double reach = commanded_velocity * dt;
  double moved = 0.0;
  if (reach >= remaining) {
    moved = remaining;
    next.position = target;
    next.hovering = true;
    next.hover_count = 1;
  } else {
    moved = reach;
    const double f = reach / remaining;
    next.position.x += f * (target.x - next.position.x);
    next.position.y += f * (target.y - next.position.y);
    next.position.z += f * (target.z - next.position.z);
  }
  next.distance_flown_m += moved;
  next.battery_j = std::max(0.0, next.battery_j - next.energy_per_m * moved);
  return next;
}

FeatureMatrix snapshot_features(std::span<const SensorState> sensors, Vec3 observer, const ChannelParams& params) {
  std::vector<const SensorState*> alive;
  for (const SensorState& s : sensors) {
    if (s.alive) alive.push_back(&s);
  }
  if (alive.empty()) throw std::invalid_argument("no alive sensors to build a feature matrix from");
  std::sort(alive.begin(), alive.end(), [](const SensorState* a, const SensorState* b) { return a->id < b->id; });

  FeatureMatrix fm;
  fm.values.resize(static_cast<Eigen::Index>(alive.size()), kFeatureDim);
  for (std::size_t i = 0; i < alive.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    fm.ids.push_back(alive[i]->id);
    fm.values(row, 0) = alive[i]->queue_len;
    fm.values(row, 1) = alive[i]->battery_j;
    fm.values(row, 2) = link_quality(observer, alive[i]->position, params).gain_db;
  }
  return fm;
}

FeatureMatrix snapshot_features(std::span<const SensorState> sensors, const UavState& uav,
                                const ChannelParams& params) {
  return snapshot_features(sensors, uav.position, params);
}

Trajectory circular_trajectory(Vec2 center, double radius_m, double altitude_m, int count, double phase_rad,
                               int hover_steps) {
  if (count < 1) throw std::invalid_argument("trajectory needs at least one waypoint");
  if (!(radius_m > 0.0) && count > 1) throw std::invalid_argument("circular trajectory radius must be positive");
  Trajectory t;
  t.hover_steps = hover_steps;
  t.waypoints.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double angle = phase_rad + 2.0 * std::numbers::pi * i / count;
    t.waypoints.push_back({center.x + radius_m * std::cos(angle), center.y + radius_m * std::sin(angle), altitude_m});
  }
  validate(t);
  return t;
}

UavState initial_uav_state(int id, const Trajectory& trajectory, double v_max, double battery_j,
                           double energy_per_m) {
  validate(trajectory);
  UavState u;
  u.id = id;
  u.position = trajectory.waypoints.front();
  u.velocity = v_max;
  u.v_max = v_max;
  u.battery_j = battery_j;
  u.energy_per_m = energy_per_m;
  u.waypoint_idx = 0;
  u.hovering = true;
  u.hover_count = 0;
  return u;
}

double distance_to_trajectory(Vec3 p, const Trajectory& trajectory) {
  const auto& w = trajectory.waypoints;
  if (w.size() == 1) return distance(p, w.front());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const Vec3 a = w[i];
    const Vec3 b = w[trajectory.next_index(i)];
    const double abx = b.x - a.x, aby = b.y - a.y, abz = b.z - a.z;
    const double len2 = abx * abx + aby * aby + abz * abz;
    double t = ((p.x - a.x) * abx + (p.y - a.y) * aby + (p.z - a.z) * abz) / len2;
    t = std::clamp(t, 0.0, 1.0);
    const Vec3 proj{a.x + t * abx, a.y + t * aby, a.z + t * abz};
    best = std::min(best, distance(p, proj));
  }
  return best;
}

}  // namespace uavsim
