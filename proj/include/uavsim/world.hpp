#pragma once

// Sensor queue / battery dynamics and UAV kinematics along waypoint loops.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "uavsim/channel.hpp"
#include "uavsim/features.hpp"
#include "uavsim/types.hpp"

namespace uavsim {

/// Packet accounting for one episode. Conserved quantity:
///   generated == delivered + lost_overflow + lost_comm + sum(queue_len)
struct PacketLedger {
  std::int64_t generated = 0;
  std::int64_t delivered = 0;
  std::int64_t lost_overflow = 0;
  std::int64_t lost_comm = 0;

  std::int64_t lost() const { return lost_overflow + lost_comm; }
  bool balances(std::span<const SensorState> sensors) const;

  friend bool operator==(const PacketLedger&, const PacketLedger&) = default;
};

struct EnergyModel {
  double tx_power_mw = 100.0;
  double packet_airtime_s = 0.1;

  double joules_per_packet() const { return tx_power_mw * 1e-3 * packet_airtime_s; }
};

void validate(const SensorState& sensor);
void validate(const UavState& uav, const Trajectory& trajectory);
void validate(const Trajectory& trajectory);

struct ArrivalRecord {
  int sensor_id = 0;
  int arrived = 0;
  int demand = 0;  // queue length before the capacity cut, q_j(t)
  int overflow = 0;
};

struct ArrivalOutcome {
  int overflow_events = 0;  // sensors that dropped at least one packet
  std::int64_t overflow_packets = 0;
  std::vector<ArrivalRecord> records;  // same order as the input sensors
};

/// Each alive sensor receives Poisson(arrival_rate) packets; anything above
/// queue_cap is dropped into ledger.lost_overflow. Dead sensors receive nothing
/// and consume no random draws.
ArrivalOutcome step_arrivals(std::span<SensorState> sensors, std::mt19937_64& rng, PacketLedger& ledger);

struct ServeOutcome {
  int attempted = 0;
  int delivered = 0;
  int lost = 0;
  bool comm_failed = false;
};

/// One contact: up to step_budget queued packets are transmitted. When the link
/// gain is at or below the threshold the whole batch is lost to communication
/// failure; otherwise it is delivered. Every transmitted packet drains the
/// battery, which clamps at zero and kills the sensor.
///
/// Throws std::logic_error for a dead sensor and std::invalid_argument when the
/// UAV is outside the coverage radius.
ServeOutcome serve_sensor(SensorState& sensor, const UavState& uav, const LinkQuality& link,
                          const ChannelParams& params, const EnergyModel& energy, int step_budget,
                          PacketLedger& ledger);

/// Moves the UAV for one step of length dt. A hovering UAV departs once it has
/// hovered hover_steps steps; a moving UAV advances commanded_velocity * dt along
/// the current segment without overshooting, and starts hovering on arrival
/// (the arrival step counts as its first hover step).
///
/// Throws std::invalid_argument unless 0 < commanded_velocity <= v_max.
UavState advance_uav(const UavState& uav, const Trajectory& trajectory, double commanded_velocity,
                     double dt = 1.0);

/// Rows [queue_len, battery_j, gain_db] for every alive sensor, ascending id.
/// The gain is evaluated from `observer` (normally the UAV position).
/// Throws std::invalid_argument when no sensor is alive.
FeatureMatrix snapshot_features(std::span<const SensorState> sensors, Vec3 observer,
                                const ChannelParams& params);
FeatureMatrix snapshot_features(std::span<const SensorState> sensors, const UavState& uav,
                                const ChannelParams& params);

/// Circular loop of `count` waypoints around `center`, starting at angle `phase_rad`.
Trajectory circular_trajectory(Vec2 center, double radius_m, double altitude_m, int count,
                               double phase_rad, int hover_steps);

/// UAV parked on the first waypoint, about to hover there.
UavState initial_uav_state(int id, const Trajectory& trajectory, double v_max, double battery_j,
                           double energy_per_m);

/// Distance from `p` to the closed polyline through the trajectory waypoints.
double distance_to_trajectory(Vec3 p, const Trajectory& trajectory);

}  // namespace uavsim
