#pragma once

// Air-to-ground channel: elevation angle, logistic LoS probability and the
// mean path loss expression built on top of them.
//
// All angles are in DEGREES, including inside the LoS logistic where the
// elevation is offset by the environment constant `a`. The constants a and b
// are fitted for degree-valued angles; feeding radians silently produces a
// near-constant LoS probability.

#include <span>

#include "uavsim/types.hpp"

namespace uavsim {

struct ChannelParams {
  double a = 9.61;
  double b = 0.16;
  double eta_los_db = 1.0;
  double eta_nlos_db = 20.0;
  double wavelength_m = 0.125;
  double light_speed_mps = 3.0e8;
  double coverage_radius_m = 150.0;
  double gain_threshold_db = 0.0;
};

/// Throws std::invalid_argument when an invariant of ChannelParams is violated.
void validate(const ChannelParams& params);

struct LinkQuality {
  double elevation_deg = 0.0;
  double los_prob = 0.0;
  double path_loss_db = 0.0;
  double gain_db = 0.0;  // always -path_loss_db

  friend bool operator==(const LinkQuality&, const LinkQuality&) = default;
};

/// arctan(h / d) in degrees, d the horizontal distance. Exactly 90 when d == 0.
double elevation_angle_deg(double uav_altitude_m, Vec2 uav_xy, Vec2 sensor_xy);

/// 1 / (1 + a exp(-b (phi - a))), phi in degrees.
double los_probability(double elevation_deg, const ChannelParams& params);

/// Mean path loss in dB:
///   P_LoS(phi) (eta_LoS - eta_NLoS) + 20 log10(r sec phi) + 20 log10(lambda)
///     + 20 log10(4 pi / v_c) + eta_NLoS
/// r sec(phi) is used as the slant-range proxy, with r the coverage radius.
/// Throws std::domain_error at phi = 90 where sec(phi) is singular.
double path_loss_db(double elevation_deg, const ChannelParams& params);

LinkQuality link_quality(Vec3 uav_position, Vec2 sensor_xy, const ChannelParams& params);
LinkQuality link_quality(const UavState& uav, const SensorState& sensor, const ChannelParams& params);

/// Median link gain over every (UAV point, sensor) pair; links that are
/// undefined (sensor directly below a point) are skipped. Used when the
/// configured gain threshold is "auto".
double calibrate_gain_threshold(std::span<const Vec3> uav_points, std::span<const Vec2> sensor_points,
                                const ChannelParams& params);

}  // namespace uavsim
