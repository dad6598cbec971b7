#include "uavsim/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace uavsim {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_elevation(double elevation_deg) {
  if (!(elevation_deg >= 0.0 && elevation_deg <= 90.0)) {
    throw std::invalid_argument("elevation angle must lie in [0, 90] degrees");
  }
}

}  // namespace

void validate(const ChannelParams& params) {
  if (!(params.a > 0.0)) throw std::invalid_argument("channel: a must be positive");
  if (!(params.b > 0.0)) throw std::invalid_argument("channel: b must be positive");
  if (!(params.eta_nlos_db >= params.eta_los_db)) {
    throw std::invalid_argument("channel: eta_nlos must be >= eta_los");
  }
  if (!(params.wavelength_m > 0.0)) throw std::invalid_argument("channel: wavelength must be positive");
  if (!(params.light_speed_mps > 0.0)) throw std::invalid_argument("channel: light speed must be positive");
  if (!(params.coverage_radius_m > 0.0)) {
    throw std::invalid_argument("channel: coverage radius must be positive");
  }
  if (!std::isfinite(params.gain_threshold_db)) {
    throw std::invalid_argument("channel: gain threshold must be finite");
  }
}

double elevation_angle_deg(double uav_altitude_m, Vec2 uav_xy, Vec2 sensor_xy) {
  if (!(uav_altitude_m > 0.0)) throw std::invalid_argument("UAV altitude must be positive");
  const double d = horizontal_distance(uav_xy, sensor_xy);
  if (d == 0.0) return 90.0;
  return std::atan(uav_altitude_m / d) * kRadToDeg;
}

double los_probability(double elevation_deg, const ChannelParams& params) {
  check_elevation(elevation_deg);
  return 1.0 / (1.0 + params.a * std::exp(-params.b * (elevation_deg - params.a)));
}

double path_loss_db(double elevation_deg, const ChannelParams& params) {
  check_elevation(elevation_deg);
  if (elevation_deg == 90.0) throw std::domain_error("path loss undefined at 90 degrees elevation");
  const double sec_phi = 1.0 / std::cos(elevation_deg * kDegToRad);
  const double los_term = los_probability(elevation_deg, params) * (params.eta_los_db - params.eta_nlos_db);
  return los_term + 20.0 * std::log10(params.coverage_radius_m * sec_phi) +
         20.0 * std::log10(params.wavelength_m) +
         20.0 * std::log10(4.0 * std::numbers::pi / params.light_speed_mps) + params.eta_nlos_db;
}

LinkQuality link_quality(Vec3 uav_position, Vec2 sensor_xy, const ChannelParams& params) {
  LinkQuality link;
  link.elevation_deg = elevation_angle_deg(uav_position.z, uav_position.xy(), sensor_xy);
  link.los_prob = los_probability(link.elevation_deg, params);
  link.path_loss_db = path_loss_db(link.elevation_deg, params);
  link.gain_db = -link.path_loss_db;
  return link;
}

LinkQuality link_quality(const UavState& uav, const SensorState& sensor, const ChannelParams& params) {
  return link_quality(uav.position, sensor.position, params);
}

double calibrate_gain_threshold(std::span<const Vec3> uav_points, std::span<const Vec2> sensor_points,
                                const ChannelParams& params) {
  std::vector<double> gains;
  gains.reserve(uav_points.size() * sensor_points.size());
  for (const Vec3& p : uav_points) {
    for (const Vec2& s : sensor_points) {
      if (horizontal_distance(p.xy(), s) == 0.0) continue;
      gains.push_back(link_quality(p, s, params).gain_db);
    }
  }
  if (gains.empty()) throw std::invalid_argument("gain calibration needs at least one valid link");
  std::sort(gains.begin(), gains.end());
  const std::size_t n = gains.size();
  return n % 2 == 1 ? gains[n / 2] : 0.5 * (gains[n / 2 - 1] + gains[n / 2]);
}

}  // namespace uavsim
