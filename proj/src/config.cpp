#include "uavsim/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "uavsim/text.hpp"

namespace uavsim {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>, std::less<>> kKeys = {
    {"world",
     {"sensors", "uavs", "queue_capacity", "steps", "tx_power_mw", "battery_capacity_j", "packet_airtime_s", "area_m",
      "arrival_rate", "arrival_rates", "sensor_positions", "step_budget", "altitude_m", "trajectory_radius_m",
      "waypoints", "hover_steps", "v_max", "uav_battery_j", "uav_energy_per_m"}},
    {"channel",
     {"a", "b", "eta_los_db", "eta_nlos_db", "wavelength_m", "light_speed_mps", "coverage_radius_m",
      "gain_threshold_db"}},
    {"attention", {"k", "d_prime", "learning_rate", "online_update"}},
    {"policy", {"name", "buffer_capacity", "prompt_char_budget", "speed_floor_fraction"}},
    {"llm",
     {"backend", "base_url", "model", "timeout_s", "max_retries", "temperature", "backoff_initial_s",
      "backoff_factor", "max_response_chars", "token_env", "mock_latency_s"}},
    {"protocol", {"beacon_deadline", "receive_deadline"}},
    {"experiment", {"seed"}},
};

bool known_key(const std::string& section, const std::string& key) {
  const auto it = kKeys.find(section);
  if (it == kKeys.end()) return false;
  if (it->second.contains(key)) return true;
  // trajectory_<uav index> lists explicit waypoints
  return section == "world" && key.starts_with("trajectory_") && key.size() > 11;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  const std::string* raw(const std::string& section, const std::string& key) const {
    const auto sec = tree_.get_child_optional(pt::ptree::path_type(section, '\x1f'));
    if (!sec) return nullptr;
    const auto value = sec->get_child_optional(pt::ptree::path_type(key, '\x1f'));
    if (!value) return nullptr;
    return &value->data();
  }

  template <typename F>
  void with(const std::string& section, const std::string& key, F&& apply) const {
    const std::string* text = raw(section, key);
    if (text == nullptr) return;
    try {
      apply(std::string(trim(*text)));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    }
  }

  void get(const std::string& section, const std::string& key, double& out) const {
    with(section, key, [&](const std::string& v) { out = parse_double(v); });
  }
  void get(const std::string& section, const std::string& key, int& out) const {
    with(section, key, [&](const std::string& v) { out = checked_int(parse_int(v)); });
  }
  void get(const std::string& section, const std::string& key, std::size_t& out) const {
    with(section, key, [&](const std::string& v) {
      const long long n = parse_int(v);
      if (n < 0) throw std::invalid_argument("must be non-negative");
      out = static_cast<std::size_t>(n);
    });
  }
  void get(const std::string& section, const std::string& key, std::string& out) const {
    with(section, key, [&](const std::string& v) { out = v; });
  }
  void get(const std::string& section, const std::string& key, bool& out) const {
    with(section, key, [&](const std::string& v) {
      if (v == "true" || v == "1" || v == "yes") {
        out = true;
      } else if (v == "false" || v == "0" || v == "no") {
        out = false;
      } else {
        throw std::invalid_argument("expected true or false, got '" + v + "'");
      }
    });
  }

 private:
  static int checked_int(long long v) {
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      throw std::out_of_range("integer out of range");
    }
    return static_cast<int>(v);
  }

  const pt::ptree& tree_;
};

std::vector<double> parse_number_list(std::string_view text) {
  std::vector<double> out;
  for (std::string_view item : split(text, ',')) out.push_back(parse_double(trim(item)));
  return out;
}

// "x:y,x:y,..." or "x:y:z,..."
template <typename Point>
std::vector<Point> parse_points(std::string_view text) {
  constexpr std::size_t dims = std::is_same_v<Point, Vec3> ? 3 : 2;
  std::vector<Point> out;
  for (std::string_view item : split(text, ',')) {
    const auto parts = split(trim(item), ':');
    if (parts.size() != dims) {
      throw std::invalid_argument("point '" + std::string(trim(item)) + "' needs " + std::to_string(dims) +
                                  " coordinates separated by ':'");
    }
    Point p;
    p.x = parse_double(trim(parts[0]));
    p.y = parse_double(trim(parts[1]));
    if constexpr (dims == 3) p.z = parse_double(trim(parts[2]));
    out.push_back(p);
  }
  return out;
}

void apply_override(pt::ptree& tree, const std::string& item) {
  const auto eq = item.find('=');
  const auto dot = item.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override must look like section.key=value: '" + item + "'");
  }
  const std::string section(trim(std::string_view(item).substr(0, dot)));
  const std::string key(trim(std::string_view(item).substr(dot + 1, eq - dot - 1)));
  const std::string value(trim(std::string_view(item).substr(eq + 1)));
  if (!known_key(section, key)) throw ConfigError("unknown config key in override: " + section + "." + key);
  auto sec = tree.get_child_optional(pt::ptree::path_type(section, '\x1f'));
  if (!sec) {
    tree.push_back({section, pt::ptree()});
    sec = tree.get_child_optional(pt::ptree::path_type(section, '\x1f'));
  }
  sec->put(pt::ptree::path_type(key, '\x1f'), value);
}

SimConfig from_tree(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    if (!kKeys.contains(section)) {
      if (body.empty() && !body.data().empty()) throw ConfigError("key outside any section: " + section);
      throw ConfigError("unknown config section: [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!known_key(section, key)) throw ConfigError("unknown config key: " + section + "." + key);
    }
  }

  const Reader r(tree);
  SimConfig cfg;
  WorldConfig& w = cfg.world;
  r.get("world", "sensors", w.sensors);
  r.get("world", "uavs", w.uavs);
  r.get("world", "queue_capacity", w.queue_capacity);
  r.get("world", "steps", w.steps);
  r.get("world", "tx_power_mw", w.tx_power_mw);
  r.get("world", "battery_capacity_j", w.battery_capacity_j);
  r.get("world", "packet_airtime_s", w.packet_airtime_s);
  r.get("world", "area_m", w.area_m);
  r.get("world", "arrival_rate", w.arrival_rate);
  r.with("world", "arrival_rates", [&](const std::string& v) { w.arrival_rates = parse_number_list(v); });
  r.with("world", "sensor_positions", [&](const std::string& v) { w.sensor_positions = parse_points<Vec2>(v); });
  r.get("world", "step_budget", w.step_budget);
  r.get("world", "altitude_m", w.altitude_m);
  r.get("world", "trajectory_radius_m", w.trajectory_radius_m);
  r.get("world", "waypoints", w.waypoints);
  r.get("world", "hover_steps", w.hover_steps);
  r.get("world", "v_max", w.v_max);
  r.get("world", "uav_battery_j", w.uav_battery_j);
  r.get("world", "uav_energy_per_m", w.uav_energy_per_m);

  // Explicit loops: trajectory_0 .. trajectory_{uavs-1}, all or none.
  int explicit_loops = 0;
  if (const auto sec = tree.get_child_optional("world")) {
    for (const auto& [key, value] : *sec) {
      if (key.starts_with("trajectory_") && key != "trajectory_radius_m") ++explicit_loops;
    }
  }
  if (explicit_loops > 0) {
    if (explicit_loops != w.uavs) throw ConfigError("world.trajectory_<i> must be given for every UAV");
    for (int i = 0; i < w.uavs; ++i) {
      const std::string key = "trajectory_" + std::to_string(i);
      if (r.raw("world", key) == nullptr) throw ConfigError("missing world." + key);
      Trajectory t;
      t.hover_steps = w.hover_steps;
      r.with("world", key, [&](const std::string& v) { t.waypoints = parse_points<Vec3>(v); });
      w.trajectories.push_back(std::move(t));
    }
  }

  ChannelParams& c = cfg.channel;
  r.get("channel", "a", c.a);
  r.get("channel", "b", c.b);
  r.get("channel", "eta_los_db", c.eta_los_db);
  r.get("channel", "eta_nlos_db", c.eta_nlos_db);
  r.get("channel", "wavelength_m", c.wavelength_m);
  r.get("channel", "light_speed_mps", c.light_speed_mps);
  r.get("channel", "coverage_radius_m", c.coverage_radius_m);
  r.with("channel", "gain_threshold_db", [&](const std::string& v) {
    cfg.gain_threshold_auto = v == "auto";
    if (!cfg.gain_threshold_auto) c.gain_threshold_db = parse_double(v);
  });

  r.get("attention", "k", cfg.attention.k);
  r.get("attention", "d_prime", cfg.attention.d_prime);
  r.get("attention", "learning_rate", cfg.attention.learning_rate);
  r.get("attention", "online_update", cfg.attention.online_update);

  r.get("policy", "name", cfg.policy.name);
  r.get("policy", "buffer_capacity", cfg.policy.buffer_capacity);
  r.get("policy", "prompt_char_budget", cfg.policy.prompt_char_budget);
  r.get("policy", "speed_floor_fraction", cfg.policy.speed_floor_fraction);

  EndpointConfig& e = cfg.llm.endpoint;
  r.get("llm", "backend", cfg.llm.backend);
  r.get("llm", "base_url", e.base_url);
  r.get("llm", "model", e.model_name);
  r.get("llm", "timeout_s", e.timeout_s);
  r.get("llm", "max_retries", e.max_retries);
  r.get("llm", "temperature", e.temperature);
  r.get("llm", "backoff_initial_s", e.backoff_initial_s);
  r.get("llm", "backoff_factor", e.backoff_factor);
  r.get("llm", "max_response_chars", e.max_response_chars);
  r.get("llm", "token_env", e.token_env);
  r.get("llm", "mock_latency_s", cfg.llm.mock_latency_s);

  r.get("protocol", "beacon_deadline", cfg.protocol.beacon_deadline);
  r.get("protocol", "receive_deadline", cfg.protocol.receive_deadline);

  r.with("experiment", "seed", [&](const std::string& v) {
    const long long s = parse_int(v);
    if (s < 0) throw std::invalid_argument("seed must be non-negative");
    cfg.seed = static_cast<std::uint64_t>(s);
  });

  validate(cfg);
  return cfg;
}

}  // namespace

SimConfig parse_config(std::string_view ini_text, std::span<const std::string> overrides) {
  pt::ptree tree;
  std::istringstream in{std::string(ini_text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  for (const std::string& item : overrides) apply_override(tree, item);
  return from_tree(tree);
}

SimConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  if (in.bad()) throw IoError("error reading config file: " + path.string());
  return parse_config(text.str(), overrides);
}

}  // namespace uavsim
