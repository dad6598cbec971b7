#include "uavsim/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "uavsim/text.hpp"

namespace uavsim {

namespace {

constexpr std::string_view kTaskHeader = "## TASK";
constexpr std::string_view kRulesHeader = "## RULES";
constexpr std::string_view kFormatHeader = "## OUTPUT FORMAT";
constexpr std::string_view kExamplesHeader = "## EXAMPLES";
constexpr std::string_view kObservationHeader = "## OBSERVATION";
constexpr std::string_view kResponseHeader = "## RESPONSE";

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out = split(text, '\n');
  for (auto& l : out) l = trim(l);
  return out;
}

/// "k1=v1 k2=v2 ..." with keys in exactly the given order.
std::vector<std::string_view> keyed_fields(std::string_view text, std::initializer_list<std::string_view> keys) {
  std::vector<std::string_view> tokens;
  for (std::string_view tok : split(trim(text), ' ')) {
    if (!tok.empty()) tokens.push_back(tok);
  }
  if (tokens.size() != keys.size()) throw std::invalid_argument("unexpected field count in '" + std::string(text) + "'");
  std::vector<std::string_view> values;
  auto key = keys.begin();
  for (std::string_view tok : tokens) {
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos || tok.substr(0, eq) != *key) {
      throw std::invalid_argument("expected field '" + std::string(*key) + "' in '" + std::string(text) + "'");
    }
    values.push_back(tok.substr(eq + 1));
    ++key;
  }
  return values;
}

int to_int(std::string_view s) {
  const long long v = parse_int(s);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw std::invalid_argument("integer out of range");
  }
  return static_cast<int>(v);
}

/// Text between `header` (last occurrence when `last` is set) and the next "## " header.
std::string_view section(std::string_view prompt, std::string_view header, bool last) {
  std::size_t pos = std::string_view::npos;
  std::size_t from = 0;
  while (true) {
    const auto hit = prompt.find(header, from);
    if (hit == std::string_view::npos) break;
    const bool line_start = hit == 0 || prompt[hit - 1] == '\n';
    const auto end = hit + header.size();
    const bool line_end = end == prompt.size() || prompt[end] == '\n';
    if (line_start && line_end) {
      pos = hit;
      if (!last) break;
    }
    from = hit + 1;
  }
  if (pos == std::string_view::npos) throw std::invalid_argument("prompt has no '" + std::string(header) + "' section");
  std::string_view rest = prompt.substr(pos + header.size());
  const auto next = rest.find("\n## ");
  return next == std::string_view::npos ? rest : rest.substr(0, next + 1);
}

void check_velocity(const UavView& uav, double velocity) {
  if (!(velocity > 0.0 && velocity <= uav.v_max)) {
    throw DecisionError(DecisionErrorKind::VelocityOutOfBounds,
                        "velocity " + format_double(velocity) + " outside (0, " + format_double(uav.v_max) + "]");
  }
}

const UavView* find_uav(const Observation& obs, int id) {
  for (const auto& u : obs.uavs) {
    if (u.id == id) return &u;
  }
  return nullptr;
}

bool sensor_known(const Observation& obs, int id) {
  return std::any_of(obs.sensors.begin(), obs.sensors.end(), [&](const SensorView& s) { return s.id == id; }) ||
         std::find(obs.claimed.begin(), obs.claimed.end(), id) != obs.claimed.end();
}

std::vector<const SensorView*> candidates(const Observation& obs) {
  std::vector<const SensorView*> out;
  for (const SensorView& s : obs.sensors) {
    if (std::find(obs.claimed.begin(), obs.claimed.end(), s.id) == obs.claimed.end()) out.push_back(&s);
  }
  if (out.empty()) throw NoEligibleSensor("observation offers no unclaimed sensor");
  return out;
}

const SensorView* max_gain(const std::vector<const SensorView*>& pool) {
  const SensorView* best = nullptr;
  for (const SensorView* s : pool) {
    if (!best || s->gain_db > best->gain_db || (s->gain_db == best->gain_db && s->id < best->id)) best = s;
  }
  return best;
}

}  // namespace

TaskDescription make_task_description(const PolicyRules& rules) {
  TaskDescription td;
  td.objective_text =
      "You schedule data collection for a fleet of UAVs flying fixed waypoint loops over ground sensors.\n"
      "Each query decides for one UAV: which sensor it collects from when it reaches its next waypoint,\n"
      "and how fast it flies there. Minimize total packet loss across all sensors. Packets are lost when\n"
      "a sensor queue overflows before it is served, and when a scheduled transmission runs over a link\n"
      "whose gain does not exceed the gain threshold.\n"
      "Past decisions and the packet loss that followed them are listed as examples.\n";
  std::ostringstream r;
  r << "queue_capacity: " << rules.queue_capacity << '\n'
    << "gain_threshold_db: " << format_double(rules.gain_threshold_db) << '\n'
    << "speed_floor_fraction: " << format_double(rules.speed_floor_fraction) << '\n'
    << "- Pick exactly one sensor from the observation; sensors listed under claimed are already taken.\n"
    << "- A transmission with gain_db at or below gain_threshold_db fails and loses the whole batch.\n"
    << "- velocity must satisfy 0 < velocity <= v_max of the deciding UAV.\n"
    << "- Sensors close to queue_capacity overflow first; sensors with low battery die when drained.\n";
  td.rules_text = r.str();
  td.output_schema_text =
      "Answer with exactly one block and nothing inside it except decision lines:\n"
      "DECISIONS\n"
      "uav=<deciding uav id> sensor=<sensor id> velocity=<meters per second>\n"
      "END\n";
  return td;
}

const UavView& Observation::deciding() const {
  const UavView* u = find_uav(*this, deciding_uav);
  if (!u) throw std::invalid_argument("observation does not list the deciding UAV");
  return *u;
}

const UavAction* Decision::for_uav(int uav_id) const {
  for (const auto& a : actions) {
    if (a.uav_id == uav_id) return &a;
  }
  return nullptr;
}

ExampleBuffer::ExampleBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("example buffer capacity must be positive");
}

void ExampleBuffer::push(Demonstration demo) {
  if (demo.input_x.empty() || demo.output_y.empty()) {
    throw std::invalid_argument("demonstration fields must be non-empty");
  }
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(demo));
}

std::string serialize_observation(const Observation& obs) {
  std::ostringstream out;
  out << "step: " << obs.step << '\n' << "deciding_uav: " << obs.deciding_uav << '\n';
  for (const UavView& u : obs.uavs) {
    out << "uav: id=" << u.id << " x=" << format_double(u.position.x) << " y=" << format_double(u.position.y)
        << " h=" << format_double(u.position.z) << " waypoint=" << u.waypoint_idx
        << " v_max=" << format_double(u.v_max) << '\n';
  }
  out << "claimed: ";
  if (obs.claimed.empty()) {
    out << "none";
  } else {
    for (std::size_t i = 0; i < obs.claimed.size(); ++i) out << (i ? "," : "") << obs.claimed[i];
  }
  out << '\n';
  for (const SensorView& s : obs.sensors) {
    out << "sensor: id=" << s.id << " queue=" << s.queue_len << " battery=" << format_double(s.battery_j)
        << " gain_db=" << format_double(s.gain_db) << '\n';
  }
  return out.str();
}

Observation parse_observation(std::string_view text) {
  Observation obs;
  bool saw_step = false, saw_deciding = false;
  for (std::string_view line : lines_of(text)) {
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw std::invalid_argument("observation line without key: " + std::string(line));
    const std::string_view key = line.substr(0, colon);
    const std::string_view value = trim(line.substr(colon + 1));
    if (key == "step") {
      obs.step = to_int(value);
      saw_step = true;
    } else if (key == "deciding_uav") {
      obs.deciding_uav = to_int(value);
      saw_deciding = true;
    } else if (key == "uav") {
      const auto f = keyed_fields(value, {"id", "x", "y", "h", "waypoint", "v_max"});
      UavView u;
      u.id = to_int(f[0]);
      u.position = {parse_double(f[1]), parse_double(f[2]), parse_double(f[3])};
      u.waypoint_idx = static_cast<std::size_t>(parse_int(f[4]));
      u.v_max = parse_double(f[5]);
      obs.uavs.push_back(u);
    } else if (key == "claimed") {
      if (value != "none") {
        for (std::string_view id : split(value, ',')) obs.claimed.push_back(to_int(id));
      }
    } else if (key == "sensor") {
      const auto f = keyed_fields(value, {"id", "queue", "battery", "gain_db"});
      obs.sensors.push_back({to_int(f[0]), to_int(f[1]), parse_double(f[2]), parse_double(f[3])});
    } else {
      throw std::invalid_argument("unknown observation key: " + std::string(key));
    }
  }
  if (!saw_step || !saw_deciding) throw std::invalid_argument("observation lacks step or deciding_uav");
  return obs;
}

std::string serialize_decision(const Decision& decision) {
  std::ostringstream out;
  out << "DECISIONS\n";
  for (const UavAction& a : decision.actions) {
    out << "uav=" << a.uav_id << " sensor=" << a.sensor_id << " velocity=" << format_double(a.velocity) << '\n';
  }
  out << "END\n";
  return out.str();
}

PolicyRules parse_rules(std::string_view prompt) {
  PolicyRules rules;
  bool cap = false, th = false, floor = false;
  for (std::string_view line : lines_of(section(prompt, kRulesHeader, false))) {
    const auto colon = line.find(':');
    if (line.empty() || line.front() == '-' || colon == std::string_view::npos) continue;
    const std::string_view key = line.substr(0, colon);
    const std::string_view value = line.substr(colon + 1);
    if (key == "queue_capacity") {
      rules.queue_capacity = to_int(value);
      cap = true;
    } else if (key == "gain_threshold_db") {
      rules.gain_threshold_db = parse_double(value);
      th = true;
    } else if (key == "speed_floor_fraction") {
      rules.speed_floor_fraction = parse_double(value);
      floor = true;
    }
  }
  if (!cap || !th || !floor) throw std::invalid_argument("rules section is incomplete");
  return rules;
}

Observation extract_observation(std::string_view prompt) {
  return parse_observation(section(prompt, kObservationHeader, true));
}

PromptResult build_prompt(const TaskDescription& td, const ExampleBuffer& buffer, const Observation& obs,
                          std::span<const int> pruned_ids, std::size_t char_budget) {
  if (obs.uavs.empty()) throw std::invalid_argument("build_prompt: observation has no UAVs");
  PromptResult result;

  Observation shown = obs;
  if (pruned_ids.empty()) {
    result.pruning_fallback = true;
  } else {
    const std::set<int> keep(pruned_ids.begin(), pruned_ids.end());
    for (int id : keep) {
      if (std::none_of(obs.sensors.begin(), obs.sensors.end(), [&](const SensorView& s) { return s.id == id; })) {
        throw std::invalid_argument("build_prompt: pruned id " + std::to_string(id) + " is not in the observation");
      }
    }
    std::erase_if(shown.sensors, [&](const SensorView& s) { return !keep.contains(s.id); });
  }

  std::ostringstream head;
  head << kTaskHeader << '\n'
       << td.objective_text << kRulesHeader << '\n'
       << td.rules_text << kFormatHeader << '\n'
       << td.output_schema_text;
  std::ostringstream tail;
  tail << kObservationHeader << '\n' << serialize_observation(shown) << kResponseHeader << '\n';

  std::vector<std::string> demos;
  std::size_t index = 0;
  for (const Demonstration& d : buffer.entries()) {
    std::ostringstream e;
    e << "### example " << ++index << '\n' << "input:\n" << d.input_x << "output:\n" << d.output_y;
    demos.push_back(e.str());
  }

  const std::string head_text = head.str();
  const std::string tail_text = tail.str();
  std::size_t first = 0;
  auto total = [&](std::size_t from) {
    std::size_t n = head_text.size() + tail_text.size();
    if (from < demos.size()) {
      n += kExamplesHeader.size() + 1;
      for (std::size_t i = from; i < demos.size(); ++i) n += demos[i].size();
    }
    return n;
  };
  if (char_budget > 0) {
    while (first < demos.size() && total(first) > char_budget) ++first;
  }

  std::string text = head_text;
  if (first < demos.size()) {
    text += kExamplesHeader;
    text += '\n';
    for (std::size_t i = first; i < demos.size(); ++i) text += demos[i];
  }
  text += tail_text;

  result.text = std::move(text);
  result.demos_included = demos.size() - first;
  result.demos_dropped = first;
  return result;
}

void validate_decision(const Decision& decision, const Observation& obs) {
  std::set<int> seen;
  for (const UavAction& a : decision.actions) {
    const UavView* u = find_uav(obs, a.uav_id);
    if (!u) throw DecisionError(DecisionErrorKind::UnknownUav, "unknown uav id " + std::to_string(a.uav_id));
    if (!seen.insert(a.uav_id).second) {
      throw DecisionError(DecisionErrorKind::Malformed, "duplicate line for uav " + std::to_string(a.uav_id));
    }
    if (!sensor_known(obs, a.sensor_id)) {
      throw DecisionError(DecisionErrorKind::UnknownSensor, "unknown sensor id " + std::to_string(a.sensor_id));
    }
    check_velocity(*u, a.velocity);
  }
  if (!seen.contains(obs.deciding_uav)) {
    throw DecisionError(DecisionErrorKind::Malformed,
                        "no decision line for deciding uav " + std::to_string(obs.deciding_uav));
  }
}

Decision parse_decision(std::string_view response, const Observation& obs) {
  const auto lines = lines_of(response);
  auto begin = std::find(lines.begin(), lines.end(), std::string_view("DECISIONS"));
  if (begin == lines.end()) throw DecisionError(DecisionErrorKind::Malformed, "response has no DECISIONS block");
  auto end = std::find(begin + 1, lines.end(), std::string_view("END"));
  if (end == lines.end()) throw DecisionError(DecisionErrorKind::Malformed, "DECISIONS block is not terminated");

  Decision d;
  for (auto it = begin + 1; it != end; ++it) {
    if (it->empty()) continue;
    try {
      const auto f = keyed_fields(*it, {"uav", "sensor", "velocity"});
      UavAction a{to_int(f[0]), to_int(f[1]), parse_double(f[2])};
      if (!std::isfinite(a.velocity)) throw std::invalid_argument("velocity is not finite");
      d.actions.push_back(a);
    } catch (const std::invalid_argument& e) {
      throw DecisionError(DecisionErrorKind::Malformed, std::string("bad decision line: ") + e.what());
    }
  }
  validate_decision(d, obs);
  return d;
}

Decision max_channel_gain_policy(const Observation& obs) {
  const UavView& u = obs.deciding();
  const SensorView* best = max_gain(candidates(obs));
  return Decision{{UavAction{u.id, best->id, u.v_max}}};
}

Decision greedy_queue_aware_policy(const Observation& obs, const PolicyRules& rules) {
  if (rules.queue_capacity <= 0) throw std::invalid_argument("greedy policy: queue capacity must be positive");
  if (!(rules.speed_floor_fraction > 0.0 && rules.speed_floor_fraction <= 1.0)) {
    throw std::invalid_argument("greedy policy: speed floor fraction must lie in (0, 1]");
  }
  const UavView& u = obs.deciding();
  const auto pool = candidates(obs);

  const double cap = rules.queue_capacity;
  const SensorView* best = nullptr;
  for (const SensorView* s : pool) {
    if (!(s->gain_db > rules.gain_threshold_db)) continue;
    if (!best) {
      best = s;
      continue;
    }
    const double us = s->queue_len / cap;
    const double ub = best->queue_len / cap;
    if (us > ub || (us == ub && (s->gain_db > best->gain_db || (s->gain_db == best->gain_db && s->id < best->id)))) {
      best = s;
    }
  }
  if (!best) best = max_gain(pool);

  double fill = 0.0;
  for (const SensorView* s : pool) fill += std::min(1.0, s->queue_len / cap);
  fill /= static_cast<double>(pool.size());
  const double floor = rules.speed_floor_fraction;
  const double velocity = std::clamp(u.v_max * (floor + (1.0 - floor) * fill), u.v_max * floor, u.v_max);
  return Decision{{UavAction{u.id, best->id, velocity}}};
}

Decision random_policy(const Observation& obs, std::mt19937_64& rng) {
  const UavView& u = obs.deciding();
  const auto pool = candidates(obs);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const SensorView* s = pool[pick(rng)];
  const double velocity = u.v_max * (1.0 - unit(rng));  // (0, v_max]
  return Decision{{UavAction{u.id, s->id, velocity}}};
}

void record_feedback(ExampleBuffer& buffer, const Observation& obs, const Decision& decision, double realized_loss) {
  validate_decision(decision, obs);
  Demonstration demo;
  demo.input_x = serialize_observation(obs);
  demo.output_y = serialize_decision(decision) + "realized_loss: " + format_double(realized_loss) + '\n';
  buffer.push(std::move(demo));
}

EvalScore evaluate_policy(std::span<const double> episode_losses, std::string metric_name) {
  if (episode_losses.empty()) throw std::invalid_argument("evaluate_policy needs at least one episode");
  EvalScore s;
  s.metric_name = std::move(metric_name);
  s.per_episode.assign(episode_losses.begin(), episode_losses.end());
  const double n = static_cast<double>(episode_losses.size());
  s.mean_score = std::accumulate(episode_losses.begin(), episode_losses.end(), 0.0) / n;
  const auto [lo, hi] = std::minmax_element(episode_losses.begin(), episode_losses.end());
  s.min_score = *lo;
  s.max_score = *hi;
  if (episode_losses.size() > 1) {
    double ss = 0.0;
    for (double v : episode_losses) ss += (v - s.mean_score) * (v - s.mean_score);
    s.std_score = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

}  // namespace uavsim
