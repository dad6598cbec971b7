#include "uavsim/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <set>
#include <thread>

namespace uavsim {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

Observation observe(int step, const UavState& uav, Vec3 point, std::span<const UavState> uavs,
                    std::span<const SensorState> sensors, const std::vector<int>& claimed,
                    const ChannelParams& channel) {
  Observation obs;
  obs.step = step;
  obs.deciding_uav = uav.id;
  for (const UavState& u : uavs) obs.uavs.push_back({u.id, u.position, u.waypoint_idx, u.v_max});
  obs.claimed = claimed;
  for (const SensorState& s : sensors) {
    if (!s.alive) continue;
    if (std::binary_search(claimed.begin(), claimed.end(), s.id)) continue;
    const double d = horizontal_distance(point.xy(), s.position);
    // Directly underneath, the link expression is undefined; such a sensor is not offered.
    if (d > channel.coverage_radius_m || d == 0.0) continue;
    obs.sensors.push_back({s.id, s.queue_len, s.battery_j, link_quality(point, s.position, channel).gain_db});
  }
  return obs;
}

FeatureMatrix observation_features(const Observation& obs) {
  FeatureMatrix fm;
  fm.values.resize(static_cast<Eigen::Index>(obs.sensors.size()), kFeatureDim);
  for (std::size_t i = 0; i < obs.sensors.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const SensorView& s = obs.sensors[i];
    fm.ids.push_back(s.id);
    fm.values(row, 0) = s.queue_len;
    fm.values(row, 1) = s.battery_j;
    fm.values(row, 2) = s.gain_db;
  }
  return fm;
}

std::string_view source_name(ChoiceSource s) { return s == ChoiceSource::Fallback ? "fallback" : "policy"; }

struct PendingContact {
  ContactState contact;
  Vec3 point;
  double velocity = 0.0;
  bool decided = false;
  Observation shown;
  Decision decision;
  FeatureMatrix features;  // rows offered to attention, empty when unused
  DecisionRecord record;
};

void step_protocol(PendingContact& p, EventKind kind, const ProtocolConfig& cfg, ProtocolCounters& counters,
                   int sensor_id = -1) {
  p.contact = advance(p.contact, Event{kind, sensor_id}, cfg, counters);
  p.record.phase_path += '>';
  p.record.phase_path += to_string(p.contact.phase);
}

void expire(PendingContact& p, const ProtocolConfig& cfg, ProtocolCounters& counters) {
  while (p.contact.phase != Phase::Idle) step_protocol(p, EventKind::Tick, cfg, counters);
}

// Statistics over the sorted values so that permuting the seeds cannot move the
// last bit of the mean or spread; per_episode keeps the seed order.
EvalScore order_free_score(const std::vector<double>& values, const std::string& metric) {
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  EvalScore score = evaluate_policy(sorted, metric);
  score.per_episode = values;
  return score;
}

}  // namespace

void validate(const SimConfig& cfg) {
  const WorldConfig& w = cfg.world;
  require(w.sensors >= 1, "world.sensors must be >= 1");
  require(w.uavs >= 1, "world.uavs must be >= 1");
  require(w.steps >= 1, "world.steps must be >= 1");
  require(w.queue_capacity >= 1, "world.queue_capacity must be >= 1");
  require(w.step_budget >= 0, "world.step_budget must be >= 0");
  require(w.tx_power_mw >= 0.0 && std::isfinite(w.tx_power_mw), "world.tx_power_mw must be >= 0");
  require(w.packet_airtime_s >= 0.0 && std::isfinite(w.packet_airtime_s), "world.packet_airtime_s must be >= 0");
  require(w.battery_capacity_j > 0.0 && std::isfinite(w.battery_capacity_j), "world.battery_capacity_j must be > 0");
  require(w.area_m > 0.0 && std::isfinite(w.area_m), "world.area_m must be > 0");
  require(w.arrival_rate >= 0.0 && std::isfinite(w.arrival_rate), "world.arrival_rate must be >= 0");
  require(w.arrival_rates.empty() || static_cast<int>(w.arrival_rates.size()) == w.sensors,
          "world.arrival_rates must list one rate per sensor");
  for (double r : w.arrival_rates) require(r >= 0.0 && std::isfinite(r), "world.arrival_rates must be >= 0");
  require(w.sensor_positions.empty() || static_cast<int>(w.sensor_positions.size()) == w.sensors,
          "world.sensor_positions must list one position per sensor");
  require(w.altitude_m > 0.0, "world.altitude_m must be > 0");
  require(w.waypoints >= 1, "world.waypoints must be >= 1");
  require(w.hover_steps >= 1, "world.hover_steps must be >= 1");
  require(w.v_max > 0.0 && std::isfinite(w.v_max), "world.v_max must be > 0");
  require(w.trajectories.empty() || static_cast<int>(w.trajectories.size()) == w.uavs,
          "world trajectories must be given for every UAV or none");
  if (w.trajectories.empty()) require(w.trajectory_radius_m > 0.0 || w.waypoints == 1, "world.trajectory_radius_m must be > 0");
  for (const Trajectory& t : w.trajectories) {
    try {
      uavsim::validate(t);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("trajectory: ") + e.what());
    }
    for (const Vec3& p : t.waypoints) require(p.z > 0.0, "trajectory waypoints must have positive altitude");
  }

  try {
    uavsim::validate(cfg.channel);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("channel: ") + e.what());
  }
  require(cfg.attention.k >= 1 && cfg.attention.k <= w.sensors, "attention.k must be in [1, world.sensors]");
  require(cfg.attention.d_prime >= 1, "attention.d_prime must be >= 1");
  require(cfg.attention.learning_rate >= 0.0 && std::isfinite(cfg.attention.learning_rate),
          "attention.learning_rate must be >= 0");
  require(is_policy_name(cfg.policy.name), "unknown policy: " + cfg.policy.name);
  require(cfg.policy.buffer_capacity >= 1, "policy.buffer_capacity must be >= 1");
  require(cfg.policy.speed_floor_fraction > 0.0 && cfg.policy.speed_floor_fraction <= 1.0,
          "policy.speed_floor_fraction must be in (0, 1]");
  require(cfg.llm.backend == "mock" || cfg.llm.backend == "live", "llm.backend must be mock or live");
  require(cfg.llm.mock_latency_s >= 0.0, "llm.mock_latency_s must be >= 0");
  try {
    uavsim::validate(cfg.llm.endpoint);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.llm.backend == "live" && cfg.policy.name == "icl") {
    require(!cfg.llm.endpoint.base_url.empty(), "llm.base_url is required for the live backend");
  }
  require(cfg.protocol.beacon_deadline >= 1 && cfg.protocol.receive_deadline >= 1,
          "protocol deadlines must be >= 1");
}

WorldSetup build_world(const SimConfig& cfg) {
  validate(cfg);
  const WorldConfig& w = cfg.world;
  const RngStreams streams(cfg.seed);
  WorldSetup out;
  out.channel = cfg.channel;

  auto placement = streams.stream("placement");
  std::uniform_real_distribution<double> coord(0.0, w.area_m);
  for (int j = 0; j < w.sensors; ++j) {
    SensorState s;
    s.id = j;
    if (w.sensor_positions.empty()) {
      s.position.x = coord(placement);
      s.position.y = coord(placement);
    } else {
      s.position = w.sensor_positions[static_cast<std::size_t>(j)];
    }
    s.queue_cap = w.queue_capacity;
    s.battery_j = w.battery_capacity_j;
    s.arrival_rate = w.arrival_rates.empty() ? w.arrival_rate : w.arrival_rates[static_cast<std::size_t>(j)];
    out.sensors.push_back(s);
  }

  if (w.trajectories.empty()) {
    const Vec2 center{w.area_m / 2.0, w.area_m / 2.0};
    for (int i = 0; i < w.uavs; ++i) {
      const double phase = 2.0 * std::numbers::pi * i / w.uavs;
      out.trajectories.push_back(
          circular_trajectory(center, w.trajectory_radius_m, w.altitude_m, w.waypoints, phase, w.hover_steps));
    }
  } else {
    out.trajectories = w.trajectories;
  }
  for (int i = 0; i < w.uavs; ++i) {
    out.uavs.push_back(initial_uav_state(i, out.trajectories[static_cast<std::size_t>(i)], w.v_max, w.uav_battery_j,
                                         w.uav_energy_per_m));
  }

  if (cfg.gain_threshold_auto) {
    std::vector<Vec3> points;
    for (const Trajectory& t : out.trajectories) points.insert(points.end(), t.waypoints.begin(), t.waypoints.end());
    std::vector<Vec2> sensor_points;
    for (const SensorState& s : out.sensors) sensor_points.push_back(s.position);
    out.channel.gain_threshold_db = calibrate_gain_threshold(points, sensor_points, out.channel);
  }
  return out;
}

Vec3 contact_point(const UavState& uav, const Trajectory& trajectory) {
  if (uav.hovering) {
    if (uav.hover_count < trajectory.hover_steps || trajectory.waypoints.size() == 1) return uav.position;
    return trajectory.waypoints[trajectory.next_index(uav.waypoint_idx)];
  }
  return trajectory.waypoints[uav.waypoint_idx];
}

StepLoss compute_step_loss(std::span<const ExecutedContact> contacts, std::span<const ArrivalRecord> arrivals,
                           double gain_threshold_db) {
  StepLoss loss;
  std::set<int> scheduled;
  for (const ExecutedContact& c : contacts) {
    scheduled.insert(c.sensor_id);
    if (c.gain_db <= gain_threshold_db) {
      ++loss.f_events;
      loss.f_packets += c.attempted;
    }
  }
  for (const ArrivalRecord& r : arrivals) {
    if (r.overflow > 0 && !scheduled.contains(r.sensor_id)) {
      ++loss.g_events;
      loss.g_packets += r.overflow;
    }
  }
  return loss;
}

std::unique_ptr<SchedulingPolicy> make_policy(const SimConfig& cfg, double gain_threshold_db,
                                              const RngStreams& streams) {
  PolicyRules rules;
  rules.queue_capacity = cfg.world.queue_capacity;
  rules.gain_threshold_db = gain_threshold_db;
  rules.speed_floor_fraction = cfg.policy.speed_floor_fraction;
  const std::string& name = cfg.policy.name;
  if (name == "max_gain") return std::make_unique<MaxGainScheduler>();
  if (name == "greedy") return std::make_unique<GreedyScheduler>(rules);
  if (name == "random") return std::make_unique<RandomScheduler>(streams.stream("policy"));
  if (name == "icl") {
    std::shared_ptr<const ChatBackend> backend;
    if (cfg.llm.backend == "live") {
      backend = std::make_shared<HttpChatBackend>();
    } else {
      backend = std::make_shared<MockChatBackend>(cfg.llm.mock_latency_s);
    }
    auto client = std::make_shared<const LlmClient>(cfg.llm.endpoint, backend);
    return std::make_unique<IclScheduler>(rules, client, cfg.policy.buffer_capacity, cfg.policy.prompt_char_budget);
  }
  throw ConfigError("unknown policy: " + name);
}

EpisodeResult run_episode(const SimConfig& cfg, std::optional<AttentionParams> attention) {
  WorldSetup probe = build_world(cfg);
  auto policy = make_policy(cfg, probe.channel.gain_threshold_db, RngStreams(cfg.seed));
  return run_episode(cfg, *policy, std::move(attention));
}

EpisodeResult run_episode(const SimConfig& cfg, SchedulingPolicy& policy, std::optional<AttentionParams> attention) {
  WorldSetup world = build_world(cfg);
  const RngStreams streams(cfg.seed);
  auto arrival_rng = streams.stream("arrivals");
  const EnergyModel energy{cfg.world.tx_power_mw, cfg.world.packet_airtime_s};
  const ChannelParams& channel = world.channel;
  const double threshold = channel.gain_threshold_db;
  const auto n_uavs = world.uavs.size();
  const auto n_sensors = world.sensors.size();

  const bool use_attention = policy.uses_attention();
  if (use_attention && !attention) {
    auto init = streams.stream("init");
    attention = init_attention_params(kFeatureDim, cfg.attention.d_prime, init);
  }
  if (attention) {
    validate(*attention);
    if (attention->d() != kFeatureDim) throw ConfigError("attention weights must take 3 input features");
  }

  EpisodeResult res;
  res.policy = policy.name();
  res.seed = cfg.seed;
  res.gain_threshold_db = threshold;
  res.per_sensor_loss.assign(n_sensors, 0);

  for (int step = 0; step < cfg.world.steps; ++step) {
    std::vector<int> claimed;
    std::vector<PendingContact> pending(n_uavs);
    std::vector<double> velocities(n_uavs, 0.0);

    // Decide, one UAV at a time.
    for (std::size_t u = 0; u < n_uavs; ++u) {
      const UavState& uav = world.uavs[u];
      PendingContact& p = pending[u];
      p.record.step = step;
      p.record.uav_id = uav.id;
      p.record.phase_path = std::string(to_string(p.contact.phase));
      step_protocol(p, EventKind::Query, cfg.protocol, res.protocol);
      p.point = contact_point(uav, world.trajectories[u]);

      const Observation obs = observe(step, uav, p.point, world.uavs, world.sensors, claimed, channel);
      if (obs.sensors.empty()) {
        p.velocity = uav.v_max;
        p.record.source = "idle";
        step_protocol(p, EventKind::Cancel, cfg.protocol, res.protocol);
      } else {
        std::vector<int> pruned;
        if (use_attention) {
          p.features = observation_features(obs);
          pruned = rank_sensors(p.features, *attention, cfg.attention.k).selected;
        }
        PolicyChoice choice = policy.decide(obs, pruned);
        res.completions.insert(res.completions.end(), choice.completions.begin(), choice.completions.end());
        if (choice.source == ChoiceSource::Fallback) ++res.fallbacks;
        if (choice.parse_failure) ++res.parse_failures;
        if (choice.llm_failure) ++res.llm_failures;
        if (choice.pruning_fallback) ++res.pruning_fallbacks;

        const UavAction* act = choice.decision.for_uav(uav.id);
        if (act == nullptr) throw std::logic_error("policy returned no action for the deciding UAV");
        p.velocity = act->velocity;
        p.record.pruned_ids = std::move(pruned);
        p.record.source = std::string(source_name(choice.source));
        p.record.note = choice.note;
        p.decided = true;
        p.shown = std::move(choice.shown);
        p.decision = choice.decision;
        if (std::binary_search(claimed.begin(), claimed.end(), act->sensor_id)) {
          // Lower ids already hold this sensor; the loser stays on its loop without a contact.
          ++res.conflicts;
          p.record.source = "conflict";
          p.record.note = "sensor " + std::to_string(act->sensor_id) + " already claimed";
          step_protocol(p, EventKind::Cancel, cfg.protocol, res.protocol);
        } else {
          claimed.insert(std::upper_bound(claimed.begin(), claimed.end(), act->sensor_id), act->sensor_id);
          p.record.sensor_id = act->sensor_id;
          step_protocol(p, EventKind::DecisionReady, cfg.protocol, res.protocol, act->sensor_id);
        }
      }
      if (!(p.velocity > 0.0 && p.velocity <= uav.v_max)) throw std::logic_error("decided velocity out of bounds");
      p.record.velocity = p.velocity;
      velocities[u] = p.velocity;
    }
    res.velocity_trace.push_back(velocities);

    // Move and execute contacts.
    std::vector<ExecutedContact> contacts;
    std::vector<std::int64_t> step_lost(n_sensors, 0);
    const std::int64_t lost_before = res.ledger.lost();
    for (std::size_t u = 0; u < n_uavs; ++u) {
      PendingContact& p = pending[u];
      UavState& uav = world.uavs[u];
      uav = advance_uav(uav, world.trajectories[u], p.velocity);
      if (p.contact.phase != Phase::EnRoute) continue;

      SensorState& sensor = world.sensors[static_cast<std::size_t>(p.contact.target_sensor)];
      if (!uav.hovering || !(uav.position == p.point)) {
        step_protocol(p, EventKind::Cancel, cfg.protocol, res.protocol);
        continue;
      }
      step_protocol(p, EventKind::Arrived, cfg.protocol, res.protocol);
      const bool reachable =
          sensor.alive && horizontal_distance(uav.position.xy(), sensor.position) <= channel.coverage_radius_m;
      if (!reachable) {
        expire(p, cfg.protocol, res.protocol);
        continue;
      }
      step_protocol(p, EventKind::SensorReply, cfg.protocol, res.protocol);
      const LinkQuality link = link_quality(uav, sensor, channel);
      const StatusPayload status = make_status(sensor, link);
      const ServeOutcome served = serve_sensor(sensor, uav, link, channel, energy, cfg.world.step_budget, res.ledger);

      // The transfer goes through the wire format so the receiving side sees exactly what was encoded.
      const DataPacketMsg sent{sensor.id, served.attempted, status};
      const ProtocolMessage received = decode(encode(sent));
      if (!(std::get<DataPacketMsg>(received) == sent)) throw std::logic_error("data packet did not survive encoding");

      contacts.push_back({uav.id, sensor.id, link.gain_db, served.attempted});
      step_lost[static_cast<std::size_t>(sensor.id)] += served.lost;
      p.record.executed = true;
      p.record.attempted = served.attempted;
      p.record.delivered = served.delivered;
      p.record.comm_failed = served.comm_failed;
      if (served.comm_failed) {
        expire(p, cfg.protocol, res.protocol);
      } else {
        step_protocol(p, EventKind::DataReceived, cfg.protocol, res.protocol);
        step_protocol(p, EventKind::AckSent, cfg.protocol, res.protocol);
        step_protocol(p, EventKind::Reset, cfg.protocol, res.protocol);
      }
    }

    const ArrivalOutcome arrivals = step_arrivals(world.sensors, arrival_rng, res.ledger);
    for (const ArrivalRecord& r : arrivals.records) step_lost[static_cast<std::size_t>(r.sensor_id)] += r.overflow;
    const StepLoss loss = compute_step_loss(contacts, arrivals.records, threshold);
    res.step_losses.push_back(loss);
    res.f_total += loss.f_events;
    res.g_total += loss.g_events;
    for (std::size_t j = 0; j < n_sensors; ++j) res.per_sensor_loss[j] += step_lost[j];
    if (!res.ledger.balances(world.sensors)) res.ledger_balanced = false;
    res.ledger_trace.push_back(res.ledger);

    if (use_attention && cfg.attention.online_update && cfg.attention.learning_rate > 0.0) {
      std::vector<FeedbackStep> feedback;
      for (const PendingContact& p : pending) {
        if (p.features.ids.empty()) continue;
        FeedbackStep fb;
        fb.features = p.features;
        fb.selected = p.record.pruned_ids;
        for (int id : p.features.ids) {
          const SensorState& s = world.sensors[static_cast<std::size_t>(id)];
          fb.realized_loss.push_back(static_cast<double>(step_lost[static_cast<std::size_t>(id)]) +
                                     static_cast<double>(s.queue_len) / s.queue_cap);
        }
        feedback.push_back(std::move(fb));
      }
      if (!feedback.empty()) {
        UpdateResult upd = update_params(*attention, feedback, cfg.attention.learning_rate);
        if (upd.applied) {
          attention = std::move(upd.params);
          ++res.attention_updates;
        }
      }
    }

    const double step_packet_loss = static_cast<double>(res.ledger.lost() - lost_before);
    for (PendingContact& p : pending) {
      if (p.decided) policy.record_outcome(p.shown, p.decision, step_packet_loss);
      res.decisions_log.push_back(std::move(p.record));
    }
  }

  res.total_loss = res.f_total + res.g_total;
  if (use_attention) res.attention = attention;
  return res;
}

std::vector<ExperimentRow> run_experiment(std::span<const ExperimentCase> grid, std::span<const std::uint64_t> seeds,
                                          int jobs, std::optional<AttentionParams> attention) {
  if (grid.empty()) throw std::invalid_argument("experiment grid is empty");
  if (seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
  for (const ExperimentCase& c : grid) validate(c.cfg);

  const std::size_t n_seeds = seeds.size();
  const std::size_t total = grid.size() * n_seeds;
  std::vector<std::int64_t> packets(total, 0);
  std::vector<int> events(total, 0);
  std::vector<std::exception_ptr> errors(total);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      try {
        SimConfig cfg = grid[i / n_seeds].cfg;
        cfg.seed = seeds[i % n_seeds];
        const EpisodeResult r = run_episode(cfg, attention);
        packets[i] = r.packet_loss();
        events[i] = r.total_loss;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::clamp<long long>(jobs, 1, static_cast<long long>(total)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<ExperimentRow> rows;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    std::vector<double> p;
    std::vector<double> ev;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      p.push_back(static_cast<double>(packets[c * n_seeds + s]));
      ev.push_back(events[c * n_seeds + s]);
    }
    ExperimentRow row;
    row.label = grid[c].label;
    row.policy = grid[c].cfg.policy.name;
    row.score = order_free_score(p, "packet_loss");
    row.event_score = order_free_score(ev, "loss_events");
    row.seeds.assign(seeds.begin(), seeds.end());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace uavsim
