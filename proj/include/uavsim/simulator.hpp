#pragma once

// Episode loop. Each step, for every UAV in id order:
//   observe the sensors reachable from its contact point -> attention top-k ->
//   policy decision -> claim the sensor
// then every UAV moves, executes its contact through the protocol machine and
// serves the sensor; afterwards new packets arrive, the step loss is scored,
// the attention weights are optionally updated and the outcome is fed back to
// the policy.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uavsim/attention.hpp"
#include "uavsim/channel.hpp"
#include "uavsim/llm_client.hpp"
#include "uavsim/policy.hpp"
#include "uavsim/protocol.hpp"
#include "uavsim/rng.hpp"
#include "uavsim/schedulers.hpp"
#include "uavsim/world.hpp"

namespace uavsim {

struct WorldConfig {
  int sensors = 10;
  int uavs = 3;
  int queue_capacity = 40;
  int steps = 30;
  double tx_power_mw = 100.0;
  double battery_capacity_j = 50.0;
  double packet_airtime_s = 0.1;
  double area_m = 100.0;  // sensors are placed uniformly in [0, area_m]^2
  double arrival_rate = 3.0;
  std::vector<double> arrival_rates;  // per sensor; overrides arrival_rate when non-empty
  std::vector<Vec2> sensor_positions;  // fixed placement; random when empty
  int step_budget = 25;                // packets one contact can carry
  double altitude_m = 40.0;
  double trajectory_radius_m = 30.0;
  int waypoints = 30;
  int hover_steps = 1;
  double v_max = 20.0;
  double uav_battery_j = 1.0e6;
  double uav_energy_per_m = 0.0;
  std::vector<Trajectory> trajectories;  // per UAV; circular loops when empty
};

struct AttentionConfig {
  int k = 3;
  int d_prime = 8;
  double learning_rate = 0.05;
  bool online_update = true;
};

struct PolicyConfig {
  std::string name = "greedy";
  std::size_t buffer_capacity = 8;
  std::size_t prompt_char_budget = 24000;
  double speed_floor_fraction = 0.5;
};

struct LlmConfig {
  std::string backend = "mock";  // mock | live
  EndpointConfig endpoint;
  double mock_latency_s = 0.0;
};

struct SimConfig {
  WorldConfig world;
  ChannelParams channel;
  bool gain_threshold_auto = true;  // median gain over waypoint x sensor pairs
  AttentionConfig attention;
  PolicyConfig policy;
  LlmConfig llm;
  ProtocolConfig protocol;
  std::uint64_t seed = 1;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws ConfigError naming the first violated constraint.
void validate(const SimConfig& cfg);

/// Sensors, trajectories, initial UAV states and the resolved threshold.
struct WorldSetup {
  std::vector<SensorState> sensors;
  std::vector<Trajectory> trajectories;
  std::vector<UavState> uavs;
  ChannelParams channel;  // gain_threshold_db resolved
};

WorldSetup build_world(const SimConfig& cfg);

/// Where the UAV will hover this step if it reaches its next stop.
Vec3 contact_point(const UavState& uav, const Trajectory& trajectory);

/// A contact that actually took place this step.
struct ExecutedContact {
  int uav_id = 0;
  int sensor_id = 0;
  double gain_db = 0.0;
  int attempted = 0;  // packets put on the air
};

struct StepLoss {
  int f_events = 0;  // executed contacts with gain <= threshold
  int g_events = 0;  // unscheduled sensors whose arrivals overflowed
  std::int64_t f_packets = 0;
  std::int64_t g_packets = 0;

  int events() const { return f_events + g_events; }
  friend bool operator==(const StepLoss&, const StepLoss&) = default;
};

/// `arrivals` holds this step's post-service arrival records. A sensor counts
/// once towards g however many UAVs ignored it.
StepLoss compute_step_loss(std::span<const ExecutedContact> contacts, std::span<const ArrivalRecord> arrivals,
                           double gain_threshold_db);

struct DecisionRecord {
  int step = 0;
  int uav_id = 0;
  int sensor_id = -1;  // -1: nothing reachable or conflict no-op
  double velocity = 0.0;
  std::string source;  // policy | fallback | idle | conflict
  std::vector<int> pruned_ids;
  std::string phase_path;  // protocol phases visited, '>' separated
  bool executed = false;
  int attempted = 0;
  int delivered = 0;
  bool comm_failed = false;
  std::string note;
};

struct EpisodeResult {
  std::string policy;
  std::uint64_t seed = 0;
  double gain_threshold_db = 0.0;
  int total_loss = 0;  // f_total + g_total
  int f_total = 0;
  int g_total = 0;
  std::vector<std::int64_t> per_sensor_loss;  // lost packets, by sensor id
  std::vector<std::vector<double>> velocity_trace;  // steps x uavs
  std::vector<StepLoss> step_losses;
  PacketLedger ledger;
  std::vector<PacketLedger> ledger_trace;  // cumulative, after each step
  bool ledger_balanced = true;  // checked after every step
  std::vector<DecisionRecord> decisions_log;
  ProtocolCounters protocol;
  int conflicts = 0;
  int fallbacks = 0;
  int parse_failures = 0;
  int llm_failures = 0;
  int pruning_fallbacks = 0;
  int attention_updates = 0;
  std::vector<CompletionRecord> completions;
  std::optional<AttentionParams> attention;  // final weights when attention was used

  std::int64_t packet_loss() const { return ledger.lost(); }
};

/// Builds the scheduler named by cfg.policy.name. The ICL policy uses the mock
/// backend unless cfg.llm.backend is "live".
std::unique_ptr<SchedulingPolicy> make_policy(const SimConfig& cfg, double gain_threshold_db,
                                              const RngStreams& streams);

/// Attention weights are drawn from the "init" stream when not supplied.
EpisodeResult run_episode(const SimConfig& cfg, SchedulingPolicy& policy,
                          std::optional<AttentionParams> attention = std::nullopt);
EpisodeResult run_episode(const SimConfig& cfg, std::optional<AttentionParams> attention = std::nullopt);

struct ExperimentCase {
  std::string label;
  SimConfig cfg;  // cfg.seed is replaced per run
};

struct ExperimentRow {
  std::string label;
  std::string policy;
  EvalScore score;             // packet loss
  EvalScore event_score;       // loss events
  std::vector<std::uint64_t> seeds;
};

/// Runs every case under every seed on up to `jobs` threads. Rows follow the
/// case order and per-episode values follow the seed order regardless of
/// scheduling.
std::vector<ExperimentRow> run_experiment(std::span<const ExperimentCase> grid, std::span<const std::uint64_t> seeds,
                                          int jobs = 1, std::optional<AttentionParams> attention = std::nullopt);

}  // namespace uavsim
