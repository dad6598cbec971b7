#pragma once

// Decision abstraction, in-context prompt composition and baseline schedulers.
//
// A prompt is the task description, followed by recent demonstrations, followed
// by the current observation restricted to the attention-selected sensors:
//
//   ## TASK / ## RULES / ## OUTPUT FORMAT      task description
//   ## EXAMPLES                                 oldest first, omitted when empty
//   ## OBSERVATION                              step, UAVs, claimed ids, sensors
//   ## RESPONSE
//
// The model answers with a single block
//
//   DECISIONS
//   uav=<id> sensor=<id> velocity=<float>
//   END
//
// Lines outside the block are ignored.

#include <cstddef>
#include <deque>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "uavsim/types.hpp"

namespace uavsim {

/// Constraints shared by the task description and the greedy rule.
struct PolicyRules {
  int queue_capacity = 40;
  double gain_threshold_db = 0.0;
  double speed_floor_fraction = 0.5;  // greedy speed at empty queues, as a fraction of v_max
};

struct TaskDescription {
  std::string objective_text;
  std::string rules_text;
  std::string output_schema_text;
};

TaskDescription make_task_description(const PolicyRules& rules);

struct UavView {
  int id = 0;
  Vec3 position;
  std::size_t waypoint_idx = 0;
  double v_max = 0.0;

  friend bool operator==(const UavView&, const UavView&) = default;
};

struct SensorView {
  int id = 0;
  int queue_len = 0;
  double battery_j = 0.0;
  double gain_db = 0.0;  // link gain to the deciding UAV at its contact point

  friend bool operator==(const SensorView&, const SensorView&) = default;
};

/// What one UAV sees when it queries for a decision. `sensors` holds the alive,
/// reachable sensors not yet claimed this step, in ascending id order; `claimed`
/// lists the ids taken by lower-id UAVs.
struct Observation {
  int step = 0;
  int deciding_uav = 0;
  std::vector<UavView> uavs;
  std::vector<SensorView> sensors;
  std::vector<int> claimed;

  const UavView& deciding() const;
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct UavAction {
  int uav_id = 0;
  int sensor_id = 0;
  double velocity = 0.0;

  friend bool operator==(const UavAction&, const UavAction&) = default;
};

struct Decision {
  std::vector<UavAction> actions;

  const UavAction* for_uav(int uav_id) const;
  friend bool operator==(const Decision&, const Decision&) = default;
};

enum class DecisionErrorKind { Malformed, UnknownUav, UnknownSensor, VelocityOutOfBounds };

class DecisionError : public std::runtime_error {
 public:
  DecisionError(DecisionErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  DecisionErrorKind kind() const { return kind_; }

 private:
  DecisionErrorKind kind_;
};

/// Raised by baselines when the observation offers no sensor to schedule.
class NoEligibleSensor : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Demonstration {
  std::string input_x;
  std::string output_y;
};

/// Bounded FIFO of demonstrations.
class ExampleBuffer {
 public:
  explicit ExampleBuffer(std::size_t capacity = 8);

  void push(Demonstration demo);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const std::deque<Demonstration>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<Demonstration> entries_;
};

std::string serialize_observation(const Observation& obs);
Observation parse_observation(std::string_view text);
std::string serialize_decision(const Decision& decision);

/// Rules section of a prompt back into PolicyRules. Throws std::invalid_argument.
PolicyRules parse_rules(std::string_view prompt);

/// Observation section of a full prompt. Throws std::invalid_argument.
Observation extract_observation(std::string_view prompt);

struct PromptResult {
  std::string text;
  bool pruning_fallback = false;  // empty pruned set, full observation used
  std::size_t demos_included = 0;
  std::size_t demos_dropped = 0;
};

/// `char_budget` of 0 disables the size guard; otherwise the oldest
/// demonstrations are dropped until the prompt fits (or none remain).
PromptResult build_prompt(const TaskDescription& td, const ExampleBuffer& buffer, const Observation& obs,
                          std::span<const int> pruned_ids, std::size_t char_budget = 0);

/// Parses the first DECISIONS block. Every line must name a UAV from the
/// observation, a sensor that is listed or claimed, and a velocity in
/// (0, v_max]; the deciding UAV must be present.
Decision parse_decision(std::string_view response, const Observation& obs);

/// Throws DecisionError when `decision` would not pass parse_decision for `obs`.
void validate_decision(const Decision& decision, const Observation& obs);

Decision max_channel_gain_policy(const Observation& obs);
Decision greedy_queue_aware_policy(const Observation& obs, const PolicyRules& rules);
Decision random_policy(const Observation& obs, std::mt19937_64& rng);

void record_feedback(ExampleBuffer& buffer, const Observation& obs, const Decision& decision,
                     double realized_loss);

struct EvalScore {
  std::string metric_name = "packet_loss";
  double mean_score = 0.0;
  double std_score = 0.0;  // sample standard deviation, 0 for a single episode
  double min_score = 0.0;
  double max_score = 0.0;
  std::vector<double> per_episode;
};

EvalScore evaluate_policy(std::span<const double> episode_losses, std::string metric_name = "packet_loss");

}  // namespace uavsim
