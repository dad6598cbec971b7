#pragma once

#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uavsim/llm_client.hpp"
#include "uavsim/policy.hpp"

namespace uavsim {

enum class ChoiceSource { Policy, Fallback };

struct PolicyChoice {
  Decision decision;
  Observation shown;  // what the policy actually saw (pruned for the ICL policy)
  ChoiceSource source = ChoiceSource::Policy;
  bool llm_failure = false;
  bool parse_failure = false;
  bool pruning_fallback = false;
  std::string note;
  std::vector<CompletionRecord> completions;
};

/// Per-episode scheduler. Decisions are requested one UAV at a time in id order.
class SchedulingPolicy {
 public:
  virtual ~SchedulingPolicy() = default;
  virtual std::string name() const = 0;
  /// True when decide() consumes attention-pruned ids.
  virtual bool uses_attention() const { return false; }
  /// `obs.sensors` is non-empty; `pruned_ids` is a subset of its ids.
  virtual PolicyChoice decide(const Observation& obs, std::span<const int> pruned_ids) = 0;
  virtual void record_outcome(const Observation& shown, const Decision& decision, double realized_loss) {
    (void)shown;
    (void)decision;
    (void)realized_loss;
  }
};

class MaxGainScheduler final : public SchedulingPolicy {
 public:
  std::string name() const override { return "max_gain"; }
  PolicyChoice decide(const Observation& obs, std::span<const int> pruned_ids) override;
};

class GreedyScheduler final : public SchedulingPolicy {
 public:
  explicit GreedyScheduler(PolicyRules rules) : rules_(rules) {}
  std::string name() const override { return "greedy"; }
  PolicyChoice decide(const Observation& obs, std::span<const int> pruned_ids) override;

 private:
  PolicyRules rules_;
};

class RandomScheduler final : public SchedulingPolicy {
 public:
  explicit RandomScheduler(std::mt19937_64 rng) : rng_(std::move(rng)) {}
  std::string name() const override { return "random"; }
  PolicyChoice decide(const Observation& obs, std::span<const int> pruned_ids) override;

 private:
  std::mt19937_64 rng_;
};

/// Prompt -> chat completion -> parsed decision. Any client or parse failure
/// falls back to the greedy rule on the same (pruned) observation.
class IclScheduler final : public SchedulingPolicy {
 public:
  IclScheduler(PolicyRules rules, std::shared_ptr<const LlmClient> client, std::size_t buffer_capacity,
               std::size_t prompt_char_budget);

  std::string name() const override { return "icl"; }
  bool uses_attention() const override { return true; }
  PolicyChoice decide(const Observation& obs, std::span<const int> pruned_ids) override;
  void record_outcome(const Observation& shown, const Decision& decision, double realized_loss) override;

  const ExampleBuffer& buffer() const { return buffer_; }
  const TaskDescription& task() const { return task_; }

 private:
  PolicyRules rules_;
  TaskDescription task_;
  std::shared_ptr<const LlmClient> client_;
  ExampleBuffer buffer_;
  std::size_t prompt_char_budget_;
};

/// Policy names accepted by the simulator and the CLI.
inline constexpr const char* kPolicyNames[] = {"icl", "max_gain", "greedy", "random"};
bool is_policy_name(std::string_view name);

}  // namespace uavsim
