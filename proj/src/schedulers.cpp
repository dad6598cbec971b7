#include "uavsim/schedulers.hpp"

#include <algorithm>
#include <set>

namespace uavsim {

namespace {

Observation restrict_to(const Observation& obs, std::span<const int> ids) {
  if (ids.empty()) return obs;
  const std::set<int> keep(ids.begin(), ids.end());
  Observation out = obs;
  std::erase_if(out.sensors, [&](const SensorView& s) { return !keep.contains(s.id); });
  return out;
}

}  // namespace

bool is_policy_name(std::string_view name) {
  return std::any_of(std::begin(kPolicyNames), std::end(kPolicyNames), [&](const char* n) { return name == n; });
}

PolicyChoice MaxGainScheduler::decide(const Observation& obs, std::span<const int>) {
  PolicyChoice c;
  c.shown = obs;
  c.decision = max_channel_gain_policy(obs);
  return c;
}

PolicyChoice GreedyScheduler::decide(const Observation& obs, std::span<const int>) {
  PolicyChoice c;
  c.shown = obs;
  c.decision = greedy_queue_aware_policy(obs, rules_);
  return c;
}

PolicyChoice RandomScheduler::decide(const Observation& obs, std::span<const int>) {
  PolicyChoice c;
  c.shown = obs;
  c.decision = random_policy(obs, rng_);
  return c;
}

IclScheduler::IclScheduler(PolicyRules rules, std::shared_ptr<const LlmClient> client, std::size_t buffer_capacity,
                           std::size_t prompt_char_budget)
    : rules_(rules),
      task_(make_task_description(rules)),
      client_(std::move(client)),
      buffer_(buffer_capacity),
      prompt_char_budget_(prompt_char_budget) {
  if (!client_) throw std::invalid_argument("ICL scheduler needs an LLM client");
}

PolicyChoice IclScheduler::decide(const Observation& obs, std::span<const int> pruned_ids) {
  PolicyChoice c;
  const PromptResult prompt = build_prompt(task_, buffer_, obs, pruned_ids, prompt_char_budget_);
  c.pruning_fallback = prompt.pruning_fallback;
  c.shown = restrict_to(obs, pruned_ids);
  try {
    Completion completion = client_->complete(prompt.text);
    c.completions = std::move(completion.records);
    const Decision parsed = parse_decision(completion.text, c.shown);
    // Only the deciding UAV's line is acted on.
    c.decision = Decision{{*parsed.for_uav(obs.deciding_uav)}};
    return c;
  } catch (const LlmError& e) {
    c.completions.insert(c.completions.end(), e.attempts.begin(), e.attempts.end());
    c.llm_failure = true;
    c.note = e.what();
  } catch (const DecisionError& e) {
    c.parse_failure = true;
    c.note = e.what();
  }
  c.source = ChoiceSource::Fallback;
  c.decision = greedy_queue_aware_policy(c.shown, rules_);
  return c;
}

void IclScheduler::record_outcome(const Observation& shown, const Decision& decision, double realized_loss) {
  record_feedback(buffer_, shown, decision, realized_loss);
}

}  // namespace uavsim
