#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "uavsim/policy.hpp"

using namespace uavsim;

namespace {

Observation make_obs(std::vector<SensorView> sensors, int deciding = 0) {
  Observation obs;
  obs.step = 4;
  obs.deciding_uav = deciding;
  obs.uavs = {{0, {10, 20, 40}, 3, 20.0}, {1, {60, 20, 40}, 7, 20.0}};
  obs.sensors = std::move(sensors);
  return obs;
}

Observation five_sensors() {
  return make_obs({{0, 12, 40.0, 118.5}, {1, 30, 35.5, 117.0}, {2, 0, 49.0, 121.25}, {3, 7, 12.0, 119.0},
                   {4, 40, 3.5, 116.0}});
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(Prompt, ByteIdenticalForIdenticalInputs) {
  const TaskDescription td = make_task_description(PolicyRules{40, 118.0, 0.5});
  ExampleBuffer buf(4);
  record_feedback(buf, five_sensors(), Decision{{{0, 1, 15.0}}}, 3.0);
  const std::vector<int> ids{1, 3, 4};
  EXPECT_EQ(build_prompt(td, buf, five_sensors(), ids).text, build_prompt(td, buf, five_sensors(), ids).text);
}

TEST(Prompt, ObservationHoldsOnlyPrunedSensors) {
  const TaskDescription td = make_task_description(PolicyRules{40, 118.0, 0.5});
  const std::vector<int> ids{4, 1, 3};
  const PromptResult r = build_prompt(td, ExampleBuffer(2), five_sensors(), ids);
  EXPECT_FALSE(r.pruning_fallback);
  const Observation back = extract_observation(r.text);
  std::vector<int> shown;
  for (const auto& s : back.sensors) shown.push_back(s.id);
  EXPECT_EQ(shown, (std::vector<int>{1, 3, 4}));
  EXPECT_EQ(count(r.text, "sensor: id="), 3u);
  EXPECT_EQ(r.text.find("## EXAMPLES"), std::string::npos);
}

TEST(Prompt, EmptyPrunedSetUsesFullObservation) {
  const TaskDescription td = make_task_description(PolicyRules{});
  const PromptResult r = build_prompt(td, ExampleBuffer(2), five_sensors(), {});
  EXPECT_TRUE(r.pruning_fallback);
  EXPECT_EQ(extract_observation(r.text).sensors.size(), 5u);
}

TEST(Prompt, UnknownPrunedIdRejected) {
  const std::vector<int> ids{9};
  EXPECT_THROW(build_prompt(make_task_description({}), ExampleBuffer(2), five_sensors(), ids), std::invalid_argument);
}

TEST(Prompt, RulesRoundTrip) {
  const PolicyRules rules{37, 119.125, 0.25};
  const PromptResult r = build_prompt(make_task_description(rules), ExampleBuffer(1), five_sensors(), {});
  const PolicyRules back = parse_rules(r.text);
  EXPECT_EQ(back.queue_capacity, 37);
  EXPECT_EQ(back.gain_threshold_db, 119.125);
  EXPECT_EQ(back.speed_floor_fraction, 0.25);
}

TEST(Prompt, BudgetDropsOldestDemonstrations) {
  const TaskDescription td = make_task_description({});
  ExampleBuffer buf(8);
  for (int i = 0; i < 6; ++i) record_feedback(buf, five_sensors(), Decision{{{0, i % 5, 10.0}}}, i);
  const std::size_t full = build_prompt(td, buf, five_sensors(), {}).text.size();
  const PromptResult cut = build_prompt(td, buf, five_sensors(), {}, full - 1);
  EXPECT_GE(cut.demos_dropped, 1u);
  EXPECT_EQ(cut.demos_included + cut.demos_dropped, 6u);
  EXPECT_LE(cut.text.size(), full - 1);
  EXPECT_NE(cut.text.find("realized_loss: 5"), std::string::npos);  // newest survives
}

TEST(Observation, SerializeParseRoundTrip) {
  Observation obs = five_sensors();
  obs.claimed = {2, 7};
  EXPECT_EQ(parse_observation(serialize_observation(obs)), obs);
}

TEST(ParseDecision, AcceptsWellFormedBlock) {
  const Observation obs = five_sensors();
  const Decision d = parse_decision("chatter\nDECISIONS\nuav=0 sensor=3 velocity=12.5\nEND\ntrailing\n", obs);
  ASSERT_EQ(d.actions.size(), 1u);
  EXPECT_EQ(d.actions[0], (UavAction{0, 3, 12.5}));
}

TEST(ParseDecision, ErrorKinds) {
  const Observation obs = five_sensors();
  auto kind_of = [&](const std::string& text) {
    try {
      parse_decision(text, obs);
    } catch (const DecisionError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no error for: " << text;
    return DecisionErrorKind::Malformed;
  };
  EXPECT_EQ(kind_of(""), DecisionErrorKind::Malformed);
  EXPECT_EQ(kind_of("DECISIONS\nuav=0 sensor=1 velocity=3\n"), DecisionErrorKind::Malformed);
  EXPECT_EQ(kind_of("DECISIONS\nuav=0 sensor=1\nEND\n"), DecisionErrorKind::Malformed);
  EXPECT_EQ(kind_of("DECISIONS\nuav=9 sensor=1 velocity=3\nEND\n"), DecisionErrorKind::UnknownUav);
  EXPECT_EQ(kind_of("DECISIONS\nuav=0 sensor=99 velocity=3\nEND\n"), DecisionErrorKind::UnknownSensor);
  EXPECT_EQ(kind_of("DECISIONS\nuav=0 sensor=1 velocity=0\nEND\n"), DecisionErrorKind::VelocityOutOfBounds);
  EXPECT_EQ(kind_of("DECISIONS\nuav=0 sensor=1 velocity=20.01\nEND\n"), DecisionErrorKind::VelocityOutOfBounds);
  EXPECT_EQ(kind_of("DECISIONS\nuav=1 sensor=1 velocity=3\nEND\n"), DecisionErrorKind::Malformed);
}

TEST(ParseDecision, SerializedDecisionRoundTrips) {
  const Observation obs = five_sensors();
  const Decision d{{{0, 4, 13.375}, {1, 2, 20.0}}};
  EXPECT_EQ(parse_decision(serialize_decision(d), obs), d);
}

TEST(MaxGain, PicksStrongestLinkAtFullSpeed) {
  const Decision d = max_channel_gain_policy(five_sensors());
  EXPECT_EQ(d.actions[0], (UavAction{0, 2, 20.0}));
}

TEST(MaxGain, SkipsClaimedSensors) {
  Observation obs = five_sensors();
  obs.claimed = {2};
  EXPECT_EQ(max_channel_gain_policy(obs).actions[0].sensor_id, 3);
}

TEST(Greedy, BestEligibleQueueWins) {
  // Sensor 4 has the fullest queue but its link is below threshold.
  const Decision d = greedy_queue_aware_policy(five_sensors(), PolicyRules{40, 116.5, 0.5});
  EXPECT_EQ(d.actions[0].sensor_id, 1);
}

TEST(Greedy, FallsBackToMaxGainWhenNothingEligible) {
  const Decision d = greedy_queue_aware_policy(five_sensors(), PolicyRules{40, 500.0, 0.5});
  EXPECT_EQ(d.actions[0].sensor_id, 2);
}

TEST(Greedy, SpeedScalesWithMeanFill) {
  const PolicyRules rules{40, 0.0, 0.5};
  const Observation empty = make_obs({{0, 0, 1, 120}, {1, 0, 1, 119}});
  const Observation full = make_obs({{0, 40, 1, 120}, {1, 55, 1, 119}});
  const Observation half = make_obs({{0, 20, 1, 120}, {1, 20, 1, 119}});
  EXPECT_DOUBLE_EQ(greedy_queue_aware_policy(empty, rules).actions[0].velocity, 10.0);
  EXPECT_DOUBLE_EQ(greedy_queue_aware_policy(full, rules).actions[0].velocity, 20.0);
  EXPECT_DOUBLE_EQ(greedy_queue_aware_policy(half, rules).actions[0].velocity, 15.0);
}

TEST(Greedy, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> queue(0, 40);
  std::uniform_int_distribution<int> gain(0, 8);  // coarse, to force ties
  std::uniform_int_distribution<int> n_dist(1, 12);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = n_dist(rng);
    std::vector<SensorView> sensors;
    std::vector<oracle::SensorView> views;
    for (int i = 0; i < n; ++i) {
      const int q = queue(rng) / 10 * 10;
      const double g = 115.0 + gain(rng);
      sensors.push_back({i * 2 + 1, q, 10.0, g});
      views.push_back({i * 2 + 1, q, g});
    }
    const double th = 115.0 + gain(rng);
    const Observation obs = make_obs(sensors);
    ASSERT_EQ(greedy_queue_aware_policy(obs, PolicyRules{40, th, 0.5}).actions[0].sensor_id,
              oracle::greedy_pick(views, 40, th));
    ASSERT_EQ(max_channel_gain_policy(obs).actions[0].sensor_id, oracle::max_gain_pick(views));
  }
}

TEST(Baselines, EmptyObservationRaises) {
  const Observation obs = make_obs({});
  EXPECT_THROW(max_channel_gain_policy(obs), NoEligibleSensor);
  EXPECT_THROW(greedy_queue_aware_policy(obs, {}), NoEligibleSensor);
  std::mt19937_64 rng(1);
  EXPECT_THROW(random_policy(obs, rng), NoEligibleSensor);
}

TEST(Random, StaysInBoundsAndIsSeeded) {
  const Observation obs = five_sensors();
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 500; ++i) {
    const Decision da = random_policy(obs, a);
    EXPECT_EQ(da, random_policy(obs, b));
    EXPECT_GT(da.actions[0].velocity, 0.0);
    EXPECT_LE(da.actions[0].velocity, 20.0);
    EXPECT_NO_THROW(validate_decision(da, obs));
  }
}

TEST(Buffer, FifoEviction) {
  ExampleBuffer buf(2);
  buf.push({"a", "1"});
  buf.push({"b", "2"});
  buf.push({"c", "3"});
  ASSERT_EQ(buf.size(), 2u);
  EXPECT_EQ(buf.entries().front().input_x, "b");
  EXPECT_EQ(buf.entries().back().input_x, "c");
  EXPECT_THROW(ExampleBuffer(0), std::invalid_argument);
  EXPECT_THROW(buf.push({"", "x"}), std::invalid_argument);
}

TEST(Buffer, RecordFeedbackRejectsInvalidDecision) {
  ExampleBuffer buf(2);
  EXPECT_THROW(record_feedback(buf, five_sensors(), Decision{{{0, 42, 5.0}}}, 1.0), DecisionError);
  EXPECT_TRUE(buf.empty());
}

TEST(Evaluate, MeanStdMinMax) {
  const std::vector<double> v{2, 4, 9};
  const EvalScore s = evaluate_policy(v);
  EXPECT_EQ(s.mean_score, 5.0);
  EXPECT_NEAR(s.std_score, std::sqrt(13.0), 1e-12);
  EXPECT_EQ(s.min_score, 2.0);
  EXPECT_EQ(s.max_score, 9.0);
  EXPECT_EQ(s.per_episode, v);
  EXPECT_EQ(evaluate_policy(std::vector<double>{7}).std_score, 0.0);
  EXPECT_THROW(evaluate_policy(std::vector<double>{}), std::invalid_argument);
}
