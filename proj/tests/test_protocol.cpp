#include <gtest/gtest.h>

#include <random>

#include "uavsim/protocol.hpp"

using namespace uavsim;

namespace {

ContactState run(ContactState s, std::initializer_list<Event> events, const ProtocolConfig& cfg,
                 ProtocolCounters& counters) {
  for (const Event& e : events) s = advance(s, e, cfg, counters);
  return s;
}

int deadline_for(Phase p, const ProtocolConfig& cfg) {
  if (p == Phase::Beaconing) return cfg.beacon_deadline;
  if (p == Phase::Receiving) return cfg.receive_deadline;
  return 0;
}

}  // namespace

TEST(StateMachine, EveryPairIsDeclaredOrIllegal) {
  const ProtocolConfig cfg;
  const auto table = declared_transitions();
  int legal = 0;
  for (Phase p : kAllPhases) {
    for (EventKind e : kAllEvents) {
      // Both guard outcomes are probed for ticks.
      for (int deadline : {0, 1, 2}) {
        if (deadline > 0 && e != EventKind::Tick) continue;
        ContactState s{p, 3, deadline};
        if (e == EventKind::Tick && deadline == 0) s.deadline = deadline_for(p, cfg);
        const Guard guard = e != EventKind::Tick ? Guard::None
                            : s.deadline > 1     ? Guard::DeadlineRemaining
                                                 : Guard::DeadlineExpired;
        const Transition* decl = nullptr;
        for (const Transition& t : table)
          if (t.from == p && t.event == e && t.guard == guard) decl = &t;
        ProtocolCounters c;
        if (decl) {
          const ContactState n = advance(s, Event{e, 5}, cfg, c);
          EXPECT_EQ(n.phase, decl->to) << to_string(p) << "/" << to_string(e);
          ++legal;
        } else {
          try {
            advance(s, Event{e, 5}, cfg, c);
            ADD_FAILURE() << "accepted " << to_string(e) << " in " << to_string(p);
          } catch (const IllegalTransition& ex) {
            EXPECT_EQ(ex.phase(), p);
            EXPECT_EQ(ex.event(), e);
          }
          EXPECT_EQ(c, ProtocolCounters{});
        }
      }
    }
  }
  EXPECT_GE(legal, static_cast<int>(table.size()));
}

TEST(StateMachine, HappyPath) {
  const ProtocolConfig cfg;
  ProtocolCounters c;
  ContactState s = run({}, {{EventKind::Query}, {EventKind::DecisionReady, 4}}, cfg, c);
  EXPECT_EQ(s.phase, Phase::EnRoute);
  EXPECT_EQ(s.target_sensor, 4);
  s = run(s, {{EventKind::Arrived}}, cfg, c);
  EXPECT_EQ(s.deadline, cfg.beacon_deadline);
  s = run(s, {{EventKind::SensorReply}, {EventKind::DataReceived}, {EventKind::AckSent}}, cfg, c);
  EXPECT_EQ(s.phase, Phase::Done);
  s = run(s, {{EventKind::Reset}}, cfg, c);
  EXPECT_EQ(s, ContactState{});
  EXPECT_EQ(c, (ProtocolCounters{0, 1, 1, 0}));
}

TEST(StateMachine, BeaconTimeoutAfterDeadlineTicks) {
  ProtocolConfig cfg;
  cfg.beacon_deadline = 3;
  ProtocolCounters c;
  ContactState s = run({}, {{EventKind::Query}, {EventKind::DecisionReady, 1}, {EventKind::Arrived}}, cfg, c);
  s = run(s, {{EventKind::Tick}, {EventKind::Tick}}, cfg, c);
  EXPECT_EQ(s.phase, Phase::Beaconing);
  EXPECT_EQ(s.deadline, 1);
  s = run(s, {{EventKind::Tick}}, cfg, c);
  EXPECT_EQ(s.phase, Phase::Idle);
  EXPECT_EQ(c.timeouts, 1);
  EXPECT_EQ(c.contacts_completed, 0);
}

TEST(StateMachine, ReceiveTimeout) {
  const ProtocolConfig cfg;
  ProtocolCounters c;
  ContactState s = run({}, {{EventKind::Query}, {EventKind::DecisionReady, 1}, {EventKind::Arrived},
                            {EventKind::SensorReply}, {EventKind::Tick}, {EventKind::Tick}},
                       cfg, c);
  EXPECT_EQ(s.phase, Phase::Idle);
  EXPECT_EQ(c.timeouts, 1);
}

TEST(StateMachine, CancelFromQueryAndEnRoute) {
  const ProtocolConfig cfg;
  ProtocolCounters c;
  ContactState s = run({}, {{EventKind::Query}, {EventKind::Cancel}}, cfg, c);
  EXPECT_EQ(s.phase, Phase::Idle);
  s = run(s, {{EventKind::Query}, {EventKind::DecisionReady, 2}, {EventKind::Cancel}}, cfg, c);
  EXPECT_EQ(s.phase, Phase::Idle);
  EXPECT_EQ(s.target_sensor, -1);
  EXPECT_EQ(c.cancelled, 2);
}

TEST(StateMachine, BadInputsRejected) {
  ProtocolCounters c;
  const ContactState querying{Phase::QueryingLLM, -1, 0};
  EXPECT_THROW(advance(querying, Event{EventKind::DecisionReady, -1}, {}, c), std::invalid_argument);
  EXPECT_THROW(advance(ContactState{Phase::Idle, -1, -1}, Event{EventKind::Query}, {}, c), std::invalid_argument);
}

TEST(Status, DeadSensorSendsNothing) {
  SensorState s;
  s.queue_len = 7;
  s.battery_j = 3.5;
  LinkQuality l;
  l.gain_db = 118.0;
  EXPECT_EQ(make_status(s, l), (StatusPayload{3.5, 7, 118.0}));
  s.alive = false;
  EXPECT_THROW(make_status(s, l), std::logic_error);
}

TEST(Codec, RoundTripsEveryKind) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> i(-1000, 100000);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  for (int t = 0; t < 300; ++t) {
    const ProtocolMessage msgs[] = {
        BeaconMsg{i(rng)},
        DataPacketMsg{i(rng), i(rng), {d(rng), i(rng), d(rng)}},
        AckMsg{i(rng), i(rng)},
    };
    for (const auto& m : msgs) EXPECT_EQ(decode(encode(m)), m);
  }
}

TEST(Codec, KnownBeaconBytes) {
  const std::vector<std::uint8_t> expected{'U', 'P', 1, 1, 1, 0, 4, 0, 0x2a, 0, 0, 0};
  EXPECT_EQ(encode(BeaconMsg{42}), expected);
}

TEST(Codec, MalformedInputsRejected) {
  const auto good = encode(DataPacketMsg{1, 2, {3.0, 4, 5.0}});
  for (std::size_t n = 0; n < good.size(); ++n) {
    EXPECT_THROW(decode(std::span(good.data(), n)), std::invalid_argument) << "prefix " << n;
  }
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode(bad), std::invalid_argument);
  bad = good;
  bad[2] = 9;  // version
  EXPECT_THROW(decode(bad), std::invalid_argument);
  bad = good;
  bad[3] = 77;  // kind
  EXPECT_THROW(decode(bad), std::invalid_argument);
  bad = good;
  bad[4] = 4;  // field count
  EXPECT_THROW(decode(bad), std::invalid_argument);
  bad = good;
  bad.push_back(0);  // trailing byte
  EXPECT_THROW(decode(bad), std::invalid_argument);
  bad = good;
  bad[6] = 5;  // first field length
  EXPECT_THROW(decode(bad), std::invalid_argument);
}
