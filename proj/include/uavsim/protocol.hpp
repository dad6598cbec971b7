#pragma once

// Per-contact exchange between a UAV and one sensor:
//
//   Idle -Query-> QueryingLLM -DecisionReady-> EnRoute -Arrived-> Beaconing
//   -SensorReply-> Receiving -DataReceived-> Acking -AckSent-> Done -Reset-> Idle
//
// QueryingLLM and EnRoute accept Cancel (no-op decision, contact point not
// reached). Beaconing and Receiving carry a deadline in ticks; the tick that
// exhausts it aborts to Idle and counts a timeout. Every other (phase, event)
// pair is illegal.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <variant>
#include <vector>

#include "uavsim/channel.hpp"
#include "uavsim/types.hpp"

namespace uavsim {

enum class Phase { Idle, QueryingLLM, EnRoute, Beaconing, Receiving, Acking, Done };
enum class EventKind { Query, DecisionReady, Cancel, Arrived, SensorReply, DataReceived, AckSent, Reset, Tick };

inline constexpr Phase kAllPhases[] = {Phase::Idle,      Phase::QueryingLLM, Phase::EnRoute, Phase::Beaconing,
                                       Phase::Receiving, Phase::Acking,      Phase::Done};
inline constexpr EventKind kAllEvents[] = {EventKind::Query,       EventKind::DecisionReady, EventKind::Cancel,
                                           EventKind::Arrived,     EventKind::SensorReply,   EventKind::DataReceived,
                                           EventKind::AckSent,     EventKind::Reset,         EventKind::Tick};

std::string_view to_string(Phase phase);
std::string_view to_string(EventKind event);

struct Event {
  EventKind kind = EventKind::Query;
  int sensor_id = -1;  // DecisionReady only
};

struct ContactState {
  Phase phase = Phase::Idle;
  int target_sensor = -1;
  int deadline = 0;

  friend bool operator==(const ContactState&, const ContactState&) = default;
};

struct ProtocolConfig {
  int beacon_deadline = 2;
  int receive_deadline = 2;
};

struct ProtocolCounters {
  int timeouts = 0;
  int acks_sent = 0;
  int contacts_completed = 0;
  int cancelled = 0;

  friend bool operator==(const ProtocolCounters&, const ProtocolCounters&) = default;
};

class IllegalTransition : public std::logic_error {
 public:
  IllegalTransition(Phase phase, EventKind event);
  Phase phase() const { return phase_; }
  EventKind event() const { return event_; }

 private:
  Phase phase_;
  EventKind event_;
};

enum class Guard { None, DeadlineRemaining, DeadlineExpired };

struct Transition {
  Phase from;
  EventKind event;
  Guard guard;
  Phase to;
};

/// The complete declared relation; advance() accepts exactly these.
std::span<const Transition> declared_transitions();

/// Throws IllegalTransition for undeclared pairs.
ContactState advance(const ContactState& state, const Event& event, const ProtocolConfig& cfg,
                     ProtocolCounters& counters);

struct StatusPayload {
  double battery_j = 0.0;
  int queue_len = 0;
  double gain_db = 0.0;

  friend bool operator==(const StatusPayload&, const StatusPayload&) = default;
};

/// Throws std::logic_error for a dead sensor.
StatusPayload make_status(const SensorState& sensor, const LinkQuality& link);

struct BeaconMsg {
  int sensor_id = 0;
  friend bool operator==(const BeaconMsg&, const BeaconMsg&) = default;
};

struct DataPacketMsg {
  int sensor_id = 0;
  int packet_count = 0;  // readings carried by this transfer
  StatusPayload status;
  friend bool operator==(const DataPacketMsg&, const DataPacketMsg&) = default;
};

struct AckMsg {
  int sensor_id = 0;
  int packet_count = 0;
  friend bool operator==(const AckMsg&, const AckMsg&) = default;
};

using ProtocolMessage = std::variant<BeaconMsg, DataPacketMsg, AckMsg>;

/// Byte layout (little endian), see docs/protocol.md:
///   'U' 'P' | version u8 = 1 | kind u8 | field count u16 | fields...
/// each field is a u16 length followed by that many payload bytes.
std::vector<std::uint8_t> encode(const ProtocolMessage& msg);

/// Throws std::invalid_argument on any malformed input.
ProtocolMessage decode(std::span<const std::uint8_t> bytes);

}  // namespace uavsim
