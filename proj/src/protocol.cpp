#include "uavsim/protocol.hpp"

#include <array>
#include <bit>
#include <string>

namespace uavsim {

namespace {

constexpr Transition kTable[] = {
    {Phase::Idle, EventKind::Query, Guard::None, Phase::QueryingLLM},
    {Phase::QueryingLLM, EventKind::DecisionReady, Guard::None, Phase::EnRoute},
    {Phase::QueryingLLM, EventKind::Cancel, Guard::None, Phase::Idle},
    {Phase::EnRoute, EventKind::Arrived, Guard::None, Phase::Beaconing},
    {Phase::EnRoute, EventKind::Cancel, Guard::None, Phase::Idle},
    {Phase::Beaconing, EventKind::SensorReply, Guard::None, Phase::Receiving},
    {Phase::Beaconing, EventKind::Tick, Guard::DeadlineRemaining, Phase::Beaconing},
    {Phase::Beaconing, EventKind::Tick, Guard::DeadlineExpired, Phase::Idle},
    {Phase::Receiving, EventKind::DataReceived, Guard::None, Phase::Acking},
    {Phase::Receiving, EventKind::Tick, Guard::DeadlineRemaining, Phase::Receiving},
    {Phase::Receiving, EventKind::Tick, Guard::DeadlineExpired, Phase::Idle},
    {Phase::Acking, EventKind::AckSent, Guard::None, Phase::Done},
    {Phase::Done, EventKind::Reset, Guard::None, Phase::Idle},
};

constexpr std::uint8_t kMagic0 = 'U';
constexpr std::uint8_t kMagic1 = 'P';
constexpr std::uint8_t kVersion = 1;

enum class Kind : std::uint8_t { Beacon = 1, DataPacket = 2, Ack = 3 };

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xff));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void field_i32(std::int32_t v) {
    u16(4);
    const auto u = static_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void field_f64(double v) {
    u16(8);
    const auto u = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    const std::uint16_t hi = u8();
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  std::int32_t field_i32() {
    if (u16() != 4) throw std::invalid_argument("protocol: integer field must be 4 bytes");
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return static_cast<std::int32_t>(u);
  }
  double field_f64() {
    if (u16() != 8) throw std::invalid_argument("protocol: float field must be 8 bytes");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return std::bit_cast<double>(u);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::invalid_argument("protocol: message truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Idle: return "Idle";
    case Phase::QueryingLLM: return "QueryingLLM";
    case Phase::EnRoute: return "EnRoute";
    case Phase::Beaconing: return "Beaconing";
    case Phase::Receiving: return "Receiving";
    case Phase::Acking: return "Acking";
    case Phase::Done: return "Done";
  }
  return "?";
}

std::string_view to_string(EventKind event) {
  switch (event) {
    case EventKind::Query: return "Query";
    case EventKind::DecisionReady: return "DecisionReady";
    case EventKind::Cancel: return "Cancel";
    case EventKind::Arrived: return "Arrived";
    case EventKind::SensorReply: return "SensorReply";
    case EventKind::DataReceived: return "DataReceived";
    case EventKind::AckSent: return "AckSent";
    case EventKind::Reset: return "Reset";
    case EventKind::Tick: return "Tick";
  }
  return "?";
}

IllegalTransition::IllegalTransition(Phase phase, EventKind event)
    : std::logic_error("illegal transition: " + std::string(to_string(event)) + " in phase " +
                       std::string(to_string(phase))),
      phase_(phase),
      event_(event) {}

std::span<const Transition> declared_transitions() { return kTable; }

ContactState advance(const ContactState& state, const Event& event, const ProtocolConfig& cfg,
                     ProtocolCounters& counters) {
  if (state.deadline < 0) throw std::invalid_argument("contact deadline must be non-negative");
  const Guard guard = event.kind != EventKind::Tick ? Guard::None
                      : state.deadline > 1         ? Guard::DeadlineRemaining
                                                   : Guard::DeadlineExpired;
  const Transition* match = nullptr;
  for (const Transition& t : kTable) {
    if (t.from == state.phase && t.event == event.kind && t.guard == guard) {
      match = &t;
      break;
    }
  }
  if (!match) throw IllegalTransition(state.phase, event.kind);

  ContactState next = state;
  next.phase = match->to;
  switch (event.kind) {
    case EventKind::Query:
      next.target_sensor = -1;
      next.deadline = 0;
      break;
    case EventKind::DecisionReady:
      if (event.sensor_id < 0) throw std::invalid_argument("DecisionReady needs a sensor id");
      next.target_sensor = event.sensor_id;
      break;
    case EventKind::Cancel:
      ++counters.cancelled;
      next.target_sensor = -1;
      next.deadline = 0;
      break;
    case EventKind::Arrived:
      next.deadline = cfg.beacon_deadline;
      break;
    case EventKind::SensorReply:
      next.deadline = cfg.receive_deadline;
      break;
    case EventKind::DataReceived:
      next.deadline = 0;
      break;
    case EventKind::AckSent:
      ++counters.acks_sent;
      break;
    case EventKind::Reset:
      ++counters.contacts_completed;
      next.target_sensor = -1;
      break;
    case EventKind::Tick:
      if (guard == Guard::DeadlineRemaining) {
        --next.deadline;
      } else {
        ++counters.timeouts;
        next.deadline = 0;
        next.target_sensor = -1;
      }
      break;
  }
  return next;
}

StatusPayload make_status(const SensorState& sensor, const LinkQuality& link) {
  if (!sensor.alive) throw std::logic_error("dead sensors send no status");
  return {sensor.battery_j, sensor.queue_len, link.gain_db};
}

std::vector<std::uint8_t> encode(const ProtocolMessage& msg) {
  Writer w;
  w.u8(kMagic0);
  w.u8(kMagic1);
  w.u8(kVersion);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BeaconMsg>) {
          w.u8(static_cast<std::uint8_t>(Kind::Beacon));
          w.u16(1);
          w.field_i32(m.sensor_id);
        } else if constexpr (std::is_same_v<T, DataPacketMsg>) {
          w.u8(static_cast<std::uint8_t>(Kind::DataPacket));
          w.u16(5);
          w.field_i32(m.sensor_id);
          w.field_i32(m.packet_count);
          w.field_f64(m.status.battery_j);
          w.field_i32(m.status.queue_len);
          w.field_f64(m.status.gain_db);
        } else {
          w.u8(static_cast<std::uint8_t>(Kind::Ack));
          w.u16(2);
          w.field_i32(m.sensor_id);
          w.field_i32(m.packet_count);
        }
      },
      msg);
  return w.take();
}

ProtocolMessage decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.u8() != kMagic0 || r.u8() != kMagic1) throw std::invalid_argument("protocol: bad magic");
  if (r.u8() != kVersion) throw std::invalid_argument("protocol: unsupported version");
  const auto kind = static_cast<Kind>(r.u8());
  const std::uint16_t fields = r.u16();
  ProtocolMessage msg;
  switch (kind) {
    case Kind::Beacon:
      if (fields != 1) throw std::invalid_argument("protocol: beacon carries 1 field");
      msg = BeaconMsg{r.field_i32()};
      break;
    case Kind::DataPacket: {
      if (fields != 5) throw std::invalid_argument("protocol: data packet carries 5 fields");
      DataPacketMsg d;
      d.sensor_id = r.field_i32();
      d.packet_count = r.field_i32();
      d.status.battery_j = r.field_f64();
      d.status.queue_len = r.field_i32();
      d.status.gain_db = r.field_f64();
      msg = d;
      break;
    }
    case Kind::Ack: {
      if (fields != 2) throw std::invalid_argument("protocol: ack carries 2 fields");
      AckMsg a;
      a.sensor_id = r.field_i32();
      a.packet_count = r.field_i32();
      msg = a;
      break;
    }
    default:
      throw std::invalid_argument("protocol: unknown message kind");
  }
  if (!r.done()) throw std::invalid_argument("protocol: trailing bytes");
  return msg;
}

}  // namespace uavsim
