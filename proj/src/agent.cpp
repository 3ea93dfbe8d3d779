#include "hbguard/agent.hpp"

namespace hbguard {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Agent::Agent(NodeId node, NodeRole role, AgentKey key, bool forgeable)
    : node_(node),
      role_(role),
      key_(std::move(key)),
      forgeable_(forgeable),
      forge_rng_state_(0x61676e74ULL ^ node.value) {}

Timestamp Agent::report_read(Timestamp now) const {
  return forged_ ? pristine_clock_.read(now) : clock_.read(now);
}

AgentAction Agent::on_challenge(const HeartbeatMsg& down, Timestamp now) {
  AgentAction action;
  if (behavior_ == Behavior::shutdown || behavior_ == Behavior::suppress_heartbeats) {
    return action;
  }
  if (skip_until_ && now < *skip_until_) {
    return action;
  }

  const Timestamp perceived = report_read(now);

  // Local anomaly probe: an agent's own timeline never runs backwards unless
  // someone moved the clock under it. Forged agents report nothing.
  if (!forged_ && last_reading_ && perceived < *last_reading_ && !pending_signal_) {
    pending_signal_ = SignalPayload::accusation(SignalCode::agent_local_anomaly, node_);
  }
  last_reading_ = perceived;

  HeartbeatMsg up;
  up.direction = Direction::up;
  up.ordinal = next_ordinal_++;
  up.challenge = down.challenge;
  up.timestamp = perceived;
  if (behavior_ == Behavior::forge_responses) {
    up.response_tag = forged_tag(down.challenge, up.ordinal, perceived);
  } else {
    up.response_tag = compute_response_tag(key_, down.challenge, up.ordinal, perceived);
  }
  if (pending_signal_) {
    up.signal = *pending_signal_;
    pending_signal_.reset();
  }
  action.up = std::move(up);
  return action;
}

std::optional<Bytes> Agent::handle_datagram(std::span<const std::uint8_t> wire, Timestamp now) {
  const auto dg = decode_datagram(wire);
  if (!dg) return std::nullopt;
  const OpenResult opened = open(key_, *dg);
  if (!opened.ok()) return std::nullopt;
  const auto msg = decode_heartbeat(opened.plaintext);
  if (!msg || msg->direction != Direction::down) return std::nullopt;

  const AgentAction action = on_challenge(*msg, now);
  if (!action.up) return std::nullopt;
  AgentKey send_key = key_;
  send_key.node = node_;
  return encode_datagram(
      seal(send_key, derive_nonce(Direction::up, action.up->ordinal), encode_heartbeat(*action.up)));
}

std::optional<SignalPayload> Agent::cross_probe(NodeId other, Timestamp other_reading, Timestamp now,
                                                std::uint32_t tolerance_ms) const {
  if (behavior_ == Behavior::shutdown || forged_) return std::nullopt;
  const std::int64_t diff = machine_read(now) - other_reading;
  const std::int64_t magnitude = diff < 0 ? -diff : diff;
  if (magnitude <= static_cast<std::int64_t>(tolerance_ms)) return std::nullopt;
  const SignalCode code = role_.cls == NodeClass::guest
                              ? SignalCode::guest_reports_host_compromised
                              : SignalCode::host_reports_guest_compromised;
  return SignalPayload::accusation(code, other);
}

void Agent::queue_signal(const SignalPayload& signal) {
  if (forged_ || behavior_ == Behavior::shutdown) return;
  if (!pending_signal_) pending_signal_ = signal;
}

void Agent::apply_compromise(const AttackKind& attack, Timestamp now) {
  switch (attack.kind) {
    case AttackKind::Kind::clock_jump:
      clock_ = clock_.tampered(TamperAction::jump(attack.delta_ms), now);
      if (behavior_ == Behavior::honest) behavior_ = Behavior::tampered_clock;
      break;
    case AttackKind::Kind::clock_skew:
      clock_ = clock_.tampered(TamperAction::rate_change(attack.rate), now);
      if (behavior_ == Behavior::honest) behavior_ = Behavior::tampered_clock;
      break;
    case AttackKind::Kind::suppress_heartbeats:
      if (behavior_ != Behavior::shutdown) behavior_ = Behavior::suppress_heartbeats;
      break;
    case AttackKind::Kind::forge_response:
      if (behavior_ != Behavior::shutdown) behavior_ = Behavior::forge_responses;
      break;
    case AttackKind::Kind::agent_shutdown:
      behavior_ = Behavior::shutdown;
      break;
    case AttackKind::Kind::replay_heartbeat:
      // Replay is a network-level act; the world re-delivers captured bytes.
      break;
    case AttackKind::Kind::host_forges_guest:
      if (role_.cls != NodeClass::guest) {
        throw InapplicableAttack("host_forges_guest targets a guest agent");
      }
      if (!forgeable_) {
        throw InapplicableAttack("guest agent is not forgeable");
      }
      forge_reports();
      break;
    case AttackKind::Kind::host_suppresses_guest_traffic:
      if (role_.cls != NodeClass::host) {
        throw InapplicableAttack("host_suppresses_guest_traffic targets a host agent");
      }
      suppress_guest_traffic_ = true;
      break;
  }
}

void Agent::forge_reports() {
  forged_ = true;
  pending_signal_.reset();
}

void Agent::rollback() {
  clock_ = pristine_clock_;
  behavior_ = Behavior::honest;
  forged_ = false;
  suppress_guest_traffic_ = false;
  pending_signal_.reset();
  last_reading_.reset();
}

ResponseTag Agent::forged_tag(const Challenge& challenge, std::uint64_t ordinal,
                              Timestamp perceived) {
  ResponseTag tag;
  for (std::size_t i = 0; i < tag.size(); i += 8) {
    const std::uint64_t r = splitmix64(forge_rng_state_);
    for (std::size_t j = 0; j < 8; ++j) tag[i + j] = static_cast<std::uint8_t>(r >> (8 * j));
  }
  // A random tag collides with the real one with probability 2^-128; make
  // the invalidity unconditional anyway.
  if (tag == compute_response_tag(key_, challenge, ordinal, perceived)) {
    tag[0] ^= 0x01;
  }
  return tag;
}

}  // namespace hbguard
