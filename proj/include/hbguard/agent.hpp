#pragma once

// Guest/host time-controller state machine. Hosts and guests share the same
// implementation; a guest just knows which host exposes its clock. Agents are
// challenge-driven: one Up per authenticated Down, no unsolicited sends.

#include <cstdint>
#include <optional>

#include "hbguard/attacks.hpp"
#include "hbguard/protocol.hpp"
#include "hbguard/time.hpp"

namespace hbguard {

enum class Behavior : std::uint8_t {
  honest,
  suppress_heartbeats,
  tampered_clock,
  forge_responses,
  shutdown,
};

inline constexpr std::uint32_t kDefaultProbeToleranceMs = 1000;

struct AgentAction {
  std::optional<HeartbeatMsg> up;  // empty == stayed silent
};

class Agent {
 public:
  Agent(NodeId node, NodeRole role, AgentKey key, bool forgeable);

  NodeId node() const { return node_; }
  const NodeRole& role() const { return role_; }
  const AgentKey& key() const { return key_; }
  bool forgeable() const { return forgeable_; }
  Behavior behavior() const { return behavior_; }
  std::uint64_t next_ordinal() const { return next_ordinal_; }

  // Machine time: what the box actually runs on, and what an external probe
  // of its time services observes.
  Timestamp machine_read(Timestamp now) const { return clock_.read(now); }
  const VirtualClock& clock() const { return clock_; }

  // Reporting time: equals machine time unless the agent has been forged, in
  // which case a pristine clock backs the fabricated reports.
  Timestamp report_read(Timestamp now) const;
  bool forged() const { return forged_; }

  // Handles an authenticated, decoded Down. Honest agents answer with a tag
  // over (challenge, ordinal, perceived time), attach any pending signal, and
  // flag a local anomaly first if their own reading went backwards.
  AgentAction on_challenge(const HeartbeatMsg& down, Timestamp now);

  // Full datagram path: open + decode + on_challenge + seal. Invalid or
  // foreign datagrams are dropped silently.
  std::optional<Bytes> handle_datagram(std::span<const std::uint8_t> wire, Timestamp now);

  // Guest-side probe of the host clock (or host-side probe of a guest).
  // Fires strictly above the tolerance; the returned payload accuses `other`.
  std::optional<SignalPayload> cross_probe(NodeId other, Timestamp other_reading, Timestamp now,
                                           std::uint32_t tolerance_ms = kDefaultProbeToleranceMs) const;

  void queue_signal(const SignalPayload& signal);

  // Installs the behavior/clock effect of an attack. Throws InapplicableAttack
  // for host-only attacks on guests and vice versa, and for forging an
  // unforgeable agent.
  void apply_compromise(const AttackKind& attack, Timestamp now);

  // The host clock is a guest's time source; host changes propagate.
  void propagate_clock(const VirtualClock& host_clock) { clock_ = host_clock; }

  // Forged reporting: fabricated heartbeats from a pristine clock, and no
  // signals ever leave the agent.
  void forge_reports();

  // Oracle-driven transient outage: skip every exchange before `until`.
  void skip_exchanges_until(Timestamp until) { skip_until_ = until; }

  // Countermeasure hook: snapshot restore back to the registered state.
  void rollback();

  bool suppresses_guest_traffic() const { return suppress_guest_traffic_; }

 private:
  ResponseTag forged_tag(const Challenge& challenge, std::uint64_t ordinal, Timestamp perceived);

  NodeId node_;
  NodeRole role_;
  AgentKey key_;
  bool forgeable_;

  VirtualClock clock_;
  VirtualClock pristine_clock_;
  Behavior behavior_ = Behavior::honest;
  bool forged_ = false;
  bool suppress_guest_traffic_ = false;

  std::uint64_t next_ordinal_ = 1;
  std::optional<SignalPayload> pending_signal_;
  std::optional<Timestamp> last_reading_;
  std::optional<Timestamp> skip_until_;

  std::uint64_t forge_rng_state_;
};

}  // namespace hbguard
