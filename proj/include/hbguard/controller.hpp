#pragma once

// Cloud controller: trusted time authority, per-node accountability ledgers,
// and the periodic verifiers that turn heartbeat anomalies into verdicts.
// Arrival processing classifies (one verdict per heartbeat, precedence
// Response > Timeline > Timeout); periodic sweeps publish.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "hbguard/protocol.hpp"
#include "hbguard/time.hpp"

namespace hbguard {

enum class VerdictKind : std::uint8_t {
  timeline_error,
  timeout_error,
  response_error,
  heartbeat_miss,
};

const char* to_string(VerdictKind kind);

struct DetectionVerdict {
  NodeId node;
  VerdictKind kind = VerdictKind::timeline_error;
  std::optional<std::uint64_t> ordinal;
  Timestamp cc_time{0};  // publication time: sweeps stamp what they flush
};

enum class TrustState : std::uint8_t { trusted, suspect, compromised };

struct CheckConfig {
  std::uint32_t hb_period_ms = 30'000;
  std::uint32_t response_check_ms = 30'000;
  std::uint32_t timeline_check_ms = 30'000;
  std::uint32_t timeout_threshold_ms = 300'000;
  std::uint32_t miss_grace_periods = 3;
};

struct Countermeasure {
  enum class Kind : std::uint8_t { mark_compromised, request_rollback };
  Kind kind = Kind::mark_compromised;
  NodeId target;
};

enum class SweepKind : std::uint8_t { response, timeline, timeout };

struct PendingChallenge {
  Challenge challenge{};
  Timestamp issued_at{0};
};

struct NodeLedger {
  NodeId node;
  NodeRole role;
  // Arrival-ordered accountability window; bounded to 10 * miss_grace_periods
  // entries so long runs stay flat (verdicts, not packets, are the record).
  std::deque<TimelineEntry> entries;
  bool have_max = false;
  Timestamp max_reported_ts{0};
  std::uint64_t max_reported_ordinal = 0;
  std::map<std::uint64_t, PendingChallenge> pending_challenges;  // by down ordinal
  TrustState trust = TrustState::trusted;
  Timestamp registered_at{0};
  std::optional<Timestamp> last_arrival;
  std::optional<Timestamp> last_challenge_at;
  std::uint64_t next_down_ordinal = 1;
  std::unordered_set<std::uint64_t> seen_ordinals;  // every admitted up ordinal
};

struct DuplicateNode : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AccusationRecord {
  NodeId from;
  SignalPayload signal;
};

struct DownDatagram {
  NodeId to;
  HeartbeatMsg msg;
  Bytes wire;
};

class CloudController {
 public:
  CloudController(CheckConfig config, std::uint64_t challenge_seed);

  const CheckConfig& config() const { return config_; }

  // Throws DuplicateNode on re-registration; node 0 is reserved.
  void register_node(NodeId node, AgentKey key, NodeRole role, Timestamp now);

  // Emits a fresh challenge for every node whose previous challenge is at
  // least one heartbeat period old, and records it as pending.
  std::vector<DownDatagram> tick(Timestamp now);

  // Classifies one received datagram. The returned verdict (if any) is also
  // buffered for the next sweep of its kind; sweeps own publication.
  std::optional<DetectionVerdict> on_heartbeat(std::span<const std::uint8_t> wire,
                                               Timestamp receipt_ts);

  // Publishes buffered verdicts of the sweep's kind, stamped with the sweep
  // time. The timeout sweep also emits a HeartbeatMiss per silent node.
  std::vector<DetectionVerdict> sweep(Timestamp now, SweepKind kind);

  // Drains signals extracted from authenticated heartbeats since last call.
  std::vector<AccusationRecord> take_signals();

  // Minimal conservative trust policy over one batch of accusations:
  // mutual guest/host accusations -> both Suspect; a unilateral accusation
  // corroborated by a recent verdict -> Compromised (+ rollback for guests);
  // otherwise -> Suspect.
  std::vector<Countermeasure> resolve_accusations(const std::vector<AccusationRecord>& signals,
                                                  Timestamp now);

  const NodeLedger* ledger(NodeId node) const;
  bool registered(NodeId node) const { return ledgers_.contains(node); }
  std::vector<NodeId> nodes() const;
  TrustState trust(NodeId node) const;
  std::uint64_t unknown_sender_count() const { return unknown_sender_count_; }
  std::uint64_t malformed_count() const { return malformed_count_; }

 private:
  std::optional<DetectionVerdict> classify(const SealedDatagram& dg, Timestamp receipt_ts);
  DetectionVerdict buffer_verdict(NodeId node, VerdictKind kind, std::optional<std::uint64_t> ordinal,
                                  Timestamp receipt_ts);
  bool has_recent_verdict(NodeId node, Timestamp now) const;

  CheckConfig config_;
  std::mt19937_64 challenge_rng_;
  std::map<NodeId, AgentKey> keys_;
  std::map<NodeId, NodeLedger> ledgers_;
  std::vector<DetectionVerdict> pending_response_;
  std::vector<DetectionVerdict> pending_timeline_;
  std::vector<DetectionVerdict> pending_timeout_;
  std::vector<AccusationRecord> signal_queue_;
  std::map<NodeId, std::deque<Timestamp>> recent_verdicts_;
  std::uint64_t unknown_sender_count_ = 0;
  std::uint64_t malformed_count_ = 0;
  std::size_t ledger_window_;
};

}  // namespace hbguard
