#include "hbguard/controller.hpp"

#include <algorithm>

namespace hbguard {

const char* to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::timeline_error: return "Timeline";
    case VerdictKind::timeout_error: return "Timeout";
    case VerdictKind::response_error: return "Response";
    case VerdictKind::heartbeat_miss: return "HeartbeatMiss";
  }
  return "unknown";
}

CloudController::CloudController(CheckConfig config, std::uint64_t challenge_seed)
    : config_(config),
      challenge_rng_(challenge_seed),
      ledger_window_(static_cast<std::size_t>(10) * config.miss_grace_periods) {
  if (config_.hb_period_ms == 0 || config_.response_check_ms == 0 ||
      config_.timeline_check_ms == 0 || config_.timeout_threshold_ms == 0 ||
      config_.miss_grace_periods == 0) {
    throw std::invalid_argument("check intervals must be positive");
  }
  if (config_.timeout_threshold_ms <= config_.hb_period_ms) {
    throw std::invalid_argument("timeout threshold must exceed the heartbeat period");
  }
}

void CloudController::register_node(NodeId node, AgentKey key, NodeRole role, Timestamp now) {
  if (node == kControllerId) {
    throw DuplicateNode("node id 0 is reserved for the controller");
  }
  if (ledgers_.contains(node)) {
    throw DuplicateNode("node already registered");
  }
  keys_.emplace(node, std::move(key));
  NodeLedger ledger;
  ledger.node = node;
  ledger.role = role;
  ledger.registered_at = now;
  ledgers_.emplace(node, std::move(ledger));
}

std::vector<DownDatagram> CloudController::tick(Timestamp now) {
  std::vector<DownDatagram> out;
  for (auto& [node, ledger] : ledgers_) {
    if (ledger.last_challenge_at &&
        now - *ledger.last_challenge_at < static_cast<std::int64_t>(config_.hb_period_ms)) {
      continue;
    }
    HeartbeatMsg down;
    down.direction = Direction::down;
    down.ordinal = ledger.next_down_ordinal++;
    for (auto& byte : down.challenge) {
      byte = static_cast<std::uint8_t>(challenge_rng_());
    }
    down.timestamp = now;

    ledger.pending_challenges.emplace(down.ordinal, PendingChallenge{down.challenge, now});
    ledger.last_challenge_at = now;

    const AgentKey& key = keys_.at(node);
    AgentKey cc_key = key;
    cc_key.node = kControllerId;
    Bytes wire = encode_datagram(
        seal(cc_key, derive_nonce(Direction::down, down.ordinal), encode_heartbeat(down)));
    out.push_back({node, std::move(down), std::move(wire)});
  }
  return out;
}

std::optional<DetectionVerdict> CloudController::on_heartbeat(std::span<const std::uint8_t> wire,
                                                              Timestamp receipt_ts) {
  const auto dg = decode_datagram(wire);
  if (!dg) {
    // Sender unrecoverable; nothing to bind a verdict to.
    ++malformed_count_;
    return std::nullopt;
  }
  if (!ledgers_.contains(dg->sender)) {
    ++unknown_sender_count_;
    return std::nullopt;
  }
  return classify(*dg, receipt_ts);
}

std::optional<DetectionVerdict> CloudController::classify(const SealedDatagram& dg,
                                                          Timestamp receipt_ts) {
  NodeLedger& ledger = ledgers_.at(dg.sender);
  const AgentKey& key = keys_.at(dg.sender);

  const OpenResult opened = open(key, dg);
  if (!opened.ok()) {
    return buffer_verdict(dg.sender, VerdictKind::response_error, std::nullopt, receipt_ts);
  }
  const auto msg = decode_heartbeat(opened.plaintext);
  if (!msg || msg->direction != Direction::up) {
    return buffer_verdict(dg.sender, VerdictKind::response_error, std::nullopt, receipt_ts);
  }

  // Pair the response with its challenge via the echoed challenge bytes.
  auto pending = ledger.pending_challenges.end();
  for (auto it = ledger.pending_challenges.begin(); it != ledger.pending_challenges.end(); ++it) {
    if (it->second.challenge == msg->challenge) {
      pending = it;
      break;
    }
  }
  if (pending == ledger.pending_challenges.end() ||
      !verify_response_tag(key, msg->challenge, msg->ordinal, msg->timestamp,
                           msg->response_tag)) {
    // Forged timestamps must not contaminate the ledger.
    return buffer_verdict(dg.sender, VerdictKind::response_error, msg->ordinal, receipt_ts);
  }
  const Timestamp issued_at = pending->second.issued_at;
  ledger.pending_challenges.erase(pending);

  ledger.last_arrival = receipt_ts;
  if (msg->signal.code != SignalCode::none) {
    signal_queue_.push_back({dg.sender, msg->signal});
  }

  std::optional<DetectionVerdict> verdict;
  if (!ledger.seen_ordinals.insert(msg->ordinal).second) {
    // Replayed ordinals are evidence, never an update; the entry is dropped.
    verdict = buffer_verdict(dg.sender, VerdictKind::timeline_error, msg->ordinal, receipt_ts);
  } else {
    ledger.entries.push_back({msg->ordinal, msg->timestamp, receipt_ts});
    if (ledger.entries.size() > ledger_window_) ledger.entries.pop_front();

    if (ledger.have_max && msg->timestamp <= ledger.max_reported_ts) {
      verdict = buffer_verdict(dg.sender, VerdictKind::timeline_error, msg->ordinal, receipt_ts);
    } else if (receipt_ts - issued_at > static_cast<std::int64_t>(config_.timeout_threshold_ms)) {
      // The packet did arrive, but only after the threshold expired.
      verdict = buffer_verdict(dg.sender, VerdictKind::timeout_error, msg->ordinal, receipt_ts);
    }
    if (!ledger.have_max || msg->timestamp > ledger.max_reported_ts) {
      ledger.have_max = true;
      ledger.max_reported_ts = msg->timestamp;
      ledger.max_reported_ordinal = msg->ordinal;
    }
  }
  return verdict;
}

DetectionVerdict CloudController::buffer_verdict(NodeId node, VerdictKind kind,
                                                 std::optional<std::uint64_t> ordinal,
                                                 Timestamp receipt_ts) {
  DetectionVerdict verdict{node, kind, ordinal, receipt_ts};
  switch (kind) {
    case VerdictKind::response_error:
      pending_response_.push_back(verdict);
      break;
    case VerdictKind::timeline_error:
      pending_timeline_.push_back(verdict);
      break;
    case VerdictKind::timeout_error:
    case VerdictKind::heartbeat_miss:
      pending_timeout_.push_back(verdict);
      break;
  }
  auto& recent = recent_verdicts_[node];
  recent.push_back(receipt_ts);
  if (recent.size() > 64) recent.pop_front();
  return verdict;
}

std::vector<DetectionVerdict> CloudController::sweep(Timestamp now, SweepKind kind) {
  std::vector<DetectionVerdict>* bucket = nullptr;
  switch (kind) {
    case SweepKind::response: bucket = &pending_response_; break;
    case SweepKind::timeline: bucket = &pending_timeline_; break;
    case SweepKind::timeout: bucket = &pending_timeout_; break;
  }
  std::vector<DetectionVerdict> published = std::move(*bucket);
  bucket->clear();
  for (auto& verdict : published) verdict.cc_time = now;

  if (kind == SweepKind::timeout) {
    // Continued silence: a challenge has gone unanswered past the grace
    // window and nothing at all has arrived in that span.
    const std::int64_t grace =
        static_cast<std::int64_t>(config_.miss_grace_periods) * config_.hb_period_ms;
    for (auto& [node, ledger] : ledgers_) {
      if (ledger.pending_challenges.empty()) continue;
      const Timestamp oldest = ledger.pending_challenges.begin()->second.issued_at;
      if (now - oldest <= grace) continue;
      const Timestamp last_seen = ledger.last_arrival.value_or(ledger.registered_at);
      if (now - last_seen <= grace) continue;
      published.push_back({node, VerdictKind::heartbeat_miss, std::nullopt, now});
      auto& recent = recent_verdicts_[node];
      recent.push_back(now);
      if (recent.size() > 64) recent.pop_front();
    }
  }
  return published;
}

std::vector<AccusationRecord> CloudController::take_signals() {
  std::vector<AccusationRecord> out = std::move(signal_queue_);
  signal_queue_.clear();
  return out;
}

bool CloudController::has_recent_verdict(NodeId node, Timestamp now) const {
  const auto it = recent_verdicts_.find(node);
  if (it == recent_verdicts_.end()) return false;
  const std::int64_t window = config_.timeout_threshold_ms;
  for (const Timestamp t : it->second) {
    if (now - t <= window && t <= now) return true;
  }
  return false;
}

std::vector<Countermeasure> CloudController::resolve_accusations(
    const std::vector<AccusationRecord>& signals, Timestamp now) {
  struct Accusation {
    NodeId accuser;
    NodeId accused;
  };
  std::vector<Accusation> accusations;
  for (const AccusationRecord& record : signals) {
    const auto it = ledgers_.find(record.from);
    if (it == ledgers_.end()) continue;
    std::optional<NodeId> accused = record.signal.accused();
    switch (record.signal.code) {
      case SignalCode::guest_reports_host_compromised:
        if (!accused) accused = it->second.role.host;
        break;
      case SignalCode::host_reports_guest_compromised:
        if (!accused) continue;  // host accusations must name the guest
        break;
      case SignalCode::agent_local_anomaly:
        accused = record.from;  // self-report: my own timeline broke
        break;
      case SignalCode::none:
        continue;
    }
    if (!accused || !ledgers_.contains(*accused)) continue;
    accusations.push_back({record.from, *accused});
  }

  auto mark = [this](NodeId node, TrustState state) {
    NodeLedger& ledger = ledgers_.at(node);
    if (state == TrustState::suspect && ledger.trust == TrustState::compromised) return;
    ledger.trust = state;
  };

  std::vector<Countermeasure> out;
  std::vector<bool> handled(accusations.size(), false);
  for (std::size_t i = 0; i < accusations.size(); ++i) {
    if (handled[i]) continue;
    // Mutual accusation: the safe default is to trust neither.
    bool mutual = false;
    for (std::size_t j = i + 1; j < accusations.size(); ++j) {
      if (handled[j]) continue;
      if (accusations[j].accuser == accusations[i].accused &&
          accusations[j].accused == accusations[i].accuser) {
        mutual = true;
        handled[j] = true;
      }
    }
    handled[i] = true;
    if (mutual) {
      mark(accusations[i].accuser, TrustState::suspect);
      mark(accusations[i].accused, TrustState::suspect);
      continue;
    }
    const NodeId accused = accusations[i].accused;
    if (has_recent_verdict(accused, now)) {
      mark(accused, TrustState::compromised);
      out.push_back({Countermeasure::Kind::mark_compromised, accused});
      if (ledgers_.at(accused).role.cls == NodeClass::guest) {
        out.push_back({Countermeasure::Kind::request_rollback, accused});
      }
    } else {
      mark(accused, TrustState::suspect);
    }
  }
  return out;
}

const NodeLedger* CloudController::ledger(NodeId node) const {
  const auto it = ledgers_.find(node);
  return it == ledgers_.end() ? nullptr : &it->second;
}

std::vector<NodeId> CloudController::nodes() const {
  std::vector<NodeId> out;
  out.reserve(ledgers_.size());
  for (const auto& [node, ledger] : ledgers_) out.push_back(node);
  return out;
}

TrustState CloudController::trust(NodeId node) const {
  const auto it = ledgers_.find(node);
  return it == ledgers_.end() ? TrustState::trusted : it->second.trust;
}

}  // namespace hbguard
