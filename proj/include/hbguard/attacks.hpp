#pragma once

// Adversary catalogue and the executable encoding of the four resiliency
// matrices: every (forgeable, malicious-host, malicious-guest, protected
// timeline) cell maps to an expected detection outcome, and each cell has a
// deterministic attack script for conformance runs.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hbguard/protocol.hpp"
#include "hbguard/time.hpp"

namespace hbguard {

struct AttackKind {
  enum class Kind : std::uint8_t {
    clock_jump,
    clock_skew,
    suppress_heartbeats,
    forge_response,
    replay_heartbeat,
    agent_shutdown,
    host_forges_guest,
    host_suppresses_guest_traffic,
  };

  Kind kind = Kind::clock_jump;
  std::int64_t delta_ms = 0;  // clock_jump: != 0
  ClockRate rate;             // clock_skew: > 0 and != 1

  static AttackKind clock_jump(std::int64_t delta_ms);
  static AttackKind clock_skew(ClockRate rate);
  static AttackKind simple(Kind kind) { return AttackKind{kind, 0, ClockRate{}}; }

  const char* name() const;
};

struct InapplicableAttack : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ProtectedTimeline : std::uint8_t { guest_time, host_time };

struct ScenarioCell {
  bool forgeable = false;
  bool host_malicious = false;
  bool guest_malicious = false;
  ProtectedTimeline protecting = ProtectedTimeline::guest_time;

  // Canonical id, e.g. "u-guest-hm-gh": unforgeable agents, guest-time
  // resiliency, malicious host, honest guest.
  std::string id() const;
  static std::optional<ScenarioCell> from_id(std::string_view id);
  static std::vector<ScenarioCell> all();  // the 16 cells, fixed order

  friend bool operator==(const ScenarioCell&, const ScenarioCell&) = default;
};

enum class DetectionOutcome : std::uint8_t { detected, not_detected, trivially_clean };

struct DetectionChannels {
  bool guest_signal = false;
  bool host_signal = false;
  bool cc_verdict = false;
  bool heartbeat_miss = false;

  bool any() const { return guest_signal || host_signal || cc_verdict || heartbeat_miss; }
  bool intersects(const DetectionChannels& other) const {
    return (guest_signal && other.guest_signal) || (host_signal && other.host_signal) ||
           (cc_verdict && other.cc_verdict) || (heartbeat_miss && other.heartbeat_miss);
  }
  std::string to_string() const;

  friend bool operator==(const DetectionChannels&, const DetectionChannels&) = default;
};

struct DetectionExpectation {
  DetectionOutcome outcome = DetectionOutcome::trivially_clean;
  DetectionChannels via;
  // The honest-host/malicious-guest cells under forgeable agents: detection
  // is achieved but the controller cannot prove which party lies, so trust
  // resolution stays at Suspect.
  bool ambiguous_trust = false;

  friend bool operator==(const DetectionExpectation&, const DetectionExpectation&) = default;
};

// Total over the 16 cells.
DetectionExpectation scenario_expectation(const ScenarioCell& cell);

// One scripted attack step of a conformance scenario.
struct ScenarioStep {
  Timestamp at{0};
  bool targets_guest = false;  // else the host
  AttackKind attack;
};

// Deterministic attack script for a cell over the given horizon: one primary
// attack at 25% of the horizon; both-malicious cells add a guest agent
// shutdown at 50% so heartbeat loss is exercised too.
std::vector<ScenarioStep> scenario_script(const ScenarioCell& cell, Timestamp horizon);

// Human-readable catalogue row, used for the audited fixture file.
std::string catalogue_line(const ScenarioCell& cell);

const char* to_string(DetectionOutcome outcome);

}  // namespace hbguard
