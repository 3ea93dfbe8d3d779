#include "hbguard/attacks.hpp"

#include <sstream>

namespace hbguard {

AttackKind AttackKind::clock_jump(std::int64_t delta_ms) {
  if (delta_ms == 0) throw std::invalid_argument("clock jump delta must be non-zero");
  return AttackKind{Kind::clock_jump, delta_ms, ClockRate{}};
}

AttackKind AttackKind::clock_skew(ClockRate rate) {
  if (!rate.positive() || rate == ClockRate{}) {
    throw std::invalid_argument("clock skew rate must be > 0 and != 1");
  }
  return AttackKind{Kind::clock_skew, 0, rate};
}

const char* AttackKind::name() const {
  switch (kind) {
    case Kind::clock_jump: return "clock_jump";
    case Kind::clock_skew: return "clock_skew";
    case Kind::suppress_heartbeats: return "suppress_heartbeats";
    case Kind::forge_response: return "forge_response";
    case Kind::replay_heartbeat: return "replay_heartbeat";
    case Kind::agent_shutdown: return "agent_shutdown";
    case Kind::host_forges_guest: return "host_forges_guest";
    case Kind::host_suppresses_guest_traffic: return "host_suppresses_guest_traffic";
  }
  return "unknown";
}

std::string ScenarioCell::id() const {
  std::string out = forgeable ? "f-" : "u-";
  out += protecting == ProtectedTimeline::guest_time ? "guest-" : "host-";
  out += host_malicious ? "hm-" : "hh-";
  out += guest_malicious ? "gm" : "gh";
  return out;
}

std::optional<ScenarioCell> ScenarioCell::from_id(std::string_view id) {
  for (const ScenarioCell& cell : all()) {
    if (cell.id() == id) return cell;
  }
  return std::nullopt;
}

std::vector<ScenarioCell> ScenarioCell::all() {
  std::vector<ScenarioCell> cells;
  cells.reserve(16);
  for (bool forgeable : {false, true}) {
    for (ProtectedTimeline protecting : {ProtectedTimeline::guest_time, ProtectedTimeline::host_time}) {
      for (bool host_malicious : {true, false}) {
        for (bool guest_malicious : {true, false}) {
          cells.push_back({forgeable, host_malicious, guest_malicious, protecting});
        }
      }
    }
  }
  return cells;
}

std::string DetectionChannels::to_string() const {
  std::string out;
  auto add = [&out](const char* name) {
    if (!out.empty()) out += ',';
    out += name;
  };
  if (guest_signal) add("guest_signal");
  if (host_signal) add("host_signal");
  if (cc_verdict) add("cc_verdict");
  if (heartbeat_miss) add("heartbeat_miss");
  if (out.empty()) out = "-";
  return out;
}

const char* to_string(DetectionOutcome outcome) {
  switch (outcome) {
    case DetectionOutcome::detected: return "Detected";
    case DetectionOutcome::not_detected: return "NotDetected";
    case DetectionOutcome::trivially_clean: return "TriviallyClean";
  }
  return "unknown";
}

DetectionExpectation scenario_expectation(const ScenarioCell& cell) {
  DetectionExpectation exp;

  if (!cell.host_malicious && !cell.guest_malicious) {
    exp.outcome = DetectionOutcome::trivially_clean;  // "Ok by definition"
    return exp;
  }

  if (!cell.forgeable) {
    // A malicious guest has no privilege over the host clock; with host-time
    // resiliency in question and an honest host there is nothing to detect.
    if (cell.protecting == ProtectedTimeline::host_time && !cell.host_malicious) {
      exp.outcome = DetectionOutcome::trivially_clean;
      return exp;
    }
    exp.outcome = DetectionOutcome::detected;
    if (cell.host_malicious && cell.guest_malicious) {
      // Both agents report, and the shut-down agent shows up as heartbeat loss.
      exp.via = {true, true, false, true};
    } else if (cell.host_malicious) {
      // Guest agent notices the propagated alteration; the controller sees the
      // broken timeline as well.
      exp.via = {true, false, true, false};
    } else {
      // Host-side probe catches the guest; the controller sees the timeline.
      exp.via = {false, true, true, false};
    }
    return exp;
  }

  // Forgeable agents: a malicious host owns every key on the box and forges
  // all reports, so nothing it touches is detectable.
  if (cell.host_malicious) {
    exp.outcome = DetectionOutcome::not_detected;
    return exp;
  }
  // Honest host, malicious guest: detected, but the guest agent may lie about
  // the host, so the controller can only mark suspects.
  exp.outcome = DetectionOutcome::detected;
  exp.via = {false, true, true, false};
  exp.ambiguous_trust = true;
  return exp;
}

std::vector<ScenarioStep> scenario_script(const ScenarioCell& cell, Timestamp horizon) {
  std::vector<ScenarioStep> steps;
  const Timestamp onset{horizon.ticks / 4};
  const Timestamp midpoint{horizon.ticks / 2};
  constexpr std::int64_t kJumpMs = -60'000;

  if (!cell.host_malicious && !cell.guest_malicious) return steps;

  if (!cell.forgeable && cell.protecting == ProtectedTimeline::host_time &&
      !cell.host_malicious) {
    // Malicious guest cannot affect host time; no applicable attack.
    return steps;
  }

  if (cell.host_malicious) {
    // Host machine-time jump; propagates to hosted guests. Under forgeable
    // agents the world applies this stealthily (forged reports).
    steps.push_back({onset, false, AttackKind::clock_jump(kJumpMs)});
    if (cell.guest_malicious && !cell.forgeable) {
      steps.push_back({midpoint, true, AttackKind::simple(AttackKind::Kind::agent_shutdown)});
    }
  } else {
    steps.push_back({onset, true, AttackKind::clock_jump(kJumpMs)});
  }
  return steps;
}

std::string catalogue_line(const ScenarioCell& cell) {
  const DetectionExpectation exp = scenario_expectation(cell);
  std::ostringstream out;
  out << cell.id() << " forgeable=" << (cell.forgeable ? "yes" : "no")
      << " protecting=" << (cell.protecting == ProtectedTimeline::guest_time ? "guest" : "host")
      << " host=" << (cell.host_malicious ? "malicious" : "honest")
      << " guest=" << (cell.guest_malicious ? "malicious" : "honest")
      << " outcome=" << to_string(exp.outcome) << " via=" << exp.via.to_string()
      << " ambiguous=" << (exp.ambiguous_trust ? "yes" : "no");
  return out.str();
}

}  // namespace hbguard
