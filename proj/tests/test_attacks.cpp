#include "doctest.h"

#include <fstream>
#include <set>
#include <string>

#include "hbguard/attacks.hpp"
#include "hbguard/simnet.hpp"

using namespace hbguard;

namespace {

LinkModel quiet_link() {
  LinkModel link;
  link.base_latency_ms = 10;
  link.jitter_ms = 0;
  link.loss_prob = 0.0;
  link.congestion_alpha = 0.0;
  return link;
}

SimulationModel no_faults() { return SimulationModel{0.0, 0.0, 0.0, 0.0}; }

}  // namespace

TEST_CASE("attack constructors enforce their invariants") {
  CHECK_THROWS_AS(AttackKind::clock_jump(0), std::invalid_argument);
  CHECK_THROWS_AS(AttackKind::clock_skew(ClockRate::from_ratio(1, 1)), std::invalid_argument);
  CHECK_THROWS_AS(AttackKind::clock_skew(ClockRate::from_ratio(0, 1)), std::invalid_argument);
  CHECK(AttackKind::clock_skew(ClockRate::from_ratio(2, 1)).rate == ClockRate::from_ratio(2, 1));
}

TEST_CASE("the sixteen cells are distinct and the expectation function is total") {
  const auto cells = ScenarioCell::all();
  REQUIRE(cells.size() == 16);
  std::set<std::string> ids;
  for (const ScenarioCell& cell : cells) {
    ids.insert(cell.id());
    CHECK(ScenarioCell::from_id(cell.id()) == cell);
    const DetectionExpectation exp = scenario_expectation(cell);
    if (exp.outcome == DetectionOutcome::detected) CHECK(exp.via.any());
  }
  CHECK(ids.size() == 16);
  CHECK(!ScenarioCell::from_id("nonsense").has_value());
}

TEST_CASE("expectations encode the resiliency matrix cells") {
  // Spot checks for individual cells.
  const auto both_honest = scenario_expectation(*ScenarioCell::from_id("u-guest-hh-gh"));
  CHECK(both_honest.outcome == DetectionOutcome::trivially_clean);

  const auto forged_host = scenario_expectation(*ScenarioCell::from_id("f-host-hm-gh"));
  CHECK(forged_host.outcome == DetectionOutcome::not_detected);

  const auto both_malicious = scenario_expectation(*ScenarioCell::from_id("u-guest-hm-gm"));
  CHECK(both_malicious.outcome == DetectionOutcome::detected);
  CHECK(both_malicious.via == DetectionChannels{true, true, false, true});

  const auto guest_cannot_touch_host = scenario_expectation(*ScenarioCell::from_id("u-host-hh-gm"));
  CHECK(guest_cannot_touch_host.outcome == DetectionOutcome::trivially_clean);

  const auto ambiguous = scenario_expectation(*ScenarioCell::from_id("f-guest-hh-gm"));
  CHECK(ambiguous.outcome == DetectionOutcome::detected);
  CHECK(ambiguous.ambiguous_trust);
}

TEST_CASE("catalogue file in the repo matches the expectation function") {
  std::ifstream in(std::string(HBGUARD_DATA_DIR) + "/scenario_matrix.txt");
  REQUIRE(in.is_open());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  const auto cells = ScenarioCell::all();
  REQUIRE(lines.size() == cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK(lines[i] == catalogue_line(cells[i]));
  }
}

TEST_CASE("trivially clean holds exactly for cells where the protected timeline is untouchable") {
  for (const ScenarioCell& cell : ScenarioCell::all()) {
    const bool untouchable =
        (!cell.host_malicious && !cell.guest_malicious) ||
        (!cell.forgeable && cell.protecting == ProtectedTimeline::host_time &&
         !cell.host_malicious);
    CHECK((scenario_expectation(cell).outcome == DetectionOutcome::trivially_clean) ==
          untouchable);
  }
}

TEST_CASE("guest clock jump shifts only the guest; host jump propagates to all guests") {
  Simulation sim(CheckConfig{}, quiet_link(), no_faults(), 3, false);
  const NodeId host = sim.add_host();
  const NodeId g1 = sim.add_guest(host);
  const NodeId g2 = sim.add_guest(host);
  const NodeId g3 = sim.add_guest(host);
  sim.run_until(Timestamp{300'000});

  sim.apply_attack(g1, AttackKind::clock_jump(-60'000), Timestamp{300'000});
  CHECK(sim.agent(g1).machine_read(Timestamp{300'000}) == Timestamp{240'000});
  CHECK(sim.agent(host).machine_read(Timestamp{300'000}) == Timestamp{300'000});

  sim.apply_attack(host, AttackKind::clock_jump(-30'000), Timestamp{300'000});
  for (const NodeId node : {host, g2, g3}) {
    CHECK(sim.agent(node).machine_read(Timestamp{300'000}) == Timestamp{270'000});
  }
  // The directly attacked guest was re-sourced from the host clock too.
  CHECK(sim.agent(g1).machine_read(Timestamp{300'000}) == Timestamp{270'000});
  CHECK(sim.ground_truth().records.size() == 2);
}

TEST_CASE("forging an unforgeable guest is rejected and leaves no ground truth") {
  Simulation sim(CheckConfig{}, quiet_link(), no_faults(), 3, false);
  const NodeId host = sim.add_host();
  const NodeId guest = sim.add_guest(host);
  CHECK_THROWS_AS(sim.apply_attack(guest, AttackKind::simple(AttackKind::Kind::host_forges_guest),
                                   Timestamp{0}),
                  InapplicableAttack);
  CHECK(sim.ground_truth().records.empty());
}

TEST_CASE("host clock attacks under forgeable agents are stealthy") {
  Simulation sim(CheckConfig{}, quiet_link(), no_faults(), 3, true);
  const NodeId host = sim.add_host();
  const NodeId guest = sim.add_guest(host);
  sim.run_until(Timestamp{300'000});
  sim.apply_attack(host, AttackKind::clock_jump(-60'000), Timestamp{300'000});

  // Machine time is tampered, reported time is pristine, and the hack is on
  // the ground-truth record.
  CHECK(sim.agent(host).machine_read(Timestamp{330'000}) == Timestamp{270'000});
  CHECK(sim.agent(host).report_read(Timestamp{330'000}) == Timestamp{330'000});
  CHECK(sim.agent(guest).report_read(Timestamp{330'000}) == Timestamp{330'000});
  CHECK(sim.agent(guest).forged());
  REQUIRE(sim.ground_truth().records.size() == 1);
  CHECK(sim.ground_truth().records[0].cause == GroundTruthCause::hack);

  sim.run_until(Timestamp{20 * 60'000});
  CHECK(sim.verdicts().empty());
  CHECK(sim.signals_seen().empty());
}

TEST_CASE("replayed heartbeats never leave the run verdict-free") {
  Simulation sim(CheckConfig{}, quiet_link(), no_faults(), 8, false);
  const NodeId host = sim.add_host();
  sim.run_until(Timestamp{120'000});
  REQUIRE(sim.verdicts().empty());

  sim.apply_attack(host, AttackKind::simple(AttackKind::Kind::replay_heartbeat), Timestamp{120'000});
  sim.run_until(Timestamp{10 * 60'000});

  // The duplicate answers an already-consumed challenge: response error (or a
  // duplicate-ordinal timeline error if it somehow wins the race).
  bool indicted = false;
  for (const DetectionVerdict& verdict : sim.verdicts()) {
    if (verdict.node == host && (verdict.kind == VerdictKind::response_error ||
                                 verdict.kind == VerdictKind::timeline_error)) {
      indicted = true;
    }
  }
  CHECK(indicted);
}

TEST_CASE("replay scheduled before any send duplicates the next heartbeat") {
  Simulation sim(CheckConfig{}, quiet_link(), no_faults(), 8, false);
  const NodeId host = sim.add_host();
  sim.schedule_attack(Timestamp{1000}, host,
                      AttackKind::simple(AttackKind::Kind::replay_heartbeat));
  sim.run_until(Timestamp{10 * 60'000});
  bool indicted = false;
  for (const DetectionVerdict& verdict : sim.verdicts()) {
    indicted = indicted || verdict.node == host;
  }
  CHECK(indicted);
}

TEST_CASE("scenario scripts only touch the scripted parties") {
  for (const ScenarioCell& cell : ScenarioCell::all()) {
    const auto script = scenario_script(cell, Timestamp{20 * 60'000});
    const DetectionExpectation exp = scenario_expectation(cell);
    if (exp.outcome == DetectionOutcome::trivially_clean) {
      CHECK(script.empty());
    } else {
      REQUIRE(!script.empty());
      CHECK(script.front().at == Timestamp{5 * 60'000});
      for (const ScenarioStep& step : script) {
        const bool target_malicious =
            step.targets_guest ? cell.guest_malicious : cell.host_malicious;
        CHECK(target_malicious);
      }
    }
  }
}
