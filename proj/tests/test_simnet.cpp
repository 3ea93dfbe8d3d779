#include "doctest.h"

#include "hbguard/simnet.hpp"

using namespace hbguard;

namespace {

LinkModel quiet_link() {
  LinkModel link;
  link.base_latency_ms = 10;
  link.jitter_ms = 0;
  link.loss_prob = 0.0;
  link.congestion_factor = 1.0;
  link.congestion_alpha = 0.0;
  return link;
}

SimulationModel no_faults() { return SimulationModel{0.0, 0.0, 0.0, 0.0}; }

}  // namespace

TEST_CASE("scheduling in the past is rejected; same-instant events run in schedule order") {
  Simulation sim(CheckConfig{}, quiet_link(), no_faults(), 1, false);
  sim.set_trace_recording(true);
  const NodeId a = sim.add_host();
  const NodeId b = sim.add_host();
  sim.run_until(Timestamp{1000});
  CHECK_THROWS_AS(sim.schedule(Timestamp{999}, CcTickEvent{}), SchedulingInPast);

  sim.schedule_attack(Timestamp{2000}, a, AttackKind::simple(AttackKind::Kind::agent_shutdown));
  sim.schedule_attack(Timestamp{2000}, b, AttackKind::simple(AttackKind::Kind::agent_shutdown));
  sim.run_until(Timestamp{2000});

  std::vector<std::uint64_t> attack_order;
  for (const TraceRecord& record : sim.trace()) {
    if (record.kind == TraceKind::attack) attack_order.push_back(record.node);
  }
  REQUIRE(attack_order.size() == 2);
  CHECK(attack_order[0] == a.value);
  CHECK(attack_order[1] == b.value);
}

TEST_CASE("run_until with an empty horizon parks virtual time at t_end") {
  Simulation sim(CheckConfig{}, quiet_link(), no_faults(), 1, false);
  sim.run_until(Timestamp{5});
  CHECK(sim.now() == Timestamp{5});
  CHECK_THROWS_AS(sim.run_until(Timestamp{4}), SchedulingInPast);
}

TEST_CASE("same seed and config give byte-identical traces") {
  auto run = [](std::uint64_t seed) {
    LinkModel link;
    link.base_latency_ms = 10;
    link.jitter_ms = 40;
    link.loss_prob = 0.05;
    SimulationModel model;  // stochastic defaults
    Simulation sim(CheckConfig{}, link, model, seed, false);
    sim.set_trace_recording(true);
    const NodeId host = sim.add_host();
    for (int i = 0; i < 3; ++i) sim.add_guest(host);
    sim.run_until(Timestamp{10 * 60'000});
    return std::make_tuple(sim.trace(), sim.verdicts().size(), sim.counters().sent,
                           sim.ground_truth().records.size());
  };
  const auto first = run(42);
  const auto second = run(42);
  CHECK(std::get<0>(first) == std::get<0>(second));
  CHECK(std::get<1>(first) == std::get<1>(second));
  CHECK(std::get<2>(first) == std::get<2>(second));
  CHECK(std::get<3>(first) == std::get<3>(second));

  const auto other_seed = run(43);
  CHECK(std::get<0>(first) != std::get<0>(other_seed));
}

TEST_CASE("one agent over 30 clean minutes drives exactly 60 exchanges") {
  Simulation sim(CheckConfig{}, quiet_link(), no_faults(), 7, false);
  const NodeId host = sim.add_host();
  sim.run_until(Timestamp{30 * 60'000});
  const NodeLedger* ledger = sim.controller().ledger(host);
  REQUIRE(ledger != nullptr);
  // Challenges go out at 30 s, 60 s, ..., 1800 s: 60 exchanges. The 1800 s
  // challenge is still in flight at the horizon, so 59 replies have landed.
  CHECK(ledger->next_down_ordinal == 61);
  CHECK(ledger->seen_ordinals.size() == 59);
  CHECK(ledger->pending_challenges.size() == 1);
  CHECK(sim.counters().sent == 119);
  CHECK(sim.verdicts().empty());
}

TEST_CASE("link outcomes: deterministic delay without jitter, certain loss at p=1") {
  Rng rng(9);
  LinkModel link = quiet_link();
  for (int i = 0; i < 100; ++i) {
    const LinkOutcome outcome = link_transmit(link, Timestamp{1000}, 1.0, rng);
    CHECK(!outcome.dropped);
    CHECK(outcome.deliver_at == Timestamp{1010});
  }
  link.loss_prob = 1.0;
  for (int i = 0; i < 100; ++i) {
    CHECK(link_transmit(link, Timestamp{1000}, 1.0, rng).dropped);
  }
}

TEST_CASE("congestion scales the delay and jitter stays within bounds") {
  Rng rng(10);
  LinkModel link = quiet_link();
  link.jitter_ms = 20;
  link.congestion_factor = 4.0;
  for (int i = 0; i < 200; ++i) {
    const LinkOutcome outcome = link_transmit(link, Timestamp{0}, 1.0, rng);
    REQUIRE(!outcome.dropped);
    CHECK(outcome.deliver_at.ticks >= 40);
    CHECK(outcome.deliver_at.ticks <= 120);
  }
}

TEST_CASE("loss at 2% over 1e5 seeded transmissions lands in the binomial band") {
  Rng rng(1234);
  LinkModel link = quiet_link();
  link.loss_prob = 0.02;
  std::uint64_t drops = 0;
  for (int i = 0; i < 100'000; ++i) {
    if (link_transmit(link, Timestamp{0}, 1.0, rng).dropped) ++drops;
  }
  CHECK(drops >= 1850);
  CHECK(drops <= 2150);
}

TEST_CASE("oracle: zero probabilities never fire; table defaults match their bands") {
  Rng rng(77);
  for (int i = 0; i < 10'000; ++i) {
    CHECK(ask_oracle(no_faults(), NodeClass::guest, rng) == OracleOutcome::ok);
  }

  SimulationModel model;  // guest: fail 0.001%, hack 5%
  std::uint64_t hacked = 0;
  for (int i = 0; i < 10'000; ++i) {
    if (ask_oracle(model, NodeClass::guest, rng) == OracleOutcome::hacked) ++hacked;
  }
  CHECK(hacked >= 430);
  CHECK(hacked <= 570);

  // Host draws use the 2%/2% parameters.
  std::uint64_t host_failed = 0;
  std::uint64_t host_hacked = 0;
  for (int i = 0; i < 10'000; ++i) {
    const OracleOutcome outcome = ask_oracle(model, NodeClass::host, rng);
    host_failed += outcome == OracleOutcome::fail;
    host_hacked += outcome == OracleOutcome::hacked;
  }
  // fail: Binomial(1e4, 0.02), hack: Binomial(1e4, 0.98 * 0.02); both bands
  // are a bit over +-3 sigma around means 200 and 196.
  CHECK(host_failed >= 150);
  CHECK(host_failed <= 250);
  CHECK(host_hacked >= 146);
  CHECK(host_hacked <= 246);
}

TEST_CASE("conservation and virtual-time monotonicity hold under noise") {
  for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    LinkModel link;
    link.base_latency_ms = 15;
    link.jitter_ms = 60;
    link.loss_prob = 0.1;
    Simulation sim(CheckConfig{}, link, SimulationModel{}, seed, false);
    sim.set_trace_recording(true);
    const NodeId host = sim.add_host();
    for (int i = 0; i < 4; ++i) sim.add_guest(host);
    sim.run_until(Timestamp{12 * 60'000});

    const LinkCounters& counters = sim.counters();
    CHECK(counters.sent == counters.delivered + counters.dropped);
    CHECK(counters.arrived <= counters.delivered);

    Timestamp last{0};
    for (const TraceRecord& record : sim.trace()) {
      CHECK(record.at >= last);
      last = record.at;
    }
  }
}

TEST_CASE("oracle-driven outages suppress one exchange and log infrastructure ground truth") {
  // Hosts fail with certainty each epoch: every exchange is skipped.
  SimulationModel model{0.0, 1.0, 0.0, 0.0};
  Simulation sim(CheckConfig{}, quiet_link(), model, 5, false);
  const NodeId host = sim.add_host();
  sim.run_until(Timestamp{5 * 60'000});

  CHECK(sim.controller().ledger(host)->entries.empty());
  bool saw_outage = false;
  for (const GroundTruthRecord& record : sim.ground_truth().records) {
    if (record.cause == GroundTruthCause::infrastructure_failure &&
        record.failure == FailureKind::node_outage) {
      saw_outage = true;
    }
    CHECK(record.cause != GroundTruthCause::hack);
  }
  CHECK(saw_outage);
}

TEST_CASE("dropped datagrams log packet-loss ground truth against the agent side") {
  LinkModel link = quiet_link();
  link.loss_prob = 1.0;
  Simulation sim(CheckConfig{}, link, no_faults(), 6, false);
  const NodeId host = sim.add_host();
  sim.run_until(Timestamp{2 * 60'000});
  REQUIRE(!sim.ground_truth().records.empty());
  for (const GroundTruthRecord& record : sim.ground_truth().records) {
    CHECK(record.cause == GroundTruthCause::infrastructure_failure);
    CHECK(record.failure == FailureKind::packet_loss);
    CHECK(record.node == host);
  }
}

TEST_CASE("published verdict timestamps are non-decreasing in emission order") {
  LinkModel link;
  link.base_latency_ms = 15;
  link.jitter_ms = 50;
  link.loss_prob = 0.05;
  Simulation sim(CheckConfig{}, link, SimulationModel{}, 17, false);
  const NodeId host = sim.add_host();
  for (int i = 0; i < 5; ++i) sim.add_guest(host);
  sim.run_until(Timestamp{30 * 60'000});

  REQUIRE(!sim.verdicts().empty());
  Timestamp last{0};
  for (const DetectionVerdict& verdict : sim.verdicts()) {
    CHECK(verdict.cc_time >= last);
    last = verdict.cc_time;
  }
}
