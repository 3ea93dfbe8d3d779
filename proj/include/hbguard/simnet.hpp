#pragma once

// Deterministic discrete-event simulator: virtual time with a (time, seq)
// totally ordered queue, a lossy reordering link, the probabilistic
// fault/attack oracle, and the ground-truth log that false-positive
// accounting joins against. Strictly single-threaded; (seed, config) fully
// determines every trace, verdict and counter.

#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <variant>
#include <vector>

#include "hbguard/agent.hpp"
#include "hbguard/attacks.hpp"
#include "hbguard/controller.hpp"
#include "hbguard/protocol.hpp"
#include "hbguard/time.hpp"

namespace hbguard {

// All stochastic draws go through hand-rolled reductions of the mt19937_64
// stream; std::*_distribution is implementation-defined and would break
// cross-platform byte-identical output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
  bool chance(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

struct LinkModel {
  std::uint32_t base_latency_ms = 10;
  std::uint32_t jitter_ms = 20;       // uniform additive, inclusive upper bound
  double loss_prob = 0.02;
  double congestion_factor = 1.0;     // static load knob, >= 1
  // Dynamic ramp: latency multiplies by 1 + alpha * in_flight / capacity.
  double congestion_alpha = 1.0;
  std::uint32_t congestion_capacity = 1000;
};

struct LinkOutcome {
  bool dropped = false;
  Timestamp deliver_at{0};
};

// One transmission decision. Delivered datagrams always incur at least the
// base latency; distinct in-flight datagrams may overtake each other.
LinkOutcome link_transmit(const LinkModel& link, Timestamp now, double dynamic_factor, Rng& rng);

struct SimulationModel {
  double guest_fail_prob = 0.00001;  // 0.001%
  double host_fail_prob = 0.02;
  double guest_hack_prob = 0.05;
  double host_hack_prob = 0.02;
};

enum class OracleOutcome : std::uint8_t { ok, fail, hacked };

// Per-node, per-epoch draw: Fail with the class failure probability, else
// Hacked with the class hacking probability, else Ok.
OracleOutcome ask_oracle(const SimulationModel& model, NodeClass cls, Rng& rng);

enum class GroundTruthCause : std::uint8_t { infrastructure_failure, hack };
enum class FailureKind : std::uint8_t { packet_loss, node_outage };

struct GroundTruthRecord {
  Timestamp at{0};
  NodeId node;
  GroundTruthCause cause = GroundTruthCause::infrastructure_failure;
  std::optional<AttackKind> attack;    // cause == hack
  std::optional<FailureKind> failure;  // cause == infrastructure_failure
};

struct GroundTruthLog {
  std::vector<GroundTruthRecord> records;
};

struct DeliverEvent {
  Bytes wire;
  NodeId to;
};
struct AgentTickEvent {
  NodeId node;
};
struct CcTickEvent {};
struct SweepEvent {
  SweepKind kind = SweepKind::response;
};
struct InjectOracleEvent {
  NodeId node;
};
struct AttackAtEvent {
  NodeId node;
  AttackKind attack;
};

using EventPayload = std::variant<DeliverEvent, AgentTickEvent, CcTickEvent, SweepEvent,
                                  InjectOracleEvent, AttackAtEvent>;

struct SimEvent {
  Timestamp at{0};
  std::uint64_t seq = 0;  // FIFO tiebreak among equal timestamps
  EventPayload payload;
};

struct SchedulingInPast : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TraceKind : std::uint8_t {
  deliver,
  agent_tick,
  cc_tick,
  sweep,
  inject_oracle,
  attack,
  countermeasure,
};

struct TraceRecord {
  Timestamp at{0};
  TraceKind kind = TraceKind::deliver;
  std::uint64_t node = 0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct LinkCounters {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;  // decided at transmit time; sent == delivered + dropped
  std::uint64_t dropped = 0;
  std::uint64_t dropped_by_loss = 0;
  std::uint64_t dropped_by_suppression = 0;
  std::uint64_t arrived = 0;  // deliveries executed before the horizon
};

class Simulation {
 public:
  Simulation(CheckConfig check, LinkModel link, SimulationModel model, std::uint64_t seed,
             bool forgeable_agents);

  NodeId add_host();
  NodeId add_guest(NodeId host);

  // Throws SchedulingInPast when at < now.
  void schedule(Timestamp at, EventPayload payload);
  void schedule_attack(Timestamp at, NodeId node, AttackKind attack);

  // Executes queued events while their timestamp does not exceed t_end, then
  // parks virtual time at t_end. Wall-clock independent.
  void run_until(Timestamp t_end);

  // World-level attack application: ground truth is recorded, host clock
  // changes propagate to hosted guests, and a clock attack on a host under
  // forgeable agents is applied stealthily (forged pristine reports from the
  // host and every hosted guest).
  void apply_attack(NodeId node, const AttackKind& attack, Timestamp at);

  void set_trace_recording(bool enabled) { trace_enabled_ = enabled; }

  Timestamp now() const { return now_; }
  const CloudController& controller() const { return controller_; }
  const Agent& agent(NodeId node) const { return agents_.at(node); }
  const std::vector<NodeId>& hosts() const { return hosts_; }
  const std::vector<NodeId>& guests_of(NodeId host) const { return guests_of_.at(host); }
  const std::vector<DetectionVerdict>& verdicts() const { return verdicts_; }
  const std::vector<AccusationRecord>& signals_seen() const { return signals_seen_; }
  const std::vector<Countermeasure>& countermeasures() const { return countermeasures_; }
  const GroundTruthLog& ground_truth() const { return ground_truth_; }
  const LinkCounters& counters() const { return counters_; }
  const std::vector<TraceRecord>& trace() const { return trace_; }
  std::uint64_t events_executed() const { return events_executed_; }

  static AgentKey derive_key(std::uint64_t seed, NodeId node);

 private:
  struct EventOrder {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      if (a.at != b.at) return a.at > b.at;
      return a.seq > b.seq;
    }
  };

  NodeId add_node(NodeRole role);
  void execute(SimEvent event);
  void handle_deliver(DeliverEvent& ev);
  void handle_agent_tick(const AgentTickEvent& ev);
  void handle_cc_tick();
  void handle_sweep(const SweepEvent& ev);
  void handle_oracle(const InjectOracleEvent& ev);
  void transmit(NodeId from, NodeId to, Bytes wire);
  bool suppressed_by_host(NodeId endpoint) const;
  AttackKind draw_oracle_attack(const Agent& agent);
  void record_trace(TraceKind kind, std::uint64_t node);

  CheckConfig check_;
  LinkModel link_;
  SimulationModel model_;
  bool forgeable_agents_;
  std::uint64_t seed_;
  Rng rng_;
  CloudController controller_;

  std::map<NodeId, Agent> agents_;
  std::vector<NodeId> hosts_;
  std::map<NodeId, std::vector<NodeId>> guests_of_;
  std::uint64_t next_node_ = 1;

  std::priority_queue<SimEvent, std::vector<SimEvent>, EventOrder> queue_;
  Timestamp now_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t in_flight_ = 0;

  std::vector<DetectionVerdict> verdicts_;
  std::vector<AccusationRecord> signals_seen_;
  std::vector<Countermeasure> countermeasures_;
  GroundTruthLog ground_truth_;
  LinkCounters counters_;

  std::map<NodeId, Bytes> captured_ups_;
  std::map<NodeId, bool> replay_on_next_send_;

  bool trace_enabled_ = false;
  std::vector<TraceRecord> trace_;
  std::uint64_t events_executed_ = 0;
};

}  // namespace hbguard
