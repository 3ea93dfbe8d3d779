#include "hbguard/simnet.hpp"

#include <cmath>

namespace hbguard {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

LinkOutcome link_transmit(const LinkModel& link, Timestamp now, double dynamic_factor, Rng& rng) {
  LinkOutcome outcome;
  if (rng.chance(link.loss_prob)) {
    outcome.dropped = true;
    return outcome;
  }
  const std::uint64_t jitter = rng.below(static_cast<std::uint64_t>(link.jitter_ms) + 1);
  const double raw = link.congestion_factor * dynamic_factor *
                     (static_cast<double>(link.base_latency_ms) + static_cast<double>(jitter));
  std::int64_t delay = static_cast<std::int64_t>(std::llround(raw));
  if (delay < static_cast<std::int64_t>(link.base_latency_ms)) {
    delay = link.base_latency_ms;
  }
  outcome.deliver_at = now + delay;
  return outcome;
}

OracleOutcome ask_oracle(const SimulationModel& model, NodeClass cls, Rng& rng) {
  const double fail_p = cls == NodeClass::guest ? model.guest_fail_prob : model.host_fail_prob;
  const double hack_p = cls == NodeClass::guest ? model.guest_hack_prob : model.host_hack_prob;
  if (rng.chance(fail_p)) return OracleOutcome::fail;
  if (rng.chance(hack_p)) return OracleOutcome::hacked;
  return OracleOutcome::ok;
}

Simulation::Simulation(CheckConfig check, LinkModel link, SimulationModel model, std::uint64_t seed,
                       bool forgeable_agents)
    : check_(check),
      link_(link),
      model_(model),
      forgeable_agents_(forgeable_agents),
      seed_(seed),
      rng_(seed),
      controller_(check, splitmix64(seed ^ 0xcc00cc00cc00cc00ULL)) {
  schedule(Timestamp{check_.hb_period_ms}, CcTickEvent{});
  schedule(Timestamp{check_.response_check_ms}, SweepEvent{SweepKind::response});
  schedule(Timestamp{check_.timeline_check_ms}, SweepEvent{SweepKind::timeline});
  schedule(Timestamp{check_.timeout_threshold_ms}, SweepEvent{SweepKind::timeout});
}

AgentKey Simulation::derive_key(std::uint64_t seed, NodeId node) {
  AgentKey key;
  key.node = node;
  std::uint64_t state = splitmix64(seed ^ (node.value * 0x9e3779b97f4a7c15ULL + 1));
  for (std::size_t i = 0; i < key.bytes.size(); i += 8) {
    state = splitmix64(state);
    for (std::size_t j = 0; j < 8; ++j) {
      key.bytes[i + j] = static_cast<std::uint8_t>(state >> (8 * j));
    }
  }
  return key;
}

NodeId Simulation::add_node(NodeRole role) {
  const NodeId node{next_node_++};
  AgentKey key = derive_key(seed_, node);
  controller_.register_node(node, key, role, now_);
  agents_.emplace(node, Agent(node, role, key, forgeable_agents_));

  const std::int64_t period = check_.hb_period_ms;
  schedule(now_ + period, InjectOracleEvent{node});
  if (role.cls == NodeClass::guest) {
    schedule(now_ + period + period / 2, AgentTickEvent{node});
  }
  return node;
}

NodeId Simulation::add_host() {
  const NodeId node = add_node(NodeRole::host_role());
  hosts_.push_back(node);
  guests_of_.emplace(node, std::vector<NodeId>{});
  return node;
}

NodeId Simulation::add_guest(NodeId host) {
  if (!guests_of_.contains(host)) {
    throw std::invalid_argument("guest added to unknown host");
  }
  const NodeId node = add_node(NodeRole::guest_of(host));
  guests_of_.at(host).push_back(node);
  return node;
}

void Simulation::schedule(Timestamp at, EventPayload payload) {
  if (at < now_) {
    throw SchedulingInPast("event scheduled before virtual now");
  }
  queue_.push(SimEvent{at, next_seq_++, std::move(payload)});
}

void Simulation::schedule_attack(Timestamp at, NodeId node, AttackKind attack) {
  schedule(at, AttackAtEvent{node, attack});
}

void Simulation::run_until(Timestamp t_end) {
  if (t_end < now_) {
    throw SchedulingInPast("cannot run to a past instant");
  }
  while (!queue_.empty() && queue_.top().at <= t_end) {
    SimEvent event = queue_.top();
    queue_.pop();
    now_ = event.at;
    execute(std::move(event));
  }
  now_ = t_end;
}

void Simulation::record_trace(TraceKind kind, std::uint64_t node) {
  ++events_executed_;
  if (trace_enabled_) trace_.push_back({now_, kind, node});
}

void Simulation::execute(SimEvent event) {
  if (auto* deliver = std::get_if<DeliverEvent>(&event.payload)) {
    record_trace(TraceKind::deliver, deliver->to.value);
    handle_deliver(*deliver);
  } else if (auto* tick = std::get_if<AgentTickEvent>(&event.payload)) {
    record_trace(TraceKind::agent_tick, tick->node.value);
    handle_agent_tick(*tick);
  } else if (std::get_if<CcTickEvent>(&event.payload)) {
    record_trace(TraceKind::cc_tick, 0);
    handle_cc_tick();
  } else if (auto* sweep = std::get_if<SweepEvent>(&event.payload)) {
    record_trace(TraceKind::sweep, static_cast<std::uint64_t>(sweep->kind));
    handle_sweep(*sweep);
  } else if (auto* oracle = std::get_if<InjectOracleEvent>(&event.payload)) {
    record_trace(TraceKind::inject_oracle, oracle->node.value);
    handle_oracle(*oracle);
  } else if (auto* attack = std::get_if<AttackAtEvent>(&event.payload)) {
    record_trace(TraceKind::attack, attack->node.value);
    apply_attack(attack->node, attack->attack, now_);
  }
}

bool Simulation::suppressed_by_host(NodeId endpoint) const {
  const auto it = agents_.find(endpoint);
  if (it == agents_.end() || it->second.role().cls != NodeClass::guest) return false;
  const auto host_it = agents_.find(it->second.role().host);
  return host_it != agents_.end() && host_it->second.suppresses_guest_traffic();
}

void Simulation::transmit(NodeId from, NodeId to, Bytes wire) {
  ++counters_.sent;
  // A malicious host sits on the path of every datagram its guests exchange
  // with the controller, in both directions.
  if (suppressed_by_host(from) || suppressed_by_host(to)) {
    ++counters_.dropped;
    ++counters_.dropped_by_suppression;
    return;
  }
  const double dynamic_factor =
      link_.congestion_capacity == 0
          ? 1.0
          : 1.0 + link_.congestion_alpha *
                      (static_cast<double>(in_flight_) / link_.congestion_capacity);
  const LinkOutcome outcome = link_transmit(link_, now_, dynamic_factor, rng_);
  if (outcome.dropped) {
    ++counters_.dropped;
    ++counters_.dropped_by_loss;
    // The perturbed party is the agent side of the exchange.
    const NodeId affected = to == kControllerId ? from : to;
    ground_truth_.records.push_back({now_, affected, GroundTruthCause::infrastructure_failure,
                                     std::nullopt, FailureKind::packet_loss});
    return;
  }
  ++counters_.delivered;
  ++in_flight_;
  schedule(outcome.deliver_at, DeliverEvent{std::move(wire), to});
}

void Simulation::handle_deliver(DeliverEvent& ev) {
  if (in_flight_ > 0) --in_flight_;
  ++counters_.arrived;
  if (ev.to == kControllerId) {
    controller_.on_heartbeat(ev.wire, now_);
    return;
  }
  const auto it = agents_.find(ev.to);
  if (it == agents_.end()) return;
  Agent& agent = it->second;
  std::optional<Bytes> reply = agent.handle_datagram(ev.wire, now_);
  if (!reply) return;

  captured_ups_[ev.to] = *reply;
  const bool duplicate = replay_on_next_send_[ev.to];
  replay_on_next_send_[ev.to] = false;
  transmit(ev.to, kControllerId, std::move(*reply));
  if (duplicate) {
    transmit(ev.to, kControllerId, captured_ups_[ev.to]);
  }
}

void Simulation::handle_agent_tick(const AgentTickEvent& ev) {
  const auto it = agents_.find(ev.node);
  if (it != agents_.end() && it->second.role().cls == NodeClass::guest) {
    Agent& guest = it->second;
    Agent& host = agents_.at(guest.role().host);
    // Paired probe: the guest compares against the host's exposed time and
    // the host inspects the guest's, at the same instant.
    if (auto signal = guest.cross_probe(host.node(), host.machine_read(now_), now_)) {
      guest.queue_signal(*signal);
    }
    if (auto signal = host.cross_probe(guest.node(), guest.machine_read(now_), now_)) {
      host.queue_signal(*signal);
    }
  }
  schedule(now_ + check_.hb_period_ms, AgentTickEvent{ev.node});
}

void Simulation::handle_cc_tick() {
  for (DownDatagram& down : controller_.tick(now_)) {
    transmit(kControllerId, down.to, std::move(down.wire));
  }
  schedule(now_ + check_.hb_period_ms, CcTickEvent{});
}

void Simulation::handle_sweep(const SweepEvent& ev) {
  std::vector<DetectionVerdict> published = controller_.sweep(now_, ev.kind);
  verdicts_.insert(verdicts_.end(), published.begin(), published.end());

  if (ev.kind == SweepKind::response) {
    // Signals ride heartbeats, so accusation resolution shares the response
    // checking cadence.
    const std::vector<AccusationRecord> signals = controller_.take_signals();
    signals_seen_.insert(signals_seen_.end(), signals.begin(), signals.end());
    for (const Countermeasure& cm : controller_.resolve_accusations(signals, now_)) {
      countermeasures_.push_back(cm);
      if (cm.kind == Countermeasure::Kind::request_rollback) {
        // Hypervisor-level snapshot restore, not a heartbeat datagram.
        record_trace(TraceKind::countermeasure, cm.target.value);
        agents_.at(cm.target).rollback();
      }
    }
  }

  std::int64_t period = 0;
  switch (ev.kind) {
    case SweepKind::response: period = check_.response_check_ms; break;
    case SweepKind::timeline: period = check_.timeline_check_ms; break;
    case SweepKind::timeout: period = check_.timeout_threshold_ms; break;
  }
  schedule(now_ + period, SweepEvent{ev.kind});
}

void Simulation::handle_oracle(const InjectOracleEvent& ev) {
  const auto it = agents_.find(ev.node);
  if (it != agents_.end() && it->second.behavior() != Behavior::shutdown) {
    Agent& agent = it->second;
    switch (ask_oracle(model_, agent.role().cls, rng_)) {
      case OracleOutcome::ok:
        break;
      case OracleOutcome::fail:
        ground_truth_.records.push_back({now_, ev.node, GroundTruthCause::infrastructure_failure,
                                         std::nullopt, FailureKind::node_outage});
        agent.skip_exchanges_until(now_ + check_.hb_period_ms);
        break;
      case OracleOutcome::hacked:
        apply_attack(ev.node, draw_oracle_attack(agent), now_);
        break;
    }
  }
  schedule(now_ + check_.hb_period_ms, InjectOracleEvent{ev.node});
}

AttackKind Simulation::draw_oracle_attack(const Agent& agent) {
  // host_forges_guest needs a coordinated malicious host, so the per-node
  // oracle never draws it.
  const bool is_host = agent.role().cls == NodeClass::host;
  const std::uint64_t n = is_host ? 7 : 6;
  switch (rng_.below(n)) {
    case 0: return AttackKind::clock_jump(rng_.chance(0.5) ? -60'000 : 60'000);
    case 1: return AttackKind::clock_skew(rng_.chance(0.5) ? ClockRate::from_ratio(1, 2)
                                                           : ClockRate::from_ratio(2, 1));
    case 2: return AttackKind::simple(AttackKind::Kind::suppress_heartbeats);
    case 3: return AttackKind::simple(AttackKind::Kind::forge_response);
    case 4: return AttackKind::simple(AttackKind::Kind::replay_heartbeat);
    case 5: return AttackKind::simple(AttackKind::Kind::agent_shutdown);
    default: return AttackKind::simple(AttackKind::Kind::host_suppresses_guest_traffic);
  }
}

void Simulation::apply_attack(NodeId node, const AttackKind& attack, Timestamp at) {
  Agent& agent = agents_.at(node);
  const bool clock_attack = attack.kind == AttackKind::Kind::clock_jump ||
                            attack.kind == AttackKind::Kind::clock_skew;

  if (attack.kind == AttackKind::Kind::host_forges_guest) {
    // Validates role and forgeability; throws before any state changes.
    agent.apply_compromise(attack, at);
  } else if (attack.kind == AttackKind::Kind::replay_heartbeat) {
    const auto captured = captured_ups_.find(node);
    if (captured != captured_ups_.end()) {
      transmit(node, kControllerId, captured->second);
    } else {
      replay_on_next_send_[node] = true;
    }
  } else if (clock_attack && agent.role().cls == NodeClass::host) {
    agent.apply_compromise(attack, at);
    if (forgeable_agents_) {
      // Forgeable agents mean the malicious host holds every key on the box:
      // the machine-time change hides behind forged pristine reports.
      agent.forge_reports();
      for (const NodeId guest : guests_of_.at(node)) {
        Agent& g = agents_.at(guest);
        g.propagate_clock(agent.clock());
        g.forge_reports();
      }
    } else {
      // The host clock is the guests' time source, so the change propagates.
      for (const NodeId guest : guests_of_.at(node)) {
        agents_.at(guest).propagate_clock(agent.clock());
      }
    }
  } else {
    agent.apply_compromise(attack, at);
  }

  ground_truth_.records.push_back(
      {at, node, GroundTruthCause::hack, attack, std::nullopt});
}

}  // namespace hbguard
