// Command-line front end: seeded experiment runs with CSV export, the
// 16-cell scenario-matrix conformance check, and the congestion sweep.
// Exit codes: 0 success, 2 configuration error, 3 scenario-conformance
// failure.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <fstream>
#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "hbguard/harness.hpp"

namespace {

using namespace hbguard;

const char* trace_kind_name(TraceKind kind) {
  switch (kind) {
    case TraceKind::deliver: return "deliver";
    case TraceKind::agent_tick: return "agent_tick";
    case TraceKind::cc_tick: return "cc_tick";
    case TraceKind::sweep: return "sweep";
    case TraceKind::inject_oracle: return "inject_oracle";
    case TraceKind::attack: return "attack";
    case TraceKind::countermeasure: return "countermeasure";
  }
  return "unknown";
}

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "cannot write " << path << "\n";
    return false;
  }
  out << text;
  return true;
}

// Loopback smoke transport: the identical sealed wire bytes over real OS
// datagram sockets on 127.0.0.1, virtual timestamps advanced one heartbeat
// period per round. Excluded from all metrics; it only proves the bytes
// survive a real socket pair.
int run_loopback(std::uint32_t minutes, std::uint32_t agents, std::uint64_t seed) {
  struct Socket {
    int fd = -1;
    sockaddr_in addr{};
    ~Socket() {
      if (fd >= 0) ::close(fd);
    }
    bool open() {
      fd = ::socket(AF_INET, SOCK_DGRAM, 0);
      if (fd < 0) return false;
      sockaddr_in bind_addr{};
      bind_addr.sin_family = AF_INET;
      bind_addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
      bind_addr.sin_port = 0;
      if (::bind(fd, reinterpret_cast<sockaddr*>(&bind_addr), sizeof(bind_addr)) != 0) return false;
      socklen_t len = sizeof(addr);
      if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) return false;
      timeval timeout{0, 200'000};
      ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &timeout, sizeof(timeout));
      return true;
    }
  };

  Socket cc_socket;
  if (!cc_socket.open()) {
    std::cerr << "loopback: cannot open controller socket\n";
    return 1;
  }

  CloudController cc(CheckConfig{}, seed);
  std::vector<Socket> agent_sockets(agents);
  std::vector<Agent> agent_states;
  agent_states.reserve(agents);
  for (std::uint32_t i = 0; i < agents; ++i) {
    if (!agent_sockets[i].open()) {
      std::cerr << "loopback: cannot open agent socket\n";
      return 1;
    }
    const NodeId node{i + 1};
    const AgentKey key = Simulation::derive_key(seed, node);
    cc.register_node(node, key, NodeRole::host_role(), Timestamp{0});
    agent_states.emplace_back(node, NodeRole::host_role(), key, false);
  }

  std::uint64_t exchanges = 0;
  std::uint64_t failures = 0;
  const std::uint32_t rounds = minutes * 2;
  std::vector<std::uint8_t> buffer(2048);
  for (std::uint32_t round = 0; round < rounds; ++round) {
    const Timestamp now{static_cast<std::int64_t>(round + 1) * 30'000};
    for (const DownDatagram& down : cc.tick(now)) {
      const auto& dest = agent_sockets[down.to.value - 1];
      ::sendto(cc_socket.fd, down.wire.data(), down.wire.size(), 0,
               reinterpret_cast<const sockaddr*>(&dest.addr), sizeof(dest.addr));
    }
    for (std::uint32_t i = 0; i < agents; ++i) {
      const ssize_t got = ::recv(agent_sockets[i].fd, buffer.data(), buffer.size(), 0);
      if (got <= 0) {
        ++failures;
        continue;
      }
      const auto reply = agent_states[i].handle_datagram(
          std::span<const std::uint8_t>(buffer.data(), static_cast<std::size_t>(got)), now);
      if (!reply) {
        ++failures;
        continue;
      }
      ::sendto(agent_sockets[i].fd, reply->data(), reply->size(), 0,
               reinterpret_cast<const sockaddr*>(&cc_socket.addr), sizeof(cc_socket.addr));
    }
    for (std::uint32_t i = 0; i < agents; ++i) {
      const ssize_t got = ::recv(cc_socket.fd, buffer.data(), buffer.size(), 0);
      if (got <= 0) {
        ++failures;
        continue;
      }
      const auto verdict = cc.on_heartbeat(
          std::span<const std::uint8_t>(buffer.data(), static_cast<std::size_t>(got)),
          now + 10);
      if (!verdict) ++exchanges;
    }
  }

  std::cout << "loopback smoke: agents=" << agents << " rounds=" << rounds
            << " clean_exchanges=" << exchanges << " failures=" << failures << "\n";
  return failures == 0 && exchanges == static_cast<std::uint64_t>(rounds) * agents ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"timeline-integrity heartbeat protocol simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string csv_path;
  std::string verdicts_path;
  std::string trace_path;
  std::string scenario_id;
  std::string transport = "sim";
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::uint32_t minutes = 0;
  std::uint32_t agents = 4;
  std::uint32_t steps = 4;

  CLI::App* run = app.add_subcommand("run", "run one seeded experiment and report metrics");
  run->add_option("--config", config_path, "path to a key: value config file");
  run->add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_given = true; });
  run->add_option("--minutes", minutes, "virtual run length override (minutes)");
  run->add_option("--csv", csv_path, "write the CSV report to this path");
  run->add_option("--verdicts", verdicts_path, "write the per-verdict CSV log to this path");
  run->add_option("--trace", trace_path, "write the executed-event log to this path");
  run->add_option("--scenario", scenario_id, "run one scenario cell (e.g. u-guest-hm-gh)");
  run->add_option("--transport", transport, "sim (default) or datagram-loopback")
      ->check(CLI::IsMember({"sim", "datagram-loopback"}));
  run->add_option("--agents", agents, "loopback transport: number of agents");

  CLI::App* matrix = app.add_subcommand("matrix", "run all 16 scenario cells against expectations");
  matrix->add_option("--seed", seed, "seed")->each([&](const std::string&) { seed_given = true; });
  matrix->add_option("--minutes", minutes, "virtual minutes per cell");

  CLI::App* sweep = app.add_subcommand("sweep-load", "ramp congestion and report timeout growth");
  sweep->add_option("--congestion-steps", steps, "number of doubling factors to test");
  sweep->add_option("--config", config_path, "path to a key: value config file");
  sweep->add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_given = true; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ExperimentConfig config =
          config_path.empty() ? ExperimentConfig{} : load_config_file(config_path);
      if (seed_given) config.seed = seed;
      if (minutes > 0) config.run_minutes = minutes;
      if (!scenario_id.empty()) {
        const auto cell = ScenarioCell::from_id(scenario_id);
        if (!cell) {
          std::cerr << "unknown scenario cell: " << scenario_id << "\n";
          return 2;
        }
        config.scenario = *cell;
      }

      if (transport == "datagram-loopback") {
        return run_loopback(config.run_minutes, agents, config.seed);
      }

      auto sim = build_simulation(config);
      if (!trace_path.empty()) sim->set_trace_recording(true);
      sim->run_until(config.horizon());
      const MetricsReport report = summarize(*sim, config);
      std::cout << emit_report(report, ReportFormat::summary);
      if (!csv_path.empty() && !write_file(csv_path, emit_report(report, ReportFormat::csv))) {
        return 1;
      }
      if (!verdicts_path.empty() &&
          !write_file(verdicts_path, emit_verdict_log(sim->verdicts()))) {
        return 1;
      }
      if (!trace_path.empty()) {
        std::ostringstream out;
        for (const TraceRecord& record : sim->trace()) {
          out << record.at.ticks << ' ' << trace_kind_name(record.kind) << ' ' << record.node
              << '\n';
        }
        if (!write_file(trace_path, out.str())) return 1;
      }
      return 0;
    }

    if (matrix->parsed()) {
      const MatrixResult result = run_matrix(seed_given ? seed : 1, minutes > 0 ? minutes : 20);
      for (const ScenarioResult& cell : result.cells) {
        std::cout << (cell.pass ? "[PASS] " : "[FAIL] ") << cell.cell.id() << " expected="
                  << to_string(cell.expected.outcome) << " via=" << cell.expected.via.to_string()
                  << " tp_verdicts=" << cell.tp_verdicts << " fired=" << cell.fired.to_string();
        if (!cell.pass) std::cout << "  (" << cell.detail << ")";
        std::cout << "\n";
      }
      std::cout << (result.all_pass ? "matrix: all 16 cells conform\n"
                                    : "matrix: conformance FAILED\n");
      return result.all_pass ? 0 : 3;
    }

    if (sweep->parsed()) {
      ExperimentConfig config =
          config_path.empty() ? ExperimentConfig{} : load_config_file(config_path);
      if (seed_given) config.seed = seed;
      const SweepResult result = sweep_load(config, steps);
      for (const SweepPoint& point : result.points) {
        std::cout << "congestion_factor=" << point.congestion_factor
                  << " timeout_errors=" << point.timeout_total << "\n";
      }
      std::cout << "timeout growth: " << (result.non_decreasing ? "non-decreasing" : "NOT monotone")
                << (result.grew ? ", strictly higher at the top factor" : ", no growth") << "\n";
      return 0;
    }
  } catch (const ConfigParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigRangeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
