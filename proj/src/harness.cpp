#include "hbguard/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace hbguard {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw ConfigParseError("config line " + std::to_string(line) + ": " + what);
}

[[noreturn]] void range_fail(const std::string& key, const std::string& what) {
  throw ConfigRangeError("config field '" + key + "': " + what);
}

double parse_double(const std::string& key, const std::string& value, std::size_t line) {
  try {
    std::size_t used = 0;
    const double parsed = std::stod(value, &used);
    if (used != value.size()) parse_fail(line, "malformed number for '" + key + "'");
    return parsed;
  } catch (const ConfigParseError&) {
    throw;
  } catch (const std::exception&) {
    parse_fail(line, "malformed number for '" + key + "'");
  }
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value, std::size_t line) {
  std::uint64_t parsed = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    parse_fail(line, "malformed unsigned integer for '" + key + "'");
  }
  return parsed;
}

bool parse_bool(const std::string& key, const std::string& value, std::size_t line) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  parse_fail(line, "malformed boolean for '" + key + "'");
}

double parse_probability(const std::string& key, const std::string& value, std::size_t line) {
  const double p = parse_double(key, value, line);
  if (p < 0.0 || p > 1.0) range_fail(key, "probability must lie in [0, 1]");
  return p;
}

std::size_t kind_index(VerdictKind kind) {
  for (std::size_t i = 0; i < kVerdictKinds.size(); ++i) {
    if (kVerdictKinds[i] == kind) return i;
  }
  return 0;
}

}  // namespace

ExperimentConfig load_config(const std::string& source) {
  ExperimentConfig config;
  std::istringstream in(source);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto comment = raw.find('#');
    if (comment != std::string::npos) raw.erase(comment);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) parse_fail(line_no, "expected 'key: value'");
    const std::string key = trim(line.substr(0, colon));
    const std::string value = trim(line.substr(colon + 1));
    if (key.empty() || value.empty()) parse_fail(line_no, "expected 'key: value'");

    if (key == "run_minutes") {
      config.run_minutes = static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "n_hosts") {
      config.n_hosts = static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "guests_per_host") {
      config.guests_per_host = static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "hb_period_ms") {
      config.check.hb_period_ms = static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "response_check_ms") {
      config.check.response_check_ms = static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "timeline_check_ms") {
      config.check.timeline_check_ms = static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "timeout_threshold_ms") {
      config.check.timeout_threshold_ms =
          static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "miss_grace_periods") {
      config.check.miss_grace_periods =
          static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "base_latency_ms") {
      config.link.base_latency_ms = static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "jitter_ms") {
      config.link.jitter_ms = static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "loss_prob") {
      config.link.loss_prob = parse_probability(key, value, line_no);
    } else if (key == "congestion_factor") {
      config.link.congestion_factor = parse_double(key, value, line_no);
      if (config.link.congestion_factor < 1.0) range_fail(key, "must be >= 1");
    } else if (key == "congestion_alpha") {
      config.link.congestion_alpha = parse_double(key, value, line_no);
      if (config.link.congestion_alpha < 0.0) range_fail(key, "must be >= 0");
    } else if (key == "congestion_capacity") {
      config.link.congestion_capacity =
          static_cast<std::uint32_t>(parse_unsigned(key, value, line_no));
    } else if (key == "guest_fail_prob") {
      config.model.guest_fail_prob = parse_probability(key, value, line_no);
    } else if (key == "host_fail_prob") {
      config.model.host_fail_prob = parse_probability(key, value, line_no);
    } else if (key == "guest_hack_prob") {
      config.model.guest_hack_prob = parse_probability(key, value, line_no);
    } else if (key == "host_hack_prob") {
      config.model.host_hack_prob = parse_probability(key, value, line_no);
    } else if (key == "forgeable_agents") {
      config.forgeable_agents = parse_bool(key, value, line_no);
    } else if (key == "seed") {
      config.seed = parse_unsigned(key, value, line_no);
    } else if (key == "scenario") {
      const auto cell = ScenarioCell::from_id(value);
      if (!cell) parse_fail(line_no, "unknown scenario cell '" + value + "'");
      config.scenario = *cell;
    } else {
      parse_fail(line_no, "unknown key '" + key + "'");
    }
    config.explicit_keys.insert(key);
  }

  if (config.run_minutes == 0) range_fail("run_minutes", "must be positive");
  if (config.n_hosts == 0) range_fail("n_hosts", "must be at least 1");
  if (config.check.hb_period_ms == 0 || config.check.response_check_ms == 0 ||
      config.check.timeline_check_ms == 0 || config.check.timeout_threshold_ms == 0 ||
      config.check.miss_grace_periods == 0) {
    range_fail("check intervals", "must be positive");
  }
  if (config.check.timeout_threshold_ms <= config.check.hb_period_ms) {
    range_fail("timeout_threshold_ms", "must exceed hb_period_ms");
  }
  return config;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParseError("cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return load_config(buffer.str());
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::ostringstream canon;
  canon << config.run_minutes << '|' << config.n_hosts << '|' << config.guests_per_host << '|'
        << config.check.hb_period_ms << '|' << config.check.response_check_ms << '|'
        << config.check.timeline_check_ms << '|' << config.check.timeout_threshold_ms << '|'
        << config.check.miss_grace_periods << '|' << config.link.base_latency_ms << '|'
        << config.link.jitter_ms << '|' << config.link.loss_prob << '|'
        << config.link.congestion_factor << '|' << config.link.congestion_alpha << '|'
        << config.link.congestion_capacity << '|' << config.model.guest_fail_prob << '|'
        << config.model.host_fail_prob << '|' << config.model.guest_hack_prob << '|'
        << config.model.host_hack_prob << '|' << config.forgeable_agents << '|'
        << (config.scenario ? config.scenario->id() : "-");
  const std::string text = canon.str();
  std::uint64_t hash = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const char c : text) {
    hash ^= static_cast<std::uint8_t>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::array<KindStats, 4> compute_false_positives(std::span<const DetectionVerdict> verdicts,
                                                 const GroundTruthLog& truth,
                                                 std::int64_t window_ms) {
  std::map<NodeId, std::vector<Timestamp>> hacks;
  for (const GroundTruthRecord& record : truth.records) {
    if (record.cause == GroundTruthCause::hack) {
      hacks[record.node].push_back(record.at);
    }
  }
  for (auto& [node, times] : hacks) std::sort(times.begin(), times.end());

  std::array<KindStats, 4> stats{};
  for (const DetectionVerdict& verdict : verdicts) {
    KindStats& s = stats[kind_index(verdict.kind)];
    ++s.total;
    bool tp = false;
    const auto it = hacks.find(verdict.node);
    if (it != hacks.end()) {
      const Timestamp lo = verdict.cc_time - window_ms;
      const auto first = std::lower_bound(it->second.begin(), it->second.end(), lo);
      tp = first != it->second.end() && *first <= verdict.cc_time;
    }
    if (!tp) ++s.fp;
  }
  for (KindStats& s : stats) {
    if (s.total > 0) {
      s.fp_percent = 100.0 * static_cast<double>(s.fp) / static_cast<double>(s.total);
    }
  }
  return stats;
}

std::unique_ptr<Simulation> build_simulation(const ExperimentConfig& config) {
  ExperimentConfig effective = config;
  if (config.scenario) {
    // Conformance runs isolate the scripted attack: no stochastic oracle, no
    // loss, no jitter, minimal topology.
    effective.n_hosts = 1;
    effective.guests_per_host = 1;
    effective.forgeable_agents = config.scenario->forgeable;
    effective.link.loss_prob = 0.0;
    effective.link.jitter_ms = 0;
    effective.link.congestion_factor = 1.0;
    effective.link.congestion_alpha = 0.0;
    effective.model = SimulationModel{0.0, 0.0, 0.0, 0.0};
  }

  auto sim = std::make_unique<Simulation>(effective.check, effective.link, effective.model,
                                          effective.seed, effective.forgeable_agents);
  for (std::uint32_t h = 0; h < effective.n_hosts; ++h) {
    const NodeId host = sim->add_host();
    for (std::uint32_t g = 0; g < effective.guests_per_host; ++g) {
      sim->add_guest(host);
    }
  }

  if (config.scenario) {
    const NodeId host = sim->hosts().front();
    const NodeId guest = sim->guests_of(host).front();
    for (const ScenarioStep& step : scenario_script(*config.scenario, effective.horizon())) {
      sim->schedule_attack(step.at, step.targets_guest ? guest : host, step.attack);
    }
  }
  return sim;
}

MetricsReport summarize(const Simulation& sim, const ExperimentConfig& config) {
  MetricsReport report;
  report.per_kind = compute_false_positives(sim.verdicts(), sim.ground_truth(),
                                            config.check.timeout_threshold_ms);
  const std::size_t minutes = config.run_minutes + 1;
  report.minute_counts.assign(minutes, {});
  for (const DetectionVerdict& verdict : sim.verdicts()) {
    std::size_t minute = static_cast<std::size_t>(verdict.cc_time.ticks / 60'000);
    if (minute >= minutes) minute = minutes - 1;
    ++report.minute_counts[minute][kind_index(verdict.kind)];
  }
  report.heartbeats_sent = sim.counters().sent;
  report.heartbeats_delivered = sim.counters().delivered;
  report.heartbeats_dropped = sim.counters().dropped;
  report.total_verdicts = sim.verdicts().size();
  report.hash = config_hash(config);
  report.seed = config.seed;
  return report;
}

MetricsReport run_experiment(const ExperimentConfig& config) {
  auto sim = build_simulation(config);
  sim->run_until(config.horizon());
  return summarize(*sim, config);
}

RepeatedStats run_repeated(const ExperimentConfig& config, std::uint32_t k) {
  RepeatedStats stats;
  stats.runs.reserve(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    ExperimentConfig run_config = config;
    run_config.seed = config.seed + i;
    stats.runs.push_back(run_experiment(run_config));
  }
  for (std::size_t kind = 0; kind < 4; ++kind) {
    double sum = 0.0;
    for (const MetricsReport& run : stats.runs) {
      sum += static_cast<double>(run.per_kind[kind].total);
    }
    const double mean = stats.runs.empty() ? 0.0 : sum / static_cast<double>(stats.runs.size());
    stats.mean[kind] = mean;
    if (stats.runs.size() > 1) {
      double sq = 0.0;
      for (const MetricsReport& run : stats.runs) {
        const double d = static_cast<double>(run.per_kind[kind].total) - mean;
        sq += d * d;
      }
      stats.sample_stddev[kind] = std::sqrt(sq / static_cast<double>(stats.runs.size() - 1));
    }
  }
  return stats;
}

namespace {

std::string format_percent(const std::optional<double>& percent) {
  if (!percent) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", *percent);
  return buf;
}

std::string hash_hex(std::uint64_t hash) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace

std::string emit_report(const MetricsReport& report, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::csv) {
    out << "kind,total,fp,fp_percent\n";
    for (std::size_t i = 0; i < kVerdictKinds.size(); ++i) {
      if (report.per_kind[i].total == 0) continue;  // empty report: headers only
      out << to_string(kVerdictKinds[i]) << ',' << report.per_kind[i].total << ','
          << report.per_kind[i].fp << ',' << format_percent(report.per_kind[i].fp_percent) << '\n';
    }
    out << "minute,kind,count\n";
    for (std::size_t minute = 0; minute < report.minute_counts.size(); ++minute) {
      for (std::size_t i = 0; i < kVerdictKinds.size(); ++i) {
        const std::uint64_t count = report.minute_counts[minute][i];
        if (count > 0) {
          out << minute << ',' << to_string(kVerdictKinds[i]) << ',' << count << '\n';
        }
      }
    }
    out << "# config_hash=" << hash_hex(report.hash) << " seed=" << report.seed << '\n';
    return out.str();
  }

  out << "heartbeats: sent=" << report.heartbeats_sent
      << " delivered=" << report.heartbeats_delivered << " dropped=" << report.heartbeats_dropped
      << '\n';
  for (std::size_t i = 0; i < kVerdictKinds.size(); ++i) {
    out << to_string(kVerdictKinds[i]) << ": total=" << report.per_kind[i].total
        << " fp=" << report.per_kind[i].fp
        << " fp_percent=" << format_percent(report.per_kind[i].fp_percent) << '\n';
  }
  out << "verdicts: " << report.total_verdicts << '\n';
  out << "config_hash=" << hash_hex(report.hash) << " seed=" << report.seed << '\n';
  return out.str();
}

std::string emit_verdict_log(std::span<const DetectionVerdict> verdicts) {
  std::ostringstream out;
  out << "node,kind,ordinal,cc_time\n";
  for (const DetectionVerdict& verdict : verdicts) {
    out << verdict.node.value << ',' << to_string(verdict.kind) << ',';
    if (verdict.ordinal) out << *verdict.ordinal;
    out << ',' << verdict.cc_time.ticks << '\n';
  }
  return out.str();
}

ScenarioResult run_scenario(const ScenarioCell& cell, std::uint64_t seed,
                            std::uint32_t run_minutes) {
  ExperimentConfig config;
  config.run_minutes = run_minutes;
  config.seed = seed;
  config.scenario = cell;

  auto sim = build_simulation(config);
  const NodeId host = sim->hosts().front();
  const NodeId guest = sim->guests_of(host).front();
  const auto script = scenario_script(cell, config.horizon());
  const std::optional<Timestamp> onset =
      script.empty() ? std::nullopt : std::optional<Timestamp>(script.front().at);
  sim->run_until(config.horizon());

  ScenarioResult result;
  result.cell = cell;
  result.expected = scenario_expectation(cell);
  result.total_verdicts = sim->verdicts().size();

  auto malicious = [&](NodeId node) {
    return (cell.host_malicious && node == host) || (cell.guest_malicious && node == guest);
  };
  for (const DetectionVerdict& verdict : sim->verdicts()) {
    if (!onset || verdict.cc_time < *onset || !malicious(verdict.node)) continue;
    ++result.tp_verdicts;
    if (verdict.kind == VerdictKind::heartbeat_miss) {
      result.fired.heartbeat_miss = true;
    } else {
      result.fired.cc_verdict = true;
    }
  }
  for (const AccusationRecord& record : sim->signals_seen()) {
    if (record.from == guest) result.fired.guest_signal = true;
    if (record.from == host) result.fired.host_signal = true;
  }

  switch (result.expected.outcome) {
    case DetectionOutcome::trivially_clean:
      result.pass = result.total_verdicts == 0;
      if (!result.pass) result.detail = "expected a verdict-free run";
      break;
    case DetectionOutcome::not_detected:
      result.pass = result.tp_verdicts == 0;
      if (!result.pass) result.detail = "attacker was indicted but the cell predicts no detection";
      break;
    case DetectionOutcome::detected:
      result.pass = result.tp_verdicts >= 1 && result.fired.intersects(result.expected.via);
      if (!result.pass) result.detail = "no true-positive verdict through an expected channel";
      break;
  }
  return result;
}

MatrixResult run_matrix(std::uint64_t seed, std::uint32_t run_minutes) {
  MatrixResult result;
  for (const ScenarioCell& cell : ScenarioCell::all()) {
    result.cells.push_back(run_scenario(cell, seed, run_minutes));
    result.all_pass = result.all_pass && result.cells.back().pass;
  }
  return result;
}

SweepResult sweep_load(const ExperimentConfig& config, std::uint32_t steps) {
  ExperimentConfig base = config;
  base.scenario.reset();
  // The sweep isolates the static congestion knob; all noise sources are
  // frozen so the factor is the only moving part.
  base.model = SimulationModel{0.0, 0.0, 0.0, 0.0};
  base.link.loss_prob = 0.0;
  base.link.congestion_alpha = 0.0;
  if (!base.explicit_keys.contains("base_latency_ms")) base.link.base_latency_ms = 25'000;
  if (!base.explicit_keys.contains("jitter_ms")) base.link.jitter_ms = 25'000;

  SweepResult result;
  double factor = 1.0;
  for (std::uint32_t i = 0; i < steps; ++i, factor *= 2.0) {
    ExperimentConfig point = base;
    point.link.congestion_factor = factor;
    const MetricsReport report = run_experiment(point);
    const std::uint64_t timeouts = report.per_kind[1].total;  // Timeout slot
    if (!result.points.empty() && timeouts < result.points.back().timeout_total) {
      result.non_decreasing = false;
    }
    result.points.push_back({factor, timeouts});
  }
  if (result.points.size() >= 2) {
    result.grew = result.points.back().timeout_total > result.points.front().timeout_total;
  }
  return result;
}

}  // namespace hbguard
