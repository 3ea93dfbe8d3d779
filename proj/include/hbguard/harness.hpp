#pragma once

// Experiment harness: flat key/value configuration with simulation-parameter
// defaults, seeded runs, false-positive accounting against the ground-truth
// log, CSV/summary emission, scenario-matrix conformance, and the congestion
// sweep.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hbguard/attacks.hpp"
#include "hbguard/simnet.hpp"

namespace hbguard {

struct ConfigParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::uint32_t run_minutes = 30;
  std::uint32_t n_hosts = 5;
  std::uint32_t guests_per_host = 20;
  CheckConfig check;
  LinkModel link;
  SimulationModel model;
  bool forgeable_agents = false;
  std::optional<ScenarioCell> scenario;
  std::uint64_t seed = 1;

  // Keys that appeared in the parsed source, for callers that overlay
  // profile defaults only where the user said nothing.
  std::set<std::string> explicit_keys;

  Timestamp horizon() const { return Timestamp{static_cast<std::int64_t>(run_minutes) * 60'000}; }
};

// Flat `key: value` lines, '#' comments; unknown keys and malformed values
// raise ConfigParseError with the line number, out-of-range values raise
// ConfigRangeError. Unspecified fields keep the simulation-parameter
// defaults (30 s heartbeat and response/timeline checks, 5 min timeout,
// guest fail 0.001%, host fail 2%, guest hack 5%, host hack 2%).
ExperimentConfig load_config(const std::string& source);
ExperimentConfig load_config_file(const std::string& path);

std::uint64_t config_hash(const ExperimentConfig& config);

struct KindStats {
  std::uint64_t total = 0;
  std::uint64_t fp = 0;
  std::optional<double> fp_percent;  // empty when total == 0
};

inline constexpr std::array<VerdictKind, 4> kVerdictKinds = {
    VerdictKind::timeline_error,
    VerdictKind::timeout_error,
    VerdictKind::response_error,
    VerdictKind::heartbeat_miss,
};

// A verdict is a true positive iff a hack record for the same node lies in
// [cc_time - window_ms, cc_time]; everything else is attributable to
// infrastructure noise.
std::array<KindStats, 4> compute_false_positives(std::span<const DetectionVerdict> verdicts,
                                                 const GroundTruthLog& truth,
                                                 std::int64_t window_ms);

struct MetricsReport {
  std::array<KindStats, 4> per_kind;  // indexed in kVerdictKinds order
  // (minute, kind index) -> count, minute = cc_time / 60000
  std::vector<std::array<std::uint64_t, 4>> minute_counts;
  std::uint64_t heartbeats_sent = 0;
  std::uint64_t heartbeats_delivered = 0;
  std::uint64_t heartbeats_dropped = 0;
  std::uint64_t total_verdicts = 0;
  std::uint64_t hash = 0;
  std::uint64_t seed = 0;
};

// Topology wiring: 1 controller + n_hosts hosts + guests_per_host guests per
// host; scenario configs force a 1 host x 1 guest noise-free world with the
// cell's scripted attacks.
std::unique_ptr<Simulation> build_simulation(const ExperimentConfig& config);

MetricsReport summarize(const Simulation& sim, const ExperimentConfig& config);
MetricsReport run_experiment(const ExperimentConfig& config);

struct RepeatedStats {
  std::array<double, 4> mean{};
  std::array<double, 4> sample_stddev{};
  std::vector<MetricsReport> runs;
};

// Executes k runs with seeds seed, seed+1, ..., seed+k-1.
RepeatedStats run_repeated(const ExperimentConfig& config, std::uint32_t k);

enum class ReportFormat { csv, summary };

std::string emit_report(const MetricsReport& report, ReportFormat format);

// Append-only verdict record stream: one CSV row per verdict.
std::string emit_verdict_log(std::span<const DetectionVerdict> verdicts);

struct ScenarioResult {
  ScenarioCell cell;
  DetectionExpectation expected;
  std::uint64_t total_verdicts = 0;
  std::uint64_t tp_verdicts = 0;  // against a malicious node, at/after onset
  DetectionChannels fired;
  bool pass = false;
  std::string detail;
};

ScenarioResult run_scenario(const ScenarioCell& cell, std::uint64_t seed,
                            std::uint32_t run_minutes = 20);

struct MatrixResult {
  std::vector<ScenarioResult> cells;
  bool all_pass = true;
};

MatrixResult run_matrix(std::uint64_t seed, std::uint32_t run_minutes = 20);

struct SweepPoint {
  double congestion_factor = 1.0;
  std::uint64_t timeout_total = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  bool non_decreasing = true;
  bool grew = false;  // strictly more timeouts at the top factor than the bottom
};

// Doubling factors 1, 2, 4, ... for `steps` points. Unless the config set
// them explicitly, link parameters take a reorder-scale stress profile
// (base 25 s, jitter 25 s, no loss, no dynamic ramp) so the static factor is
// the only variable.
SweepResult sweep_load(const ExperimentConfig& config, std::uint32_t steps);

}  // namespace hbguard
