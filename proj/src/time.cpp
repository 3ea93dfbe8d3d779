#include "hbguard/time.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace hbguard {

ClockRate ClockRate::from_ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) throw std::invalid_argument("clock rate denominator is zero");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return ClockRate{num, den};
}

ClockRate ClockRate::from_double(double value) {
  constexpr std::int64_t kScale = 1'000'000;
  return from_ratio(static_cast<std::int64_t>(std::llround(value * kScale)), kScale);
}

std::int64_t ClockRate::scale(std::int64_t dt_ms) const {
  const __int128 v = static_cast<__int128>(num_) * dt_ms;
  const __int128 half = den_ / 2;
  const __int128 q = v >= 0 ? (v + half) / den_ : (v - half) / den_;
  return static_cast<std::int64_t>(q);
}

VirtualClock VirtualClock::tampered(const TamperAction& action, Timestamp now) const {
  VirtualClock out;
  switch (action.kind) {
    case TamperAction::Kind::jump:
      // A pure shift of the reading; keeping the anchor avoids re-anchoring
      // rounding, so an opposite jump restores the clock exactly.
      out.anchor_virtual = anchor_virtual;
      out.anchor_reading = anchor_reading + action.delta_ms;
      out.rate = rate;
      break;
    case TamperAction::Kind::rate_change:
      if (!action.new_rate.positive()) {
        throw std::invalid_argument("clock rate must be > 0");
      }
      out.anchor_virtual = now;
      out.anchor_reading = read(now);
      out.rate = action.new_rate;
      break;
  }
  return out;
}

namespace {

// Running-maximum scan shared by both modes. Duplicate check comes first so
// an entry yields at most one violation.
std::vector<TimelineViolation> scan(std::span<const TimelineEntry* const> order) {
  std::vector<TimelineViolation> violations;
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(order.size());
  bool have_max = false;
  Timestamp max_ts{0};
  std::uint64_t max_ordinal = 0;

  for (const TimelineEntry* entry : order) {
    if (!seen.insert(entry->ordinal).second) {
      violations.push_back({entry->ordinal, 0, ViolationReason::duplicate_ordinal});
    } else if (have_max && entry->reported_ts <= max_ts) {
      violations.push_back({entry->ordinal, max_ordinal, ViolationReason::non_increasing_timestamp});
    }
    if (!have_max || entry->reported_ts > max_ts) {
      have_max = true;
      max_ts = entry->reported_ts;
      max_ordinal = entry->ordinal;
    }
  }
  return violations;
}

}  // namespace

std::vector<TimelineViolation> validate_timeline(std::span<const TimelineEntry> entries,
                                                 TimelineMode mode) {
  std::vector<const TimelineEntry*> order;
  order.reserve(entries.size());
  for (const TimelineEntry& e : entries) order.push_back(&e);
  if (mode == TimelineMode::ordinal_sorted) {
    std::stable_sort(order.begin(), order.end(), [](const TimelineEntry* a, const TimelineEntry* b) {
      return a->ordinal < b->ordinal;
    });
  }
  return scan(order);
}

}  // namespace hbguard
