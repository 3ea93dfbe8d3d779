#pragma once

// Virtual time model: millisecond timestamps, affine per-node clocks with
// tamper actions, and the strictly-increasing-timestamp timeline validator.

#include <compare>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace hbguard {

// Milliseconds since a fixed epoch. Signed so durations and backdated
// readings need no special casing.
struct Timestamp {
  std::int64_t ticks = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
  friend Timestamp operator+(Timestamp t, std::int64_t ms) { return Timestamp{t.ticks + ms}; }
  friend Timestamp operator-(Timestamp t, std::int64_t ms) { return Timestamp{t.ticks - ms}; }
  // Difference in milliseconds.
  friend std::int64_t operator-(Timestamp a, Timestamp b) { return a.ticks - b.ticks; }
};

// Unitless clock rate as an exact rational. 1/1 is a perfect clock.
class ClockRate {
 public:
  constexpr ClockRate() : num_(1), den_(1) {}

  static ClockRate from_ratio(std::int64_t num, std::int64_t den);
  // Rounds to microhertz resolution; good enough for configured skews.
  static ClockRate from_double(double value);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  bool positive() const { return num_ > 0; }

  // rate * dt, rounded half away from zero.
  std::int64_t scale(std::int64_t dt_ms) const;

  friend bool operator==(const ClockRate&, const ClockRate&) = default;

 private:
  ClockRate(std::int64_t num, std::int64_t den) : num_(num), den_(den) {}
  std::int64_t num_;
  std::int64_t den_;  // always > 0
};

// A commanded clock discontinuity: a step, or a new drift rate.
struct TamperAction {
  enum class Kind { jump, rate_change };

  Kind kind = Kind::jump;
  std::int64_t delta_ms = 0;  // jump only
  ClockRate new_rate;         // rate_change only

  static TamperAction jump(std::int64_t delta_ms) {
    return TamperAction{Kind::jump, delta_ms, ClockRate{}};
  }
  static TamperAction rate_change(ClockRate rate) {
    return TamperAction{Kind::rate_change, 0, rate};
  }
};

// Affine clock: reading(t) = anchor_reading + rate * (t - anchor_virtual).
// Tampering re-anchors at the tamper instant so readings stay continuous
// except for the commanded discontinuity.
struct VirtualClock {
  Timestamp anchor_virtual{0};
  Timestamp anchor_reading{0};
  ClockRate rate;

  Timestamp read(Timestamp now) const {
    return anchor_reading + rate.scale(now - anchor_virtual);
  }

  // Throws std::invalid_argument for a non-positive rate change.
  VirtualClock tampered(const TamperAction& action, Timestamp now) const;
};

struct TimelineEntry {
  std::uint64_t ordinal = 0;  // >= 1
  Timestamp reported_ts{0};   // sender's perceived time
  Timestamp receipt_ts{0};    // trusted time at arrival
};

enum class ViolationReason : std::uint8_t {
  non_increasing_timestamp,
  duplicate_ordinal,
};

struct TimelineViolation {
  std::uint64_t at_ordinal = 0;
  // For non_increasing_timestamp: the ordinal that carried the maximum
  // timestamp seen before the offending entry. For duplicate_ordinal: 0
  // (the conflict is with an earlier occurrence of at_ordinal itself).
  std::uint64_t prev_ordinal = 0;
  ViolationReason reason = ViolationReason::non_increasing_timestamp;

  friend bool operator==(const TimelineViolation&, const TimelineViolation&) = default;
};

enum class TimelineMode {
  // Flag every entry whose reported timestamp is <= the maximum reported
  // timestamp seen earlier in arrival order. Reproduces reorder-induced
  // false positives; this is what the controller runs online.
  arrival_order,
  // Sort by ordinal first, then apply the same running-maximum rule; on
  // unique ordinals this flags exactly the pairs an all-pairs
  // (o_i < o_j implies ts_i < ts_j) check would.
  ordinal_sorted,
};

// Entries must be given in arrival order. Duplicate ordinals are flagged in
// both modes; at most one violation is reported per entry.
std::vector<TimelineViolation> validate_timeline(std::span<const TimelineEntry> entries,
                                                 TimelineMode mode);

}  // namespace hbguard
