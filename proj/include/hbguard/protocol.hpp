#pragma once

// Heartbeat wire format, the sealed-datagram envelope, and the
// challenge/response computation. Datagram semantics throughout: no acks, no
// retransmission; loss is treated as signal by the controller, not recovered
// here.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hbguard/keyed_hash.hpp"
#include "hbguard/time.hpp"

namespace hbguard {

using Bytes = std::vector<std::uint8_t>;

// Node 0 is reserved for the cloud controller.
struct NodeId {
  std::uint64_t value = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

inline constexpr NodeId kControllerId{0};

enum class NodeClass : std::uint8_t { host, guest };

struct NodeRole {
  NodeClass cls = NodeClass::host;
  NodeId host;  // meaningful for guests only

  static NodeRole host_role() { return {NodeClass::host, NodeId{}}; }
  static NodeRole guest_of(NodeId host) { return {NodeClass::guest, host}; }
};

// 32 opaque key bytes shared between one node and the controller.
struct AgentKey {
  std::array<std::uint8_t, 32> bytes{};
  NodeId node;
};

enum class Direction : std::uint8_t { down = 0x01, up = 0x02 };

enum class SignalCode : std::uint8_t {
  none = 0,
  guest_reports_host_compromised = 1,
  host_reports_guest_compromised = 2,
  agent_local_anomaly = 3,
};

// Covert signal riding inside a regular heartbeat. detail carries the accused
// node id (8 bytes big-endian) for accusation codes.
struct SignalPayload {
  SignalCode code = SignalCode::none;
  Bytes detail;

  static constexpr std::size_t kMaxDetail = 64;
  static SignalPayload accusation(SignalCode code, NodeId accused);
  std::optional<NodeId> accused() const;

  friend bool operator==(const SignalPayload&, const SignalPayload&) = default;
};

using Challenge = std::array<std::uint8_t, 16>;
using ResponseTag = std::array<std::uint8_t, 16>;

// Down: controller -> agent, carrying a fresh challenge and trusted time.
// Up: agent -> controller, echoing the answered challenge with a response tag
// over (challenge, ordinal, perceived time).
struct HeartbeatMsg {
  Direction direction = Direction::down;
  std::uint64_t ordinal = 0;
  Challenge challenge{};
  ResponseTag response_tag{};  // zeroed on down
  Timestamp timestamp{0};
  SignalPayload signal;

  friend bool operator==(const HeartbeatMsg&, const HeartbeatMsg&) = default;
};

inline constexpr std::size_t kHeartbeatMinSize = 51;
inline constexpr std::size_t kHeartbeatMaxSize = kHeartbeatMinSize + SignalPayload::kMaxDetail;

// Fixed layout: direction(1) ordinal(8 BE) challenge(16) response_tag(16)
// timestamp(8 BE signed) signal_code(1) detail_len(1) detail. Decode is the
// exact inverse and rejects trailing bytes, truncation, unknown direction or
// signal code, oversized detail, and a down with a non-zero response tag.
Bytes encode_heartbeat(const HeartbeatMsg& msg);
std::optional<HeartbeatMsg> decode_heartbeat(std::span<const std::uint8_t> bytes);

using Nonce = std::array<std::uint8_t, 12>;

// Deterministic per-stream nonce: distinct ordinals yield distinct nonces,
// and the (key, direction, ordinal) triple always yields the same one.
Nonce derive_nonce(Direction direction, std::uint64_t ordinal);

// Wire layout: "CRF1"(4) sender(8 BE) nonce(12) ct_len(2 BE) ciphertext tag(16).
struct SealedDatagram {
  static constexpr std::array<std::uint8_t, 4> kMagic{'C', 'R', 'F', '1'};

  NodeId sender;
  Nonce nonce{};
  Bytes ciphertext;
  ResponseTag auth_tag{};
};

inline constexpr std::size_t kSealedOverhead = 4 + 8 + 12 + 2 + 16;

Bytes encode_datagram(const SealedDatagram& dg);
std::optional<SealedDatagram> decode_datagram(std::span<const std::uint8_t> bytes);

enum class OpenStatus : std::uint8_t { ok, auth_failure, malformed };

struct OpenResult {
  OpenStatus status = OpenStatus::malformed;
  Bytes plaintext;

  bool ok() const { return status == OpenStatus::ok; }
};

// Deterministic authenticated envelope: plaintext XOR keyed keystream, tag
// over sender‖nonce‖ciphertext. Any single flipped bit in ciphertext, tag,
// nonce or sender fails authentication; a different node's key fails too.
// Any standard AEAD could replace this pair behind the same contract; this
// construction is kept so simulation traces are seed-reproducible.
SealedDatagram seal(const AgentKey& key, const Nonce& nonce, std::span<const std::uint8_t> plaintext);
OpenResult open(const AgentKey& key, const SealedDatagram& dg);

// Keyed response tag binding challenge, ordinal and perceived time; binding
// the time prevents replaying an old response under a fresh timestamp.
ResponseTag compute_response_tag(const AgentKey& key, const Challenge& challenge,
                                 std::uint64_t ordinal, Timestamp perceived_time);
bool verify_response_tag(const AgentKey& key, const Challenge& challenge, std::uint64_t ordinal,
                         Timestamp perceived_time, const ResponseTag& tag);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::optional<Bytes> from_hex(std::string_view hex);

}  // namespace hbguard
