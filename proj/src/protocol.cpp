#include "hbguard/protocol.hpp"

#include <algorithm>
#include <cstring>

namespace hbguard {

namespace {

// Domain-separation prefixes for the keyed hash.
constexpr std::uint8_t kDomainResponse = 0x01;
constexpr std::uint8_t kDomainKeystream = 0x02;
constexpr std::uint8_t kDomainSeal = 0x03;

void put_u16_be(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u64_be(Bytes& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>(v >> shift));
  }
}

std::uint64_t get_u64_be(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
  return v;
}

// The 32-byte agent key feeds the 16-byte hash key directly plus a prefix, so
// all key bytes bind the output.
Tag128 agent_prf(const AgentKey& key, std::uint8_t domain, std::span<const std::uint8_t> data) {
  Bytes buf;
  buf.reserve(17 + data.size());
  buf.insert(buf.end(), key.bytes.begin() + 16, key.bytes.end());
  buf.push_back(domain);
  buf.insert(buf.end(), data.begin(), data.end());
  return keyed_hash128(std::span<const std::uint8_t, 16>(key.bytes.data(), 16), buf);
}

}  // namespace

SignalPayload SignalPayload::accusation(SignalCode code, NodeId accused) {
  SignalPayload p;
  p.code = code;
  put_u64_be(p.detail, accused.value);
  return p;
}

std::optional<NodeId> SignalPayload::accused() const {
  if (detail.size() != 8) return std::nullopt;
  return NodeId{get_u64_be(detail.data())};
}

Bytes encode_heartbeat(const HeartbeatMsg& msg) {
  Bytes out;
  out.reserve(kHeartbeatMinSize + msg.signal.detail.size());
  out.push_back(static_cast<std::uint8_t>(msg.direction));
  put_u64_be(out, msg.ordinal);
  out.insert(out.end(), msg.challenge.begin(), msg.challenge.end());
  out.insert(out.end(), msg.response_tag.begin(), msg.response_tag.end());
  put_u64_be(out, static_cast<std::uint64_t>(msg.timestamp.ticks));
  out.push_back(static_cast<std::uint8_t>(msg.signal.code));
  out.push_back(static_cast<std::uint8_t>(msg.signal.detail.size()));
  out.insert(out.end(), msg.signal.detail.begin(), msg.signal.detail.end());
  return out;
}

std::optional<HeartbeatMsg> decode_heartbeat(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeartbeatMinSize) return std::nullopt;

  HeartbeatMsg msg;
  const std::uint8_t dir = bytes[0];
  if (dir != static_cast<std::uint8_t>(Direction::down) &&
      dir != static_cast<std::uint8_t>(Direction::up)) {
    return std::nullopt;
  }
  msg.direction = static_cast<Direction>(dir);
  msg.ordinal = get_u64_be(bytes.data() + 1);
  std::copy_n(bytes.data() + 9, 16, msg.challenge.begin());
  std::copy_n(bytes.data() + 25, 16, msg.response_tag.begin());
  msg.timestamp = Timestamp{static_cast<std::int64_t>(get_u64_be(bytes.data() + 41))};
  const std::uint8_t code = bytes[49];
  if (code > static_cast<std::uint8_t>(SignalCode::agent_local_anomaly)) return std::nullopt;
  msg.signal.code = static_cast<SignalCode>(code);
  const std::size_t detail_len = bytes[50];
  if (detail_len > SignalPayload::kMaxDetail) return std::nullopt;
  if (bytes.size() != kHeartbeatMinSize + detail_len) return std::nullopt;
  msg.signal.detail.assign(bytes.begin() + 51, bytes.end());

  if (msg.direction == Direction::down &&
      msg.response_tag != ResponseTag{}) {
    return std::nullopt;
  }
  return msg;
}

Nonce derive_nonce(Direction direction, std::uint64_t ordinal) {
  Nonce n{};
  n[0] = static_cast<std::uint8_t>(direction);
  for (int i = 0; i < 8; ++i) {
    n[1 + i] = static_cast<std::uint8_t>(ordinal >> (8 * (7 - i)));
  }
  return n;
}

Bytes encode_datagram(const SealedDatagram& dg) {
  Bytes out;
  out.reserve(kSealedOverhead + dg.ciphertext.size());
  out.insert(out.end(), SealedDatagram::kMagic.begin(), SealedDatagram::kMagic.end());
  put_u64_be(out, dg.sender.value);
  out.insert(out.end(), dg.nonce.begin(), dg.nonce.end());
  put_u16_be(out, static_cast<std::uint16_t>(dg.ciphertext.size()));
  out.insert(out.end(), dg.ciphertext.begin(), dg.ciphertext.end());
  out.insert(out.end(), dg.auth_tag.begin(), dg.auth_tag.end());
  return out;
}

std::optional<SealedDatagram> decode_datagram(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSealedOverhead) return std::nullopt;
  if (!std::equal(SealedDatagram::kMagic.begin(), SealedDatagram::kMagic.end(), bytes.begin())) {
    return std::nullopt;
  }
  SealedDatagram dg;
  dg.sender = NodeId{get_u64_be(bytes.data() + 4)};
  std::copy_n(bytes.data() + 12, 12, dg.nonce.begin());
  const std::size_t ct_len = (static_cast<std::size_t>(bytes[24]) << 8) | bytes[25];
  if (bytes.size() != kSealedOverhead + ct_len) return std::nullopt;
  dg.ciphertext.assign(bytes.begin() + 26, bytes.begin() + 26 + ct_len);
  std::copy_n(bytes.data() + 26 + ct_len, 16, dg.auth_tag.begin());
  return dg;
}

namespace {

Bytes keystream(const AgentKey& key, const Nonce& nonce, std::size_t len) {
  Bytes out;
  out.reserve((len + 15) & ~std::size_t{15});
  Bytes block_input(nonce.begin(), nonce.end());
  block_input.resize(nonce.size() + 8);
  for (std::uint64_t counter = 0; out.size() < len; ++counter) {
    for (int i = 0; i < 8; ++i) {
      block_input[nonce.size() + i] = static_cast<std::uint8_t>(counter >> (8 * i));
    }
    const Tag128 block = agent_prf(key, kDomainKeystream, block_input);
    out.insert(out.end(), block.begin(), block.end());
  }
  out.resize(len);
  return out;
}

ResponseTag seal_tag(const AgentKey& key, NodeId sender, const Nonce& nonce,
                     std::span<const std::uint8_t> ciphertext) {
  Bytes data;
  data.reserve(8 + nonce.size() + ciphertext.size());
  put_u64_be(data, sender.value);
  data.insert(data.end(), nonce.begin(), nonce.end());
  data.insert(data.end(), ciphertext.begin(), ciphertext.end());
  return agent_prf(key, kDomainSeal, data);
}

}  // namespace

SealedDatagram seal(const AgentKey& key, const Nonce& nonce, std::span<const std::uint8_t> plaintext) {
  SealedDatagram dg;
  dg.sender = key.node;
  dg.nonce = nonce;
  const Bytes stream = keystream(key, nonce, plaintext.size());
  dg.ciphertext.resize(plaintext.size());
  for (std::size_t i = 0; i < plaintext.size(); ++i) {
    dg.ciphertext[i] = plaintext[i] ^ stream[i];
  }
  dg.auth_tag = seal_tag(key, dg.sender, nonce, dg.ciphertext);
  return dg;
}

OpenResult open(const AgentKey& key, const SealedDatagram& dg) {
  OpenResult result;
  const ResponseTag expected = seal_tag(key, dg.sender, dg.nonce, dg.ciphertext);
  if (expected != dg.auth_tag) {
    result.status = OpenStatus::auth_failure;
    return result;
  }
  const Bytes stream = keystream(key, dg.nonce, dg.ciphertext.size());
  result.plaintext.resize(dg.ciphertext.size());
  for (std::size_t i = 0; i < dg.ciphertext.size(); ++i) {
    result.plaintext[i] = dg.ciphertext[i] ^ stream[i];
  }
  result.status = OpenStatus::ok;
  return result;
}

ResponseTag compute_response_tag(const AgentKey& key, const Challenge& challenge,
                                 std::uint64_t ordinal, Timestamp perceived_time) {
  Bytes data;
  data.reserve(challenge.size() + 16);
  data.insert(data.end(), challenge.begin(), challenge.end());
  put_u64_be(data, ordinal);
  put_u64_be(data, static_cast<std::uint64_t>(perceived_time.ticks));
  return agent_prf(key, kDomainResponse, data);
}

bool verify_response_tag(const AgentKey& key, const Challenge& challenge, std::uint64_t ordinal,
                         Timestamp perceived_time, const ResponseTag& tag) {
  return compute_response_tag(key, challenge, ordinal, perceived_time) == tag;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::optional<Bytes> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = nibble(hex[i]);
    const int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

}  // namespace hbguard
