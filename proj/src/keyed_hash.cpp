#include "hbguard/keyed_hash.hpp"

#include <bit>
#include <cstddef>
#include <cstring>

namespace hbguard {

namespace {

inline std::uint64_t load_le64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline void store_le64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

struct SipState {
  std::uint64_t v0, v1, v2, v3;

  void round() {
    v0 += v1;
    v1 = std::rotl(v1, 13);
    v1 ^= v0;
    v0 = std::rotl(v0, 32);
    v2 += v3;
    v3 = std::rotl(v3, 16);
    v3 ^= v2;
    v0 += v3;
    v3 = std::rotl(v3, 21);
    v3 ^= v0;
    v2 += v1;
    v1 = std::rotl(v1, 17);
    v1 ^= v2;
    v2 = std::rotl(v2, 32);
  }
};

}  // namespace

Tag128 keyed_hash128(std::span<const std::uint8_t, 16> key, std::span<const std::uint8_t> data) {
  const std::uint64_t k0 = load_le64(key.data());
  const std::uint64_t k1 = load_le64(key.data() + 8);

  SipState s{
      k0 ^ 0x736f6d6570736575ULL,
      k1 ^ 0x646f72616e646f6dULL,
      k0 ^ 0x6c7967656e657261ULL,
      k1 ^ 0x7465646279746573ULL,
  };
  s.v1 ^= 0xee;  // 128-bit output variant

  const std::size_t n = data.size();
  const std::size_t full = n & ~std::size_t{7};
  for (std::size_t i = 0; i < full; i += 8) {
    const std::uint64_t m = load_le64(data.data() + i);
    s.v3 ^= m;
    s.round();
    s.round();
    s.v0 ^= m;
  }

  std::uint64_t last = static_cast<std::uint64_t>(n & 0xff) << 56;
  for (std::size_t i = full; i < n; ++i) {
    last |= static_cast<std::uint64_t>(data[i]) << (8 * (i - full));
  }
  s.v3 ^= last;
  s.round();
  s.round();
  s.v0 ^= last;

  s.v2 ^= 0xee;
  for (int i = 0; i < 4; ++i) s.round();
  const std::uint64_t h0 = s.v0 ^ s.v1 ^ s.v2 ^ s.v3;

  s.v1 ^= 0xdd;
  for (int i = 0; i < 4; ++i) s.round();
  const std::uint64_t h1 = s.v0 ^ s.v1 ^ s.v2 ^ s.v3;

  Tag128 out;
  store_le64(out.data(), h0);
  store_le64(out.data() + 8, h1);
  return out;
}

}  // namespace hbguard
