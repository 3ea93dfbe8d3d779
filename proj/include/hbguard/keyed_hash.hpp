#pragma once

// 128-bit keyed pseudorandom function (SipHash-2-4 construction). Used for
// response tags, datagram authentication, and the deterministic keystream of
// the test-double cipher, so traces are byte-identical across platforms.

#include <array>
#include <cstdint>
#include <span>

namespace hbguard {

using Tag128 = std::array<std::uint8_t, 16>;

Tag128 keyed_hash128(std::span<const std::uint8_t, 16> key, std::span<const std::uint8_t> data);

}  // namespace hbguard
