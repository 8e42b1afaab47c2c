#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ruleloop {

// FNV-1a, 64-bit. Used for prompt digests and simulator seeding, so it must
// be stable across platforms and runs (std::hash is not).
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// One splitmix64 step; the simulator's seedable generator.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Uniform double in [0,1) from a 64-bit draw.
constexpr double unit_double(std::uint64_t draw) noexcept {
    return static_cast<double>(draw >> 11) * 0x1.0p-53;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace ruleloop
