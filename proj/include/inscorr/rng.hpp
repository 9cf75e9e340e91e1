#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace inscorr {

using Rng = std::mt19937_64;

// Named sub-streams of a master seed. Two different tags never share a stream,
// so e.g. "which examples get noise" and "how they are corrupted" stay
// independent of each other.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    // FNV-1a over the tag
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : tag) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

inline Rng make_rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    return Rng(stream_seed(seed, tag, index));
}

}  // namespace inscorr
