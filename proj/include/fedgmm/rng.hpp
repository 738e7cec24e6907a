#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedgmm {

// All randomness in the system flows from one master seed through named
// substreams ("datagen", "init", "sgd", "participation", ...) plus integer
// qualifiers (client id, round). Streams are derived by hashing, never by
// sharing generator state, so changing how one stage consumes randomness
// cannot perturb any other stage, and per-client streams are independent of
// execution order.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace detail

inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = detail::splitmix64(master ^ detail::fnv1a(name));
    h = detail::splitmix64(h ^ a);
    h = detail::splitmix64(h ^ b);
    return h;
}

inline std::mt19937_64 substream(std::uint64_t master, std::string_view name,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    return std::mt19937_64(substream_seed(master, name, a, b));
}

}  // namespace fedgmm
