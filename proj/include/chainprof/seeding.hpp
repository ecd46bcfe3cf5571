// seeding.hpp - deterministic seed derivation and noise streams.
//
// run seed  = mix(mix(mix(seed) ^ config_index) ^ repetition)
// node seed = mix(run_seed ^ fnv1a64(node_id))
// where mix is the splitmix64 finalizer. Unit-normal draws use Box-Muller
// over a splitmix64 stream so results do not depend on the standard
// library's distribution implementations.
#pragma once

#include <cstdint>
#include <string_view>

namespace chainprof {

inline constexpr std::string_view kSeedDerivation =
    "splitmix64: run = mix(mix(mix(seed) ^ config_index) ^ repetition); node = mix(run ^ fnv1a64(node))";

constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t derive_run_seed(std::uint64_t seed, std::uint64_t config_index, std::uint64_t repetition) {
    return mix64(mix64(mix64(seed) ^ config_index) ^ repetition);
}

constexpr std::uint64_t derive_node_seed(std::uint64_t run_seed, std::string_view node) {
    return mix64(run_seed ^ fnv1a64(node));
}

class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in (0, 1].
    double next_unit() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

    double next_normal();

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace chainprof
