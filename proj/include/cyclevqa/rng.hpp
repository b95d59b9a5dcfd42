#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace cyclevqa::rng {

// splitmix64 step; used to derive independent stream seeds from one base seed.
inline std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return mix(base ^ mix(stream + 1));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(seed); }

// Uniform in [0, 1) with 53 bits of mantissa. Avoids std::uniform_real_distribution,
// whose output is implementation-defined.
inline double uniform01(Engine& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

// Unbiased integer in [0, n) via rejection sampling.
inline std::uint64_t uniform_int(Engine& g, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = g();
    while (v >= limit) v = g();
    return v % n;
}

// Standard normal via Box-Muller. Stateless (two draws per call) so engine
// state alone captures the stream position.
inline double normal(Engine& g) {
    const double u1 = 1.0 - uniform01(g);  // (0, 1]
    const double u2 = uniform01(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline std::string save_state(const Engine& g) {
    std::ostringstream os;
    os << g;
    return os.str();
}

inline void load_state(Engine& g, const std::string& s) {
    std::istringstream is(s);
    is >> g;
}

}  // namespace cyclevqa::rng
