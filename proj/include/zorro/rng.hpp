#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace zorro {

// splitmix64 finalizer, used to turn (seed, tag) pairs into well-spread
// child seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_tag(std::string_view tag) {
    // FNV-1a
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// A named, value-semantic random stream. Child streams are derived from
// (state, tag) so any worker partitioning of the same stream tree draws
// identical values. Copying a stream copies its exact position.
class RngStream {
public:
    RngStream() : RngStream(0) {}
    explicit RngStream(uint64_t seed) : state_(mix64(seed)), eng_(mix64(state_ ^ 0xa02b'dbf7'bb3c'0a7ULL)) {}

    RngStream child(uint64_t tag) const { return RngStream(raw(), tag); }
    RngStream child(std::string_view tag) const { return child(hash_tag(tag)); }

    uint64_t next_u64() { return eng_(); }

    double uniform01() {
        return std::generate_canonical<double, 53>(eng_);
    }

    // uniform index in [0, n)
    size_t index(size_t n) {
        return std::uniform_int_distribution<size_t>(0, n - 1)(eng_);
    }

    double normal(double mu, double sigma) {
        return std::normal_distribution<double>(mu, sigma)(eng_);
    }

    std::mt19937_64& engine() { return eng_; }

private:
    RngStream(uint64_t state, uint64_t tag) : state_(mix64(state ^ mix64(tag))), eng_(mix64(state_ ^ 0xa02b'dbf7'bb3c'0a7ULL)) {}
    uint64_t raw() const { return state_; }

    uint64_t state_;
    std::mt19937_64 eng_;
};

}  // namespace zorro
