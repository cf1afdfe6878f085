#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tiervc {

// Deterministic splittable RNG. One 64-bit master seed is threaded through
// the whole program; every consumer derives its own stream from (seed, label)
// so draw order in one place can never shift the values seen elsewhere.
// Hand-rolled (splitmix64 core) because std:: distributions are not
// bit-reproducible across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : origin_(seed), state_(seed) {}

    // Restores a generator captured with origin()/state(), e.g. from a
    // checkpoint. The pair fully determines all future output.
    Rng(uint64_t origin, uint64_t state) : origin_(origin), state_(state) {}

    uint64_t origin() const { return origin_; }
    uint64_t state() const { return state_; }

    // Child stream that is a pure function of (origin seed, label), not of
    // how many values this instance has already produced.
    Rng derive(const std::string& label) const {
        return Rng(mix(origin_ ^ hash_label(label)));
    }
    Rng derive(const std::string& label, uint64_t index) const {
        return Rng(mix(mix(origin_ ^ hash_label(label)) ^ index));
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return finalize(state_);
    }

    // Uniform in [0, 1), 53 usable bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n). Modulo bias is negligible for the small n
    // used here and keeps the mapping platform-independent.
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

private:
    static uint64_t finalize(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    static uint64_t mix(uint64_t z) { return finalize(z + 0x9e3779b97f4a7c15ull); }
    static uint64_t hash_label(const std::string& label) {
        uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
        for (unsigned char c : label) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        return h;
    }

    uint64_t origin_;
    uint64_t state_;
};

} // namespace tiervc
