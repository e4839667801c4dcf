#pragma once

#include <cstdint>

namespace fipa {

// Deterministic counter-based generator. Draw n is a fixed integer mix of
// (seed, n) — the splitmix64 finalizer over seed + n·golden — so a stream
// is reproducible across platforms and compilers, and independent streams
// are as cheap as picking another seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();

    // Uniform on (0, 1]; never returns 0, so log(uniform()) is always finite.
    double uniform();

    // Standard normal via Box–Muller; the second variate of each pair is
    // cached and handed out on the next call.
    double gaussian();

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace fipa
