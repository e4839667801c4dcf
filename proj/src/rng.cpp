#include "fipa/rng.hpp"

#include <cmath>
#include <numbers>

namespace fipa {

namespace {

// splitmix64 finalizer (public-domain mixing constants).
std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
    counter_ += 1;
    return mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ull);
}

double Rng::uniform() {
    // 53 high bits, shifted into (0, 1]: u = (bits + 1) / 2^53.
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
}

}  // namespace fipa
