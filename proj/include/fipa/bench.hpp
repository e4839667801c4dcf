#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fipa/model_io.hpp"

namespace fipa {

struct FitCoefficients {
    double quadratic = 0.0;
    double linear = 0.0;
    double r_squared = 0.0;
};

// Least-squares fit of y = quadratic·L² + linear·L (no constant term) over
// (L, y) points; lengths are normalized internally so the normal equations
// stay well-conditioned at large L. Throws NumericError when fewer than two
// distinct L values are present.
FitCoefficients fit_polynomial(const std::vector<std::pair<double, double>>& points);

// One synthetic benchmark problem: Gaussian single representation, Gaussian
// point cloud (whose positions become the frame translations and feed the
// k-NN distogram features), uniformly random frame rotations, and pair
// factors projected from the distogram features. The distogram's k is
// clamped to L-1 for short chains.
struct Instance {
    Tensor s;
    FactorizedPair fp;
    FrameSet frames;
};

Instance make_instance(const BenchConfig& cfg, std::size_t L, Rng& rng);

// Peak-byte estimate of the quadratic arm (dense pair + bias + logits +
// attention), used to auto-cap the reference sweep.
std::size_t estimate_reference_bytes(const IpaConfig& model, std::size_t L);

// The three benchmark commands. Each is deterministic given (cfg, seed) and
// returns a populated report; pass/fail lives in report.checks.
RunReport run_invariance(const BenchConfig& cfg, std::uint64_t seed);
RunReport run_equivalence(const BenchConfig& cfg, std::uint64_t seed);
RunReport run_scaling(const BenchConfig& cfg, std::uint64_t seed);

// Refit a previously written scaling CSV: per arm, fit `metric`
// ("peak_bytes" or "seconds") against L.
RunReport run_fit(const std::string& csv_path, const std::string& metric,
                  const BenchConfig& cfg);

}  // namespace fipa
