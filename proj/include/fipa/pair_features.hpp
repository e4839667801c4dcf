#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "fipa/tensor.hpp"

namespace fipa {

// Rank-r factorization of an L×L×d_z pair representation:
//   z_ij[d] = sum_rho z1[i,rho,d] * z2[j,rho,d]
// Only the two L×r×d_z factors are ever stored; materializing the dense
// tensor is reserved for oracles and small problems.
struct FactorizedPair {
    Tensor z1;  // [L, r, d_z]
    Tensor z2;  // [L, r, d_z]

    std::size_t length() const { return z1.dim(0); }
    std::size_t rank() const { return z1.dim(1); }
    std::size_t channels() const { return z1.dim(2); }
};

// Parameters of the k-nearest-neighbor distogram features.
struct DistogramSpec {
    std::size_t k = 20;       // neighbors kept per residue
    std::size_t n_bins = 22;  // one-hot distance bins
    double d_min = 2.0;       // Angstrom, lower bin edge
    double d_max = 22.0;      // Angstrom, upper bin edge
    std::size_t pe_dim = 16;  // sinusoidal encoding width for the index offset
};

// Per-residue neighbor features: for each residue the k nearest other
// residues by Euclidean distance (ties broken toward the lower index), each
// encoded as a one-hot over uniform distance bins (out-of-range distances
// clip into the end bins) concatenated with a sinusoidal encoding of the
// signed index offset j-i. Output is [L, k, n_bins + pe_dim] and depends on
// the points only through pairwise distances, so it is rigid-motion
// invariant by construction.
Tensor knn_distogram(const Tensor& translations, const DistogramSpec& spec);

// Interleaved sin/cos sinusoids at geometrically spaced frequencies
// (1 down to 1e-4), one row per offset: row -> [sin(x·f0), cos(x·f0), ...].
Tensor positional_encoding(const std::vector<std::int64_t>& offsets, std::size_t dim);

// Two independent linear projections of the same per-residue features,
// reshaped to the [L, r, d_z] factor layout. w1 and w2 are [f, r·d_z].
FactorizedPair build_factors(const Tensor& features, std::size_t r, std::size_t d_z,
                             const Tensor& w1, const Tensor& w2);

// Materialize the dense [L, L, d_z] pair tensor. Quadratic by design;
// oracle and reference paths only.
Tensor dense_pair_from_factors(const FactorizedPair& fp);

// Lifted bias factors for H heads:
//   b1[i,h] = flatten(z1[i]),  b2[j,h] = flatten(w^h ⊙ z2[j])  (w broadcast over rho)
// so that <b1[i,h], b2[j,h]> = sum_d w[h,d]·z_ij[d], the per-head scalar
// bias of the attention logits. Returns (b1, b2), each [L, H, r·d_z].
std::pair<Tensor, Tensor> bias_factors(const FactorizedPair& fp, const Tensor& per_head_weights);

}  // namespace fipa
