#pragma once

#include <cstddef>
#include <vector>

#include "fipa/attention_kernel.hpp"
#include "fipa/geometry.hpp"
#include "fipa/ipa.hpp"
#include "fipa/pair_features.hpp"
#include "fipa/tensor.hpp"

namespace fipa {

// Lifted projections with their segment widths. The attention logit of the
// quadratic formulation is recovered as a plain dot product <q_hat, k_hat>,
// and plain attention-weighted sums of v_hat rows recover all three
// aggregates at once; see the lift functions for the exact segment recipes.
struct LiftedQKV {
    Tensor q_hat;                          // [H, L, c + 5*N_query + r*d_z]
    Tensor k_hat;                          // [H, L, c + 5*N_query + r*d_z]
    Tensor v_hat;                          // [H, L, c + 3*N_value + r*d_z]
    std::vector<std::size_t> qk_segments;  // {c, 3*N_query, N_query, N_query, r*d_z}
    std::vector<std::size_t> v_segments;   // {c, 3*N_value, r*d_z}
};

// q_hat row = [ q | T_i∘q_p (xyz per point) | |T_i∘q_p|^2 per point | ones | b1 ].
Tensor lift_queries(const Tensor& q, const Tensor& qp, const FrameSet& frames, const Tensor& b1,
                    const IpaConfig& cfg);

// k_hat row = [ (w_l/sqrt(c))·k | g·T_j∘k_p | (-g/2)·ones | (-g/2)·|T_j∘k_p|^2 | b2 ]
// with g = gamma_h·w_l·w_c. The ones/norms blocks sit in the opposite order
// from q_hat on purpose: the dot product then pairs |T_i∘q|^2 with -g/2 and
// |T_j∘k|^2 with -g/2, and pairs the two point blocks into g·<T_i∘q, T_j∘k>,
// which together assemble -g/2·|T_i∘q - T_j∘k|^2 by the square expansion.
Tensor lift_keys(const Tensor& k, const Tensor& kp, const FrameSet& frames, const Tensor& b2,
                 const IpaConfig& cfg, const IpaWeights& w);

// v_hat row = [ v | T_j∘v_p (xyz per point) | z2[j] flattened ].
Tensor lift_values(const Tensor& v, const Tensor& vp, const FrameSet& frames,
                   const FactorizedPair& fp, const IpaConfig& cfg);

// Convenience bundle of the three lifts with segment bookkeeping.
LiftedQKV lift_qkv(const Projections& proj, const FrameSet& frames, const Tensor& b1,
                   const Tensor& b2, const FactorizedPair& fp, const IpaConfig& cfg,
                   const IpaWeights& w);

// Linear-memory forward pass: project, lift, run the tiled kernel once over
// all heads, split the result back into scalar/point/pair segments, map
// aggregated points through T_i^{-1}, contract the pair segment with z1_i,
// and apply the output projection. Never allocates any L×L buffer.
// Matches reference_forward on the same factorized inputs.
//
// `fully_masked`, when non-null, receives one flag per position marking rows
// that had no valid key to attend to (those output rows are zero).
Tensor flash_ipa_forward(const Tensor& s, const FactorizedPair& fp, const FrameSet& frames,
                         const IpaConfig& cfg, const IpaWeights& w, const TileSpec& tiles = {},
                         int threads = 1, std::vector<bool>* fully_masked = nullptr);

}  // namespace fipa
