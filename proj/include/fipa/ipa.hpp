#pragma once

#include <cstddef>
#include <vector>

#include "fipa/geometry.hpp"
#include "fipa/pair_features.hpp"
#include "fipa/rng.hpp"
#include "fipa/tensor.hpp"

namespace fipa {

// Model hyper-parameters shared by the reference and factorized paths.
struct IpaConfig {
    std::size_t d_in = 32;     // single-representation width
    std::size_t d_z = 4;       // pair channel width
    std::size_t heads = 2;     // attention heads H
    std::size_t c = 8;         // scalar channels per head
    std::size_t n_query = 2;   // query/key points per head
    std::size_t n_value = 2;   // value points per head
    std::size_t rank = 2;      // pair factor rank r
    Precision precision = Precision::f64;
    bool enforce_head_cap = true;

    // Lifted head widths of the factorized path; capped at 256 because a
    // fused kernel keeps one head's row in fast memory.
    std::size_t qk_width() const { return c + 5 * n_query + rank * d_z; }
    std::size_t v_width() const { return c + 3 * n_value + rank * d_z; }
    static constexpr std::size_t head_cap = 256;

    void validate() const;
};

// All learned parameters for one IPA layer, plus the two fixed logit
// weights. Per-head projection matrices are stored fused with head-major
// columns: column (h*width + ch) belongs to head h.
struct IpaWeights {
    Tensor w_q, w_k, w_v;     // [d_in, H*c] scalar projections
    Tensor w_qp, w_kp, w_vp;  // [d_in, H*N*3] point projections, (head, point, xyz) columns
    Tensor w_bias;            // [H, d_z] per-head pair bias weights, no constant term
    Tensor gamma_raw;         // [H] raw distance gates, gamma = softplus(gamma_raw)
    Tensor w_out;             // [H*(d_z + c + 4*N_value), d_in] output projection
    Tensor b_out;             // [d_in]
    double w_l = 0.0;         // overall logit scale
    double w_c = 0.0;         // distance-term scale

    // Gaussian init scaled by 1/sqrt(fan_in); gamma_raw set so gamma = 1;
    // zero output bias; w_l = sqrt(1/3), w_c = sqrt(2/(9*N_query)).
    static IpaWeights init(const IpaConfig& cfg, Rng& rng);

    std::vector<double> gamma() const;  // softplus(gamma_raw), one value per head
};

// Scalar and point projections of the single representation, head-major.
struct Projections {
    Tensor q, k, v;     // [H, L, c]
    Tensor qp, kp, vp;  // [H, L, N, 3] local-frame coordinates
};

Projections project_inputs(const Tensor& s, const IpaConfig& cfg, const IpaWeights& w);

// Exact attention logits, materialized densely as [H, L, L]:
//   w_l * ( q·k/sqrt(c) + bias_hij - (gamma_h*w_c/2) * sum_p |T_i q_p - T_j k_p|^2 )
// `bias` is the dense per-head pair bias [H, L, L].
Tensor attention_logits(const Projections& proj, const FrameSet& frames, const Tensor& bias,
                        const IpaConfig& cfg, const IpaWeights& w);

// Exactly one of the two pair forms must be set.
struct PairRep {
    const Tensor* dense = nullptr;           // [L, L, d_z]
    const FactorizedPair* factors = nullptr;  // materialized internally when given
};

// Quadratic-memory forward pass: dense logits, dense attention weights,
// value/pair/point aggregation, and the output projection of
// concat(pair-aggregate, scalar-aggregate, points, point norms) per head.
// Masked positions neither attend nor contribute and their output rows are
// zero.
Tensor reference_forward(const Tensor& s, const PairRep& pair, const FrameSet& frames,
                         const IpaConfig& cfg, const IpaWeights& w);

}  // namespace fipa
