#include "fipa/flash_ipa.hpp"

#include <cmath>

#include "fipa/error.hpp"

namespace fipa {

namespace {

void check_lift_inputs(const Tensor& scalar, const Tensor& points, const FrameSet& frames,
                       std::size_t c, std::size_t n_points) {
    const std::size_t L = frames.size();
    FIPA_REQUIRE(scalar.rank() == 3 && scalar.dim(1) == L && scalar.dim(2) == c,
                 "scalar projection must be [H, L, c]");
    FIPA_REQUIRE(points.rank() == 4 && points.dim(0) == scalar.dim(0) && points.dim(1) == L &&
                     points.dim(2) == n_points && points.dim(3) == 3,
                 "point projection must be [H, L, N, 3]");
}

}  // namespace

Tensor lift_queries(const Tensor& q, const Tensor& qp, const FrameSet& frames, const Tensor& b1,
                    const IpaConfig& cfg) {
    check_lift_inputs(q, qp, frames, cfg.c, cfg.n_query);
    const std::size_t L = frames.size();
    const std::size_t H = cfg.heads;
    const std::size_t bias_w = cfg.rank * cfg.d_z;
    FIPA_REQUIRE(b1.rank() == 3 && b1.dim(0) == L && b1.dim(1) == H && b1.dim(2) == bias_w,
                 "b1 must be [L, H, r*d_z]");

    Tensor out({H, L, cfg.qk_width()}, q.precision());
    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < L; ++i) {
            std::size_t off = 0;
            for (std::size_t ch = 0; ch < cfg.c; ++ch) {
                out.set({h, i, off++}, q.at({h, i, ch}));
            }
            const std::size_t norm_base = off + 3 * cfg.n_query;
            for (std::size_t p = 0; p < cfg.n_query; ++p) {
                const Vec3 local = {qp.at({h, i, p, 0}), qp.at({h, i, p, 1}),
                                    qp.at({h, i, p, 2})};
                const Vec3 g = apply(frames.frames[i], local);
                out.set({h, i, off++}, g[0]);
                out.set({h, i, off++}, g[1]);
                out.set({h, i, off++}, g[2]);
                out.set({h, i, norm_base + p}, g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
            }
            off = norm_base + cfg.n_query;
            for (std::size_t p = 0; p < cfg.n_query; ++p) out.set({h, i, off++}, 1.0);
            for (std::size_t e = 0; e < bias_w; ++e) out.set({h, i, off++}, b1.at({i, h, e}));
        }
    }
    return out;
}

Tensor lift_keys(const Tensor& k, const Tensor& kp, const FrameSet& frames, const Tensor& b2,
                 const IpaConfig& cfg, const IpaWeights& w) {
    check_lift_inputs(k, kp, frames, cfg.c, cfg.n_query);
    const std::size_t L = frames.size();
    const std::size_t H = cfg.heads;
    const std::size_t bias_w = cfg.rank * cfg.d_z;
    FIPA_REQUIRE(b2.rank() == 3 && b2.dim(0) == L && b2.dim(1) == H && b2.dim(2) == bias_w,
                 "b2 must be [L, H, r*d_z]");

    const std::vector<double> gamma = w.gamma();
    const double scalar_scale = w.w_l / std::sqrt(static_cast<double>(cfg.c));

    Tensor out({H, L, cfg.qk_width()}, k.precision());
    for (std::size_t h = 0; h < H; ++h) {
        const double g_scale = gamma[h] * w.w_l * w.w_c;
        for (std::size_t j = 0; j < L; ++j) {
            std::size_t off = 0;
            for (std::size_t ch = 0; ch < cfg.c; ++ch) {
                out.set({h, j, off++}, scalar_scale * k.at({h, j, ch}));
            }
            const std::size_t ones_base = off + 3 * cfg.n_query;
            for (std::size_t p = 0; p < cfg.n_query; ++p) {
                const Vec3 local = {kp.at({h, j, p, 0}), kp.at({h, j, p, 1}),
                                    kp.at({h, j, p, 2})};
                const Vec3 g = apply(frames.frames[j], local);
                out.set({h, j, off++}, g_scale * g[0]);
                out.set({h, j, off++}, g_scale * g[1]);
                out.set({h, j, off++}, g_scale * g[2]);
                out.set({h, j, ones_base + p}, -0.5 * g_scale);
                out.set({h, j, ones_base + cfg.n_query + p},
                        -0.5 * g_scale * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]));
            }
            off = ones_base + 2 * cfg.n_query;
            for (std::size_t e = 0; e < bias_w; ++e) out.set({h, j, off++}, b2.at({j, h, e}));
        }
    }
    return out;
}

Tensor lift_values(const Tensor& v, const Tensor& vp, const FrameSet& frames,
                   const FactorizedPair& fp, const IpaConfig& cfg) {
    check_lift_inputs(v, vp, frames, cfg.c, cfg.n_value);
    const std::size_t L = frames.size();
    const std::size_t H = cfg.heads;
    FIPA_REQUIRE(fp.length() == L && fp.rank() == cfg.rank && fp.channels() == cfg.d_z,
                 "factor shapes disagree with the configuration");
    const std::size_t pair_w = cfg.rank * cfg.d_z;

    Tensor out({H, L, cfg.v_width()}, v.precision());
    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t j = 0; j < L; ++j) {
            std::size_t off = 0;
            for (std::size_t ch = 0; ch < cfg.c; ++ch) {
                out.set({h, j, off++}, v.at({h, j, ch}));
            }
            for (std::size_t p = 0; p < cfg.n_value; ++p) {
                const Vec3 local = {vp.at({h, j, p, 0}), vp.at({h, j, p, 1}),
                                    vp.at({h, j, p, 2})};
                const Vec3 g = apply(frames.frames[j], local);
                out.set({h, j, off++}, g[0]);
                out.set({h, j, off++}, g[1]);
                out.set({h, j, off++}, g[2]);
            }
            for (std::size_t e = 0; e < pair_w; ++e) {
                out.set({h, j, off++}, fp.z2.get_flat(j * pair_w + e));
            }
        }
    }
    return out;
}

LiftedQKV lift_qkv(const Projections& proj, const FrameSet& frames, const Tensor& b1,
                   const Tensor& b2, const FactorizedPair& fp, const IpaConfig& cfg,
                   const IpaWeights& w) {
    LiftedQKV lifted;
    lifted.q_hat = lift_queries(proj.q, proj.qp, frames, b1, cfg);
    lifted.k_hat = lift_keys(proj.k, proj.kp, frames, b2, cfg, w);
    lifted.v_hat = lift_values(proj.v, proj.vp, frames, fp, cfg);
    lifted.qk_segments = {cfg.c, 3 * cfg.n_query, cfg.n_query, cfg.n_query,
                          cfg.rank * cfg.d_z};
    lifted.v_segments = {cfg.c, 3 * cfg.n_value, cfg.rank * cfg.d_z};
    return lifted;
}

Tensor flash_ipa_forward(const Tensor& s, const FactorizedPair& fp, const FrameSet& frames,
                         const IpaConfig& cfg, const IpaWeights& w, const TileSpec& tiles,
                         int threads, std::vector<bool>* fully_masked) {
    cfg.validate();
    const std::size_t L = frames.size();
    FIPA_REQUIRE(L >= 1, "empty frame set");
    FIPA_REQUIRE(frames.mask.size() == L, "frame mask length mismatch");
    FIPA_REQUIRE(s.rank() == 2 && s.dim(0) == L && s.dim(1) == cfg.d_in,
                 "single representation must be [L, d_in]");
    FIPA_REQUIRE(s.precision() == cfg.precision, "input precision differs from configuration");
    FIPA_REQUIRE(fp.length() == L && fp.rank() == cfg.rank && fp.channels() == cfg.d_z,
                 "factor shapes disagree with the configuration");
    FIPA_REQUIRE(fp.z1.precision() == cfg.precision && fp.z2.precision() == cfg.precision,
                 "factor precision differs from configuration");

    std::size_t n_valid = 0;
    for (bool m : frames.mask) n_valid += m ? 1 : 0;
    if (fully_masked != nullptr) fully_masked->assign(L, n_valid == 0);
    if (n_valid == 0) return Tensor::zeros({L, cfg.d_in}, cfg.precision);

    // Fold the overall logit scale into the per-head bias weights so the
    // lifted dot product carries w_l on every term.
    Tensor scaled_bias_w({cfg.heads, cfg.d_z}, cfg.precision);
    for (std::size_t e = 0; e < scaled_bias_w.size(); ++e) {
        scaled_bias_w.set_flat(e, w.w_l * w.w_bias.get_flat(e));
    }
    const auto [b1, b2] = bias_factors(fp, scaled_bias_w);

    const Projections proj = project_inputs(s, cfg, w);
    const LiftedQKV lifted = lift_qkv(proj, frames, b1, b2, fp, cfg, w);

    Tensor o_hat = flash_attention(lifted.q_hat, lifted.k_hat, lifted.v_hat, frames.mask, tiles,
                                   threads, nullptr);

    // Split each aggregated row back apart and rebuild the per-head feature
    // block in the order (pair aggregate | scalar aggregate | points | norms).
    const std::size_t pair_w = cfg.rank * cfg.d_z;
    const std::size_t point_base = cfg.c;
    const std::size_t pair_base = cfg.c + 3 * cfg.n_value;
    const std::size_t seg = cfg.d_z + cfg.c + 4 * cfg.n_value;
    Tensor feat({L, cfg.heads * seg}, cfg.precision);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        for (std::size_t i = 0; i < L; ++i) {
            const std::size_t fbase = i * cfg.heads * seg + h * seg;
            // pair contraction: o~_i[d] = sum_rho z1[i,rho,d] · agg(z2)[rho,d]
            for (std::size_t d = 0; d < cfg.d_z; ++d) {
                double acc = 0.0;
                for (std::size_t rho = 0; rho < cfg.rank; ++rho) {
                    acc += fp.z1.get_flat((i * cfg.rank + rho) * cfg.d_z + d) *
                           o_hat.at({h, i, pair_base + rho * cfg.d_z + d});
                }
                feat.set_flat(fbase + d, acc);
            }
            for (std::size_t ch = 0; ch < cfg.c; ++ch) {
                feat.set_flat(fbase + cfg.d_z + ch, o_hat.at({h, i, ch}));
            }
            for (std::size_t p = 0; p < cfg.n_value; ++p) {
                const Vec3 global = {o_hat.at({h, i, point_base + 3 * p + 0}),
                                     o_hat.at({h, i, point_base + 3 * p + 1}),
                                     o_hat.at({h, i, point_base + 3 * p + 2})};
                const Vec3 local = apply_inverse(frames.frames[i], global);
                feat.set_flat(fbase + cfg.d_z + cfg.c + 3 * p + 0, local[0]);
                feat.set_flat(fbase + cfg.d_z + cfg.c + 3 * p + 1, local[1]);
                feat.set_flat(fbase + cfg.d_z + cfg.c + 3 * p + 2, local[2]);
                const double nrm =
                    std::sqrt(local[0] * local[0] + local[1] * local[1] + local[2] * local[2]);
                feat.set_flat(fbase + cfg.d_z + cfg.c + 3 * cfg.n_value + p, nrm);
            }
        }
    }

    Tensor out = linear(feat, w.w_out, w.b_out);
    for (std::size_t i = 0; i < L; ++i) {
        if (frames.mask[i]) continue;
        for (std::size_t d = 0; d < cfg.d_in; ++d) out.set_flat(i * cfg.d_in + d, 0.0);
    }
    return out;
}

}  // namespace fipa
