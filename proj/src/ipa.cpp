#include "fipa/ipa.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "fipa/error.hpp"

namespace fipa {

void IpaConfig::validate() const {
    FIPA_REQUIRE(d_in > 0 && d_z > 0 && heads > 0 && c > 0 && n_query > 0 && n_value > 0 &&
                     rank > 0,
                 "all IpaConfig dimensions must be positive");
    if (enforce_head_cap) {
        const std::size_t widest = std::max(qk_width(), v_width());
        FIPA_REQUIRE(widest <= head_cap, "lifted head width ", widest, " exceeds the cap of ",
                     head_cap, "; shrink c/N/r*d_z or set enforce_head_cap=false");
    }
}

namespace {

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Raw value whose softplus is exactly 1: ln(e - 1).
constexpr double kGammaRawUnit = 0.5413248546129181;

// [L, H*w] -> [H, L, w]
Tensor to_head_major(const Tensor& x, std::size_t H, std::size_t w) {
    const std::size_t L = x.dim(0);
    Tensor out({H, L, w}, x.precision());
    const std::size_t esz = element_size(x.precision());
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t h = 0; h < H; ++h) {
            std::memcpy(out.raw() + (h * L + i) * w * esz, x.raw() + (i * H + h) * w * esz,
                        w * esz);
        }
    }
    return out;
}

// Push local-frame points [H, L, N, 3] through each position's frame; always
// double precision, since frame arithmetic anchors the invariance budget.
std::vector<double> globalize_points(const Tensor& pts, const FrameSet& frames) {
    const std::size_t H = pts.dim(0);
    const std::size_t L = pts.dim(1);
    const std::size_t N = pts.dim(2);
    std::vector<double> out(H * L * N * 3);
    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t p = 0; p < N; ++p) {
                const Vec3 local = {pts.at({h, i, p, 0}), pts.at({h, i, p, 1}),
                                    pts.at({h, i, p, 2})};
                const Vec3 global = apply(frames.frames[i], local);
                double* o = out.data() + ((h * L + i) * N + p) * 3;
                o[0] = global[0];
                o[1] = global[1];
                o[2] = global[2];
            }
        }
    }
    return out;
}

template <class T>
void logits_core(const T* q, const T* k, const T* bias, const double* gq, const double* gk,
                 std::size_t H, std::size_t L, std::size_t c, std::size_t n_query,
                 const std::vector<double>& gamma, double w_l, double w_c, T* out) {
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));
    for (std::size_t h = 0; h < H; ++h) {
        const double dist_coef = 0.5 * gamma[h] * w_c;
        for (std::size_t i = 0; i < L; ++i) {
            const T* qi = q + (h * L + i) * c;
            const double* gqi = gq + (h * L + i) * n_query * 3;
            const T* brow = bias + (h * L + i) * L;
            T* orow = out + (h * L + i) * L;
            for (std::size_t j = 0; j < L; ++j) {
                const T* kj = k + (h * L + j) * c;
                double qk = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    qk += static_cast<double>(qi[ch]) * static_cast<double>(kj[ch]);
                }
                const double* gkj = gk + (h * L + j) * n_query * 3;
                double dist = 0.0;
                for (std::size_t p = 0; p < n_query; ++p) {
                    const double dx = gqi[3 * p + 0] - gkj[3 * p + 0];
                    const double dy = gqi[3 * p + 1] - gkj[3 * p + 1];
                    const double dz = gqi[3 * p + 2] - gkj[3 * p + 2];
                    dist += dx * dx + dy * dy + dz * dz;
                }
                orow[j] = static_cast<T>(
                    w_l * (inv_sqrt_c * qk + static_cast<double>(brow[j]) - dist_coef * dist));
            }
        }
    }
}

template <class T>
void dense_bias_core(const T* z, const T* wb, std::size_t H, std::size_t L, std::size_t d_z,
                     T* out) {
    for (std::size_t h = 0; h < H; ++h) {
        const T* wh = wb + h * d_z;
        for (std::size_t i = 0; i < L; ++i) {
            T* orow = out + (h * L + i) * L;
            for (std::size_t j = 0; j < L; ++j) {
                const T* zij = z + (i * L + j) * d_z;
                double acc = 0.0;
                for (std::size_t d = 0; d < d_z; ++d) {
                    acc += static_cast<double>(wh[d]) * static_cast<double>(zij[d]);
                }
                orow[j] = static_cast<T>(acc);
            }
        }
    }
}

template <class T>
void aggregate_core(const T* attn, const T* z, const T* v, const double* gv,
                    const FrameSet& frames, std::size_t H, std::size_t L, std::size_t d_z,
                    std::size_t c, std::size_t n_value, T* feat) {
    const std::size_t seg = d_z + c + 4 * n_value;
    std::vector<double> acc_z(d_z);
    std::vector<double> acc_v(c);
    std::vector<double> acc_p(3 * n_value);
    for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < L; ++i) {
            std::fill(acc_z.begin(), acc_z.end(), 0.0);
            std::fill(acc_v.begin(), acc_v.end(), 0.0);
            std::fill(acc_p.begin(), acc_p.end(), 0.0);
            const T* arow = attn + (h * L + i) * L;
            for (std::size_t j = 0; j < L; ++j) {
                const double a = static_cast<double>(arow[j]);
                const T* zij = z + (i * L + j) * d_z;
                for (std::size_t d = 0; d < d_z; ++d) {
                    acc_z[d] += a * static_cast<double>(zij[d]);
                }
                const T* vj = v + (h * L + j) * c;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    acc_v[ch] += a * static_cast<double>(vj[ch]);
                }
                const double* gvj = gv + (h * L + j) * n_value * 3;
                for (std::size_t e = 0; e < 3 * n_value; ++e) acc_p[e] += a * gvj[e];
            }
            T* frow = feat + i * H * seg + h * seg;
            for (std::size_t d = 0; d < d_z; ++d) frow[d] = static_cast<T>(acc_z[d]);
            for (std::size_t ch = 0; ch < c; ++ch) frow[d_z + ch] = static_cast<T>(acc_v[ch]);
            for (std::size_t p = 0; p < n_value; ++p) {
                const Vec3 global = {acc_p[3 * p + 0], acc_p[3 * p + 1], acc_p[3 * p + 2]};
                const Vec3 local = apply_inverse(frames.frames[i], global);
                frow[d_z + c + 3 * p + 0] = static_cast<T>(local[0]);
                frow[d_z + c + 3 * p + 1] = static_cast<T>(local[1]);
                frow[d_z + c + 3 * p + 2] = static_cast<T>(local[2]);
                const double nrm =
                    std::sqrt(local[0] * local[0] + local[1] * local[1] + local[2] * local[2]);
                frow[d_z + c + 3 * n_value + p] = static_cast<T>(nrm);
            }
        }
    }
}

double lowest_finite(Precision p) {
    return p == Precision::f32 ? -static_cast<double>(std::numeric_limits<float>::max())
                               : std::numeric_limits<double>::lowest();
}

}  // namespace

IpaWeights IpaWeights::init(const IpaConfig& cfg, Rng& rng) {
    cfg.validate();
    const Precision p = cfg.precision;
    const double s_in = 1.0 / std::sqrt(static_cast<double>(cfg.d_in));
    IpaWeights w;
    w.w_q = gaussian(rng, {cfg.d_in, cfg.heads * cfg.c}, s_in, p);
    w.w_k = gaussian(rng, {cfg.d_in, cfg.heads * cfg.c}, s_in, p);
    w.w_v = gaussian(rng, {cfg.d_in, cfg.heads * cfg.c}, s_in, p);
    w.w_qp = gaussian(rng, {cfg.d_in, cfg.heads * cfg.n_query * 3}, s_in, p);
    w.w_kp = gaussian(rng, {cfg.d_in, cfg.heads * cfg.n_query * 3}, s_in, p);
    w.w_vp = gaussian(rng, {cfg.d_in, cfg.heads * cfg.n_value * 3}, s_in, p);
    w.w_bias =
        gaussian(rng, {cfg.heads, cfg.d_z}, 1.0 / std::sqrt(static_cast<double>(cfg.d_z)), p);
    w.gamma_raw = Tensor::full({cfg.heads}, kGammaRawUnit, p);
    const std::size_t concat_w = cfg.heads * (cfg.d_z + cfg.c + 4 * cfg.n_value);
    w.w_out =
        gaussian(rng, {concat_w, cfg.d_in}, 1.0 / std::sqrt(static_cast<double>(concat_w)), p);
    w.b_out = Tensor::zeros({cfg.d_in}, p);
    w.w_l = std::sqrt(1.0 / 3.0);
    w.w_c = std::sqrt(2.0 / (9.0 * static_cast<double>(cfg.n_query)));
    return w;
}

std::vector<double> IpaWeights::gamma() const {
    std::vector<double> g(gamma_raw.size());
    for (std::size_t h = 0; h < g.size(); ++h) g[h] = softplus(gamma_raw.get_flat(h));
    return g;
}

Projections project_inputs(const Tensor& s, const IpaConfig& cfg, const IpaWeights& w) {
    FIPA_REQUIRE(s.rank() == 2 && s.dim(1) == cfg.d_in, "single representation must be [L, ",
                 cfg.d_in, "]");
    FIPA_REQUIRE(s.precision() == cfg.precision, "input precision differs from configuration");
    const std::size_t L = s.dim(0);
    Projections out;
    out.q = to_head_major(linear(s, w.w_q), cfg.heads, cfg.c);
    out.k = to_head_major(linear(s, w.w_k), cfg.heads, cfg.c);
    out.v = to_head_major(linear(s, w.w_v), cfg.heads, cfg.c);
    out.qp = to_head_major(linear(s, w.w_qp), cfg.heads, cfg.n_query * 3)
                 .reshaped({cfg.heads, L, cfg.n_query, 3});
    out.kp = to_head_major(linear(s, w.w_kp), cfg.heads, cfg.n_query * 3)
                 .reshaped({cfg.heads, L, cfg.n_query, 3});
    out.vp = to_head_major(linear(s, w.w_vp), cfg.heads, cfg.n_value * 3)
                 .reshaped({cfg.heads, L, cfg.n_value, 3});
    return out;
}

Tensor attention_logits(const Projections& proj, const FrameSet& frames, const Tensor& bias,
                        const IpaConfig& cfg, const IpaWeights& w) {
    const std::size_t L = frames.size();
    FIPA_REQUIRE(proj.q.rank() == 3 && proj.q.dim(0) == cfg.heads && proj.q.dim(1) == L &&
                     proj.q.dim(2) == cfg.c,
                 "scalar projections must be [H, L, c]");
    FIPA_REQUIRE(bias.rank() == 3 && bias.dim(0) == cfg.heads && bias.dim(1) == L &&
                     bias.dim(2) == L,
                 "dense bias must be [H, L, L]");

    const std::vector<double> gq = globalize_points(proj.qp, frames);
    const std::vector<double> gk = globalize_points(proj.kp, frames);
    const std::vector<double> gamma = w.gamma();

    Tensor out({cfg.heads, L, L}, cfg.precision);
    if (cfg.precision == Precision::f32) {
        logits_core(proj.q.f32(), proj.k.f32(), bias.f32(), gq.data(), gk.data(), cfg.heads, L,
                    cfg.c, cfg.n_query, gamma, w.w_l, w.w_c, out.f32());
    } else {
        logits_core(proj.q.f64(), proj.k.f64(), bias.f64(), gq.data(), gk.data(), cfg.heads, L,
                    cfg.c, cfg.n_query, gamma, w.w_l, w.w_c, out.f64());
    }
    return out;
}

Tensor reference_forward(const Tensor& s, const PairRep& pair, const FrameSet& frames,
                         const IpaConfig& cfg, const IpaWeights& w) {
    cfg.validate();
    const std::size_t L = frames.size();
    FIPA_REQUIRE(L >= 1, "empty frame set");
    FIPA_REQUIRE(frames.mask.size() == L, "frame mask length mismatch");
    FIPA_REQUIRE(s.rank() == 2 && s.dim(0) == L && s.dim(1) == cfg.d_in,
                 "single representation must be [L, d_in]");
    FIPA_REQUIRE((pair.dense != nullptr) != (pair.factors != nullptr),
                 "provide exactly one pair representation, dense or factorized");

    Tensor z_dense;
    const Tensor* z = pair.dense;
    if (pair.factors != nullptr) {
        z_dense = dense_pair_from_factors(*pair.factors);
        z = &z_dense;
    }
    FIPA_REQUIRE(z->rank() == 3 && z->dim(0) == L && z->dim(1) == L && z->dim(2) == cfg.d_z,
                 "dense pair representation must be [L, L, d_z]");
    FIPA_REQUIRE(z->precision() == cfg.precision, "pair precision differs from configuration");

    std::size_t n_valid = 0;
    for (bool m : frames.mask) n_valid += m ? 1 : 0;
    if (n_valid == 0) return Tensor::zeros({L, cfg.d_in}, cfg.precision);

    Tensor bias({cfg.heads, L, L}, cfg.precision);
    if (cfg.precision == Precision::f32) {
        dense_bias_core(z->f32(), w.w_bias.f32(), cfg.heads, L, cfg.d_z, bias.f32());
    } else {
        dense_bias_core(z->f64(), w.w_bias.f64(), cfg.heads, L, cfg.d_z, bias.f64());
    }

    const Projections proj = project_inputs(s, cfg, w);
    Tensor logits = attention_logits(proj, frames, bias, cfg, w);

    if (n_valid < L) {
        const double neg = lowest_finite(cfg.precision);
        for (std::size_t j = 0; j < L; ++j) {
            if (frames.mask[j]) continue;
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                for (std::size_t i = 0; i < L; ++i) {
                    logits.set_flat((h * L + i) * L + j, neg);
                }
            }
        }
    }

    const Tensor attn = softmax_rows(logits);

    const std::vector<double> gv = globalize_points(proj.vp, frames);
    const std::size_t seg = cfg.d_z + cfg.c + 4 * cfg.n_value;
    Tensor feat({L, cfg.heads * seg}, cfg.precision);
    if (cfg.precision == Precision::f32) {
        aggregate_core(attn.f32(), z->f32(), proj.v.f32(), gv.data(), frames, cfg.heads, L,
                       cfg.d_z, cfg.c, cfg.n_value, feat.f32());
    } else {
        aggregate_core(attn.f64(), z->f64(), proj.v.f64(), gv.data(), frames, cfg.heads, L,
                       cfg.d_z, cfg.c, cfg.n_value, feat.f64());
    }

    Tensor out = linear(feat, w.w_out, w.b_out);
    for (std::size_t i = 0; i < L; ++i) {
        if (frames.mask[i]) continue;
        for (std::size_t d = 0; d < cfg.d_in; ++d) out.set_flat(i * cfg.d_in + d, 0.0);
    }
    return out;
}

}  // namespace fipa
