#include "fipa/attention_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fipa/error.hpp"
#include "internal/parallel.hpp"

namespace fipa {

namespace {

constexpr std::size_t kHeadDimCap = 256;

struct AttnDims {
    std::size_t heads = 1;
    std::size_t length = 0;
    std::size_t d_qk = 0;
    std::size_t d_v = 0;
    bool has_head_axis = false;
};

AttnDims checked_dims(const Tensor& q, const Tensor& k, const Tensor& v,
                      const std::vector<bool>& mask) {
    FIPA_REQUIRE(q.rank() == k.rank() && q.rank() == v.rank(),
                 "attention operands must share rank");
    FIPA_REQUIRE(q.rank() == 2 || q.rank() == 3, "attention operands are [L, d] or [H, L, d]");
    AttnDims dims;
    dims.has_head_axis = q.rank() == 3;
    const std::size_t axis0 = dims.has_head_axis ? 1 : 0;
    dims.heads = dims.has_head_axis ? q.dim(0) : 1;
    dims.length = q.dim(axis0);
    dims.d_qk = q.dim(axis0 + 1);
    dims.d_v = v.dim(axis0 + 1);
    if (dims.has_head_axis) {
        FIPA_REQUIRE(k.dim(0) == dims.heads && v.dim(0) == dims.heads,
                     "attention operands must share the head count");
    }
    FIPA_REQUIRE(k.dim(axis0) == dims.length && v.dim(axis0) == dims.length,
                 "attention operands must share the sequence length");
    FIPA_REQUIRE(k.dim(axis0 + 1) == dims.d_qk, "Q and K widths differ");
    FIPA_REQUIRE(q.precision() == k.precision() && q.precision() == v.precision(),
                 "attention operands must share precision");
    FIPA_REQUIRE(mask.empty() || mask.size() == dims.length,
                 "mask length must equal the sequence length");
    if (std::max(dims.d_qk, dims.d_v) > kHeadDimCap) {
        std::fprintf(stderr,
                     "fipa: attention head width %zu exceeds %zu; computing anyway, but fused "
                     "kernels are tuned for narrower heads\n",
                     std::max(dims.d_qk, dims.d_v), kHeadDimCap);
    }
    return dims;
}

std::vector<std::size_t> out_shape(const AttnDims& dims) {
    if (dims.has_head_axis) return {dims.heads, dims.length, dims.d_v};
    return {dims.length, dims.d_v};
}

double lowest_finite(Precision p) {
    return p == Precision::f32 ? -static_cast<double>(std::numeric_limits<float>::max())
                               : std::numeric_limits<double>::lowest();
}

template <class T>
void naive_core(const T* q, const T* k, const T* v, const std::vector<bool>& mask,
                const AttnDims& dims, Tensor& logits, T* out) {
    const std::size_t L = dims.length;
    T* s = logits.data<T>();
    const double floor_logit = lowest_finite(logits.precision());
    for (std::size_t h = 0; h < dims.heads; ++h) {
        for (std::size_t i = 0; i < L; ++i) {
            const T* qi = q + (h * L + i) * dims.d_qk;
            T* srow = s + (h * L + i) * L;
            for (std::size_t j = 0; j < L; ++j) {
                if (!mask.empty() && !mask[j]) {
                    srow[j] = static_cast<T>(floor_logit);
                    continue;
                }
                const T* kj = k + (h * L + j) * dims.d_qk;
                double acc = 0.0;
                for (std::size_t d = 0; d < dims.d_qk; ++d) {
                    acc += static_cast<double>(qi[d]) * static_cast<double>(kj[d]);
                }
                srow[j] = static_cast<T>(acc);
            }
        }
    }

    const Tensor attn = softmax_rows(logits);
    const T* a = attn.data<T>();
    std::vector<double> row(dims.d_v);
    for (std::size_t h = 0; h < dims.heads; ++h) {
        for (std::size_t i = 0; i < L; ++i) {
            std::fill(row.begin(), row.end(), 0.0);
            const T* arow = a + (h * L + i) * L;
            for (std::size_t j = 0; j < L; ++j) {
                const double w = static_cast<double>(arow[j]);
                const T* vj = v + (h * L + j) * dims.d_v;
                for (std::size_t d = 0; d < dims.d_v; ++d) {
                    row[d] += w * static_cast<double>(vj[d]);
                }
            }
            T* orow = out + (h * L + i) * dims.d_v;
            for (std::size_t d = 0; d < dims.d_v; ++d) orow[d] = static_cast<T>(row[d]);
        }
    }
}

template <class T>
void flash_block(const T* q, const T* k, const T* v, const std::vector<bool>& mask,
                 const AttnDims& dims, const TileSpec& tiles, std::size_t head, std::size_t r0,
                 std::size_t r1, T* out) {
    const std::size_t L = dims.length;
    const std::size_t rows = r1 - r0;
    const std::size_t bc = std::min(tiles.block_cols, L);
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();

    // Tracked working set of one row block: the logit tile plus running
    // statistics — O(B_r·B_c + B_r·d_v), independent of L.
    Tensor s_tile({rows, bc});
    Tensor acc_tile({rows, dims.d_v});
    Tensor m_run = Tensor::full({rows}, neg_inf);
    Tensor l_run({rows});
    double* s = s_tile.f64();
    double* acc = acc_tile.f64();
    double* m = m_run.f64();
    double* l = l_run.f64();

    for (std::size_t c0 = 0; c0 < L; c0 += bc) {
        const std::size_t c1 = std::min(c0 + bc, L);
        const std::size_t cols = c1 - c0;

        for (std::size_t r = 0; r < rows; ++r) {
            const T* qi = q + (head * L + (r0 + r)) * dims.d_qk;
            double* srow = s + r * bc;
            for (std::size_t c = 0; c < cols; ++c) {
                if (!mask.empty() && !mask[c0 + c]) {
                    srow[c] = neg_inf;
                    continue;
                }
                const T* kj = k + (head * L + (c0 + c)) * dims.d_qk;
                double dot = 0.0;
                for (std::size_t d = 0; d < dims.d_qk; ++d) {
                    dot += static_cast<double>(qi[d]) * static_cast<double>(kj[d]);
                }
                srow[c] = dot;
            }
        }

        for (std::size_t r = 0; r < rows; ++r) {
            double* srow = s + r * bc;
            double m_new = m[r];
            for (std::size_t c = 0; c < cols; ++c) m_new = std::max(m_new, srow[c]);
            if (m_new == neg_inf) continue;  // every key so far masked; nothing to fold in

            // Rescale the running sums by exp(m_prev - m_new); the branch
            // keeps the -inf sentinel from turning into exp(-inf + inf).
            const double scale = m[r] == m_new ? 1.0 : std::exp(m[r] - m_new);
            double* arow = acc + r * dims.d_v;
            if (scale != 1.0) {
                for (std::size_t d = 0; d < dims.d_v; ++d) arow[d] *= scale;
            }
            double l_new = l[r] * scale;
            for (std::size_t c = 0; c < cols; ++c) {
                const double p = std::exp(srow[c] - m_new);  // masked keys: exp(-inf) = 0
                l_new += p;
                const T* vj = v + (head * L + (c0 + c)) * dims.d_v;
                for (std::size_t d = 0; d < dims.d_v; ++d) {
                    arow[d] += p * static_cast<double>(vj[d]);
                }
            }
            l[r] = l_new;
            m[r] = m_new;
        }
    }

    for (std::size_t r = 0; r < rows; ++r) {
        T* orow = out + (head * L + (r0 + r)) * dims.d_v;
        const double* arow = acc + r * dims.d_v;
        const double denom = l[r];
        for (std::size_t d = 0; d < dims.d_v; ++d) {
            orow[d] = denom > 0.0 ? static_cast<T>(arow[d] / denom) : static_cast<T>(0.0);
        }
    }
}

}  // namespace

Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       const std::vector<bool>& mask) {
    const AttnDims dims = checked_dims(q, k, v, mask);
    Tensor out(out_shape(dims), q.precision());

    bool any_valid = mask.empty();
    for (bool m : mask) any_valid = any_valid || m;
    if (!any_valid) return out;  // no valid keys anywhere: all rows zero

    std::vector<std::size_t> logit_shape =
        dims.has_head_axis ? std::vector<std::size_t>{dims.heads, dims.length, dims.length}
                           : std::vector<std::size_t>{dims.length, dims.length};
    Tensor logits(std::move(logit_shape), q.precision());
    if (q.precision() == Precision::f32) {
        naive_core(q.f32(), k.f32(), v.f32(), mask, dims, logits, out.f32());
    } else {
        naive_core(q.f64(), k.f64(), v.f64(), mask, dims, logits, out.f64());
    }
    return out;
}

Tensor flash_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                       const std::vector<bool>& mask, const TileSpec& tiles, int threads,
                       std::vector<bool>* fully_masked) {
    const AttnDims dims = checked_dims(q, k, v, mask);
    FIPA_REQUIRE(tiles.block_rows >= 1 && tiles.block_cols >= 1, "tile sizes must be positive");

    bool any_valid = mask.empty();
    for (bool m : mask) any_valid = any_valid || m;
    if (fully_masked != nullptr) fully_masked->assign(dims.length, !any_valid);

    Tensor out(out_shape(dims), q.precision());
    if (!any_valid) return out;

    const std::size_t br = std::min(tiles.block_rows, dims.length);
    const std::size_t n_row_blocks = (dims.length + br - 1) / br;
    const std::size_t n_jobs = dims.heads * n_row_blocks;

    auto run_block = [&](std::size_t job) {
        const std::size_t head = job / n_row_blocks;
        const std::size_t block = job % n_row_blocks;
        const std::size_t r0 = block * br;
        const std::size_t r1 = std::min(r0 + br, dims.length);
        if (q.precision() == Precision::f32) {
            flash_block(q.f32(), k.f32(), v.f32(), mask, dims, tiles, head, r0, r1, out.f32());
        } else {
            flash_block(q.f64(), k.f64(), v.f64(), mask, dims, tiles, head, r0, r1, out.f64());
        }
    };
    detail::parallel_for(n_jobs, threads, run_block);
    return out;
}

}  // namespace fipa
