#include "fipa/pair_features.hpp"

#include <algorithm>
#include <cmath>

#include "fipa/error.hpp"

namespace fipa {

Tensor knn_distogram(const Tensor& translations, const DistogramSpec& spec) {
    FIPA_REQUIRE(translations.rank() == 2 && translations.dim(1) == 3,
                 "knn_distogram expects [L, 3] translations");
    const std::size_t L = translations.dim(0);
    FIPA_REQUIRE(L >= 2, "knn_distogram needs at least two residues");
    FIPA_REQUIRE(spec.k >= 1 && spec.k <= L - 1, "neighbor count k=", spec.k,
                 " must lie in [1, L-1] with L=", L);
    FIPA_REQUIRE(spec.n_bins >= 2, "distogram needs at least two bins");
    FIPA_REQUIRE(spec.d_min < spec.d_max, "distogram range is empty");
    FIPA_REQUIRE(spec.pe_dim % 2 == 0, "positional encoding width must be even");

    const std::size_t width = spec.n_bins + spec.pe_dim;
    Tensor out({L, spec.k, width}, translations.precision());

    const double bin_width = (spec.d_max - spec.d_min) / static_cast<double>(spec.n_bins);
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(L - 1);
    std::vector<std::int64_t> offsets(spec.k);

    for (std::size_t i = 0; i < L; ++i) {
        const double xi = translations.at({i, 0});
        const double yi = translations.at({i, 1});
        const double zi = translations.at({i, 2});

        order.clear();
        for (std::size_t j = 0; j < L; ++j) {
            if (j == i) continue;
            const double dx = translations.at({j, 0}) - xi;
            const double dy = translations.at({j, 1}) - yi;
            const double dz = translations.at({j, 2}) - zi;
            order.emplace_back(std::sqrt(dx * dx + dy * dy + dz * dz), j);
        }
        // (distance, index) pairs compare lexicographically, which is exactly
        // the lower-index tie-break.
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.k),
                          order.end());

        for (std::size_t n = 0; n < spec.k; ++n) {
            const auto [dist, j] = order[n];
            double rel = (dist - spec.d_min) / bin_width;
            rel = std::max(rel, 0.0);
            std::size_t bin = std::min(static_cast<std::size_t>(rel), spec.n_bins - 1);
            out.set({i, n, bin}, 1.0);
            offsets[n] = static_cast<std::int64_t>(j) - static_cast<std::int64_t>(i);
        }

        const Tensor pe = positional_encoding(offsets, spec.pe_dim);
        for (std::size_t n = 0; n < spec.k; ++n) {
            for (std::size_t d = 0; d < spec.pe_dim; ++d) {
                out.set({i, n, spec.n_bins + d}, pe.at({n, d}));
            }
        }
    }
    return out;
}

Tensor positional_encoding(const std::vector<std::int64_t>& offsets, std::size_t dim) {
    FIPA_REQUIRE(dim >= 2 && dim % 2 == 0, "positional encoding width must be even, got ", dim);
    const std::size_t half = dim / 2;
    Tensor out({offsets.size(), dim});
    for (std::size_t row = 0; row < offsets.size(); ++row) {
        const double x = static_cast<double>(offsets[row]);
        for (std::size_t p = 0; p < half; ++p) {
            // Frequencies fall geometrically from 1 to 1e-4 across the pairs.
            const double freq =
                std::pow(10000.0, -static_cast<double>(2 * p) / static_cast<double>(dim));
            out.set({row, 2 * p}, std::sin(x * freq));
            out.set({row, 2 * p + 1}, std::cos(x * freq));
        }
    }
    return out;
}

FactorizedPair build_factors(const Tensor& features, std::size_t r, std::size_t d_z,
                             const Tensor& w1, const Tensor& w2) {
    FIPA_REQUIRE(features.rank() == 2, "build_factors expects [L, f] features");
    FIPA_REQUIRE(r >= 1 && d_z >= 1, "factor rank and channel width must be positive");
    const std::size_t L = features.dim(0);
    const std::size_t f = features.dim(1);
    for (const Tensor* w : {&w1, &w2}) {
        FIPA_REQUIRE(w->rank() == 2 && w->dim(0) == f && w->dim(1) == r * d_z,
                     "factor projection weights must be [", f, ", ", r * d_z, "]");
    }
    FactorizedPair fp;
    fp.z1 = linear(features, w1).reshaped({L, r, d_z});
    fp.z2 = linear(features, w2).reshaped({L, r, d_z});
    return fp;
}

namespace {

template <class T>
void dense_pair_rows(const T* z1, const T* z2, T* out, std::size_t L, std::size_t r,
                     std::size_t d_z) {
    for (std::size_t i = 0; i < L; ++i) {
        const T* z1i = z1 + i * r * d_z;
        for (std::size_t j = 0; j < L; ++j) {
            const T* z2j = z2 + j * r * d_z;
            T* oij = out + (i * L + j) * d_z;
            for (std::size_t d = 0; d < d_z; ++d) {
                double acc = 0.0;
                for (std::size_t rho = 0; rho < r; ++rho) {
                    acc += static_cast<double>(z1i[rho * d_z + d]) *
                           static_cast<double>(z2j[rho * d_z + d]);
                }
                oij[d] = static_cast<T>(acc);
            }
        }
    }
}

}  // namespace

Tensor dense_pair_from_factors(const FactorizedPair& fp) {
    const std::size_t L = fp.length();
    const std::size_t r = fp.rank();
    const std::size_t d_z = fp.channels();
    FIPA_REQUIRE(fp.z2.rank() == 3 && fp.z2.dim(0) == L && fp.z2.dim(1) == r &&
                     fp.z2.dim(2) == d_z,
                 "factor shapes disagree");
    FIPA_REQUIRE(fp.z1.precision() == fp.z2.precision(), "factor precisions disagree");

    Tensor out({L, L, d_z}, fp.z1.precision());
    if (out.precision() == Precision::f32) {
        dense_pair_rows(fp.z1.f32(), fp.z2.f32(), out.f32(), L, r, d_z);
    } else {
        dense_pair_rows(fp.z1.f64(), fp.z2.f64(), out.f64(), L, r, d_z);
    }
    return out;
}

std::pair<Tensor, Tensor> bias_factors(const FactorizedPair& fp, const Tensor& per_head_weights) {
    FIPA_REQUIRE(per_head_weights.rank() == 2 && per_head_weights.dim(1) == fp.channels(),
                 "per-head bias weights must be [H, d_z]");
    const std::size_t L = fp.length();
    const std::size_t r = fp.rank();
    const std::size_t d_z = fp.channels();
    const std::size_t H = per_head_weights.dim(0);

    Tensor b1({L, H, r * d_z}, fp.z1.precision());
    Tensor b2({L, H, r * d_z}, fp.z2.precision());
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t rho = 0; rho < r; ++rho) {
                for (std::size_t d = 0; d < d_z; ++d) {
                    b1.set({i, h, rho * d_z + d}, fp.z1.at({i, rho, d}));
                    b2.set({i, h, rho * d_z + d},
                           per_head_weights.at({h, d}) * fp.z2.at({i, rho, d}));
                }
            }
        }
    }
    return {std::move(b1), std::move(b2)};
}

}  // namespace fipa
