#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <vector>

#include "fipa/error.hpp"
#include "fipa/flash_ipa.hpp"
#include "fipa/geometry.hpp"
#include "fipa/ipa.hpp"
#include "fipa/ledger.hpp"
#include "fipa/pair_features.hpp"
#include "fipa/rng.hpp"
#include "fipa/tensor.hpp"
#include "test_support.hpp"

using namespace fipa;

namespace {

struct Problem {
    IpaConfig cfg;
    IpaWeights weights;
    Tensor s;
    FactorizedPair fp;
    FrameSet frames;
};

Problem make_problem(Rng& rng, std::size_t L, std::size_t heads = 2, std::size_t rank = 2,
                     std::size_t n_query = 3, std::size_t n_value = 2) {
    Problem p;
    p.cfg.d_in = 12;
    p.cfg.d_z = 4;
    p.cfg.heads = heads;
    p.cfg.c = 5;
    p.cfg.n_query = n_query;
    p.cfg.n_value = n_value;
    p.cfg.rank = rank;
    p.cfg.validate();
    p.weights = IpaWeights::init(p.cfg, rng);
    p.s = gaussian(rng, {L, p.cfg.d_in});
    p.fp = test::random_factors(rng, L, rank, p.cfg.d_z);
    p.frames = test::random_frames(rng, L);
    return p;
}

double dot_rows(const Tensor& a, const Tensor& b, std::size_t h, std::size_t i,
                std::size_t j) {
    const std::size_t width = a.dim(2);
    double acc = 0.0;
    for (std::size_t x = 0; x < width; ++x) {
        acc += a.at({h, i, x}) * b.at({h, j, x});
    }
    return acc;
}

}  // namespace

TEST_SUITE("flash_ipa") {

TEST_CASE("lifted widths and segment bookkeeping round-trip through split") {
    Rng rng(90);
    Problem p = make_problem(rng, 6);
    const Projections proj = project_inputs(p.s, p.cfg, p.weights);
    const auto [b1, b2] = bias_factors(p.fp, p.weights.w_bias);
    const LiftedQKV lifted = lift_qkv(proj, p.frames, b1, b2, p.fp, p.cfg, p.weights);

    const std::size_t rdz = p.cfg.rank * p.cfg.d_z;
    CHECK(lifted.qk_segments ==
          std::vector<std::size_t>{p.cfg.c, 3 * p.cfg.n_query, p.cfg.n_query, p.cfg.n_query,
                                   rdz});
    CHECK(lifted.v_segments == std::vector<std::size_t>{p.cfg.c, 3 * p.cfg.n_value, rdz});
    CHECK(lifted.q_hat.shape() ==
          std::vector<std::size_t>{p.cfg.heads, 6, p.cfg.qk_width()});
    CHECK(lifted.v_hat.shape() == std::vector<std::size_t>{p.cfg.heads, 6, p.cfg.v_width()});

    // The declared segments tile the width exactly and reassemble bit-for-bit.
    const auto parts = split_last(lifted.q_hat, lifted.qk_segments);
    REQUIRE(parts.size() == 5);
    CHECK(test::max_abs_diff(concat_last(parts), lifted.q_hat) == 0.0);

    // First scalar segment of q_hat is the raw query block.
    for (std::size_t h = 0; h < p.cfg.heads; ++h) {
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t ch = 0; ch < p.cfg.c; ++ch) {
                CHECK(parts[0].at({h, i, ch}) == proj.q.at({h, i, ch}));
            }
        }
    }
}

TEST_CASE("gamma gate softplus matches its closed form at the stock raw value") {
    Rng rng(91);
    Problem p = make_problem(rng, 2);
    const std::vector<double> g = p.weights.gamma();
    const double raw = p.weights.gamma_raw.get_flat(0);
    CHECK(g[0] == doctest::Approx(std::log1p(std::exp(raw))).epsilon(1e-15));
    CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("lifted dot products reproduce the quadratic logits exactly") {
    Rng rng(92);
    Problem p = make_problem(rng, 7);
    const std::size_t L = 7;
    const Projections proj = project_inputs(p.s, p.cfg, p.weights);
    // The overall logit scale multiplies every term, so the factorized bias
    // has to carry it too; fold it into the per-head weights up front.
    Tensor scaled_bias_w = Tensor::zeros(p.weights.w_bias.shape());
    for (std::size_t e = 0; e < scaled_bias_w.size(); ++e) {
        scaled_bias_w.set_flat(e, p.weights.w_l * p.weights.w_bias.get_flat(e));
    }
    const auto [b1, b2] = bias_factors(p.fp, scaled_bias_w);
    const LiftedQKV lifted = lift_qkv(proj, p.frames, b1, b2, p.fp, p.cfg, p.weights);

    Tensor z = dense_pair_from_factors(p.fp);
    Tensor dense_bias({p.cfg.heads, L, L});
    for (std::size_t h = 0; h < p.cfg.heads; ++h) {
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < L; ++j) {
                double acc = 0.0;
                for (std::size_t d = 0; d < p.cfg.d_z; ++d) {
                    acc += p.weights.w_bias.at({h, d}) * z.at({i, j, d});
                }
                dense_bias.set({h, i, j}, acc);
            }
        }
    }
    const Tensor logits = attention_logits(proj, p.frames, dense_bias, p.cfg, p.weights);

    double worst = 0.0;
    for (std::size_t h = 0; h < p.cfg.heads; ++h) {
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < L; ++j) {
                const double lifted_logit = dot_rows(lifted.q_hat, lifted.k_hat, h, i, j);
                worst = std::max(worst, std::abs(lifted_logit - logits.at({h, i, j})));
            }
        }
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("negative control: misaligned ones/norms segments break the identity") {
    Rng rng(93);
    Problem p = make_problem(rng, 5);
    const std::size_t L = 5;
    const Projections proj = project_inputs(p.s, p.cfg, p.weights);
    const auto [b1, b2] = bias_factors(p.fp, p.weights.w_bias);
    const LiftedQKV lifted = lift_qkv(proj, p.frames, b1, b2, p.fp, p.cfg, p.weights);

    // Swap the norms and ones segments of q_hat. A symmetric segment order
    // would leave the dot product unchanged; the construction relies on the
    // asymmetry, so the logits must move.
    auto parts = split_last(lifted.q_hat, lifted.qk_segments);
    std::swap(parts[2], parts[3]);
    const Tensor q_swapped = concat_last(parts);

    double worst = 0.0;
    for (std::size_t h = 0; h < p.cfg.heads; ++h) {
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < L; ++j) {
                const double good = dot_rows(lifted.q_hat, lifted.k_hat, h, i, j);
                const double bad = dot_rows(q_swapped, lifted.k_hat, h, i, j);
                worst = std::max(worst, std::abs(good - bad));
            }
        }
    }
    CHECK(worst > 1e-2);
}

TEST_CASE("factorized path matches the quadratic reference across shapes") {
    Rng rng(94);
    double worst = 0.0;
    for (std::size_t L : {std::size_t{2}, std::size_t{3}, std::size_t{5}, std::size_t{9},
                          std::size_t{17}, std::size_t{33}, std::size_t{64}}) {
        for (std::size_t heads : {std::size_t{1}, std::size_t{4}}) {
            for (std::size_t rank : {std::size_t{1}, std::size_t{2}}) {
                Problem p = make_problem(rng, L, heads, rank);
                PairRep pair;
                pair.factors = &p.fp;
                const Tensor want = reference_forward(p.s, pair, p.frames, p.cfg, p.weights);
                const Tensor got =
                    flash_ipa_forward(p.s, p.fp, p.frames, p.cfg, p.weights, TileSpec{16, 16});
                worst = std::max(worst, test::rel_dev(want, got));
            }
        }
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("point-count extremes agree with the reference") {
    Rng rng(95);
    for (std::size_t n_query : {std::size_t{1}, std::size_t{4}}) {
        for (std::size_t n_value : {std::size_t{1}, std::size_t{8}}) {
            Problem p = make_problem(rng, 11, 2, 2, n_query, n_value);
            PairRep pair;
            pair.factors = &p.fp;
            const Tensor want = reference_forward(p.s, pair, p.frames, p.cfg, p.weights);
            const Tensor got = flash_ipa_forward(p.s, p.fp, p.frames, p.cfg, p.weights);
            CHECK(test::rel_dev(want, got) < 1e-10);
        }
    }
}

TEST_CASE("tile shape and thread count do not change the factorized output") {
    Rng rng(96);
    Problem p = make_problem(rng, 37);
    const Tensor base = flash_ipa_forward(p.s, p.fp, p.frames, p.cfg, p.weights);
    for (const TileSpec& tiles : {TileSpec{1, 1}, TileSpec{5, 3}, TileSpec{128, 128}}) {
        CHECK(test::max_abs_diff(
                  flash_ipa_forward(p.s, p.fp, p.frames, p.cfg, p.weights, tiles), base) <
              1e-12);
    }
    CHECK(test::max_abs_diff(
              flash_ipa_forward(p.s, p.fp, p.frames, p.cfg, p.weights, TileSpec{16, 16}, 3),
              flash_ipa_forward(p.s, p.fp, p.frames, p.cfg, p.weights, TileSpec{16, 16}, 1)) ==
          0.0);
}

TEST_CASE("outputs are invariant to a global rigid motion of all frames") {
    Rng rng(97);
    Problem p = make_problem(rng, 40);
    const Tensor base = flash_ipa_forward(p.s, p.fp, p.frames, p.cfg, p.weights);
    for (int trial = 0; trial < 5; ++trial) {
        const RigidTransform g = random_rototranslation(rng, 10.0);
        const FrameSet moved = test::transformed(p.frames, g);
        const Tensor out = flash_ipa_forward(p.s, p.fp, moved, p.cfg, p.weights);
        CHECK(test::max_abs_diff(base, out) < 1e-9);
    }
}

TEST_CASE("masked positions agree with the reference and produce zero rows") {
    Rng rng(98);
    Problem p = make_problem(rng, 12);
    p.frames.mask[3] = false;
    p.frames.mask[7] = false;
    PairRep pair;
    pair.factors = &p.fp;
    const Tensor want = reference_forward(p.s, pair, p.frames, p.cfg, p.weights);
    std::vector<bool> flags;
    const Tensor got = flash_ipa_forward(p.s, p.fp, p.frames, p.cfg, p.weights, TileSpec{4, 4},
                                         1, &flags);
    CHECK(test::rel_dev(want, got) < 1e-10);
    REQUIRE(flags.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) CHECK_FALSE(flags[i]);
    for (std::size_t d = 0; d < p.cfg.d_in; ++d) {
        CHECK(got.at({3, d}) == 0.0);
        CHECK(got.at({7, d}) == 0.0);
    }

    p.frames.mask.assign(12, false);
    const Tensor nothing = flash_ipa_forward(p.s, p.fp, p.frames, p.cfg, p.weights,
                                             TileSpec{4, 4}, 1, &flags);
    CHECK(test::max_abs(nothing) == 0.0);
    for (std::size_t i = 0; i < 12; ++i) CHECK(flags[i]);
}

TEST_CASE("a single position works through the factorized path") {
    Rng rng(99);
    Problem p = make_problem(rng, 2);
    Tensor s1({1, p.cfg.d_in});
    for (std::size_t d = 0; d < p.cfg.d_in; ++d) s1.set({0, d}, p.s.at({0, d}));
    FactorizedPair fp1;
    fp1.z1 = Tensor({1, p.cfg.rank, p.cfg.d_z});
    fp1.z2 = Tensor({1, p.cfg.rank, p.cfg.d_z});
    for (std::size_t r = 0; r < p.cfg.rank; ++r) {
        for (std::size_t d = 0; d < p.cfg.d_z; ++d) {
            fp1.z1.set({0, r, d}, p.fp.z1.at({0, r, d}));
            fp1.z2.set({0, r, d}, p.fp.z2.at({0, r, d}));
        }
    }
    FrameSet frames1;
    frames1.frames.push_back(p.frames.frames[0]);
    frames1.mask.assign(1, true);

    PairRep pair;
    pair.factors = &fp1;
    const Tensor want = reference_forward(s1, pair, frames1, p.cfg, p.weights);
    const Tensor got = flash_ipa_forward(s1, fp1, frames1, p.cfg, p.weights);
    CHECK(test::max_abs_diff(want, got) < 1e-12);
}

TEST_CASE("factorized path never allocates a length-squared buffer") {
    auto& ledger = AllocationLedger::instance();
    const bool was_enabled = ledger.enabled();
    ledger.set_enabled(false);
    Rng rng(100);
    const std::size_t L = 1024;
    Problem p = make_problem(rng, L, 1, 1, 1, 1);
    ledger.set_enabled(true);
    ledger.reset_peak();
    const Tensor out = flash_ipa_forward(p.s, p.fp, p.frames, p.cfg, p.weights);
    const std::size_t peak = ledger.peak_bytes();
    ledger.set_enabled(was_enabled);
    CHECK(out.dim(0) == L);
    CHECK(peak < L * L * sizeof(double) / 2);
}

TEST_CASE("config validation guards the lifted head width") {
    IpaConfig cfg;
    cfg.d_in = 8;
    cfg.d_z = 8;
    cfg.heads = 1;
    cfg.c = 16;
    cfg.n_query = 40;  // 16 + 200 + 8*8 = 280 > 256
    cfg.n_value = 2;
    cfg.rank = 8;
    REQUIRE(cfg.qk_width() > 256);
    CHECK_THROWS_AS(cfg.validate(), ValueError);

    cfg.enforce_head_cap = false;
    CHECK_NOTHROW(cfg.validate());
    Rng rng(101);
    IpaWeights w = IpaWeights::init(cfg, rng);
    Tensor s = gaussian(rng, {4, cfg.d_in});
    FactorizedPair fp = test::random_factors(rng, 4, cfg.rank, cfg.d_z);
    FrameSet frames = test::random_frames(rng, 4);
    PairRep pair;
    pair.factors = &fp;
    const Tensor want = reference_forward(s, pair, frames, cfg, w);
    const Tensor got = flash_ipa_forward(s, fp, frames, cfg, w);
    CHECK(test::rel_dev(want, got) < 1e-10);
}

TEST_CASE("mismatched factor length is rejected") {
    Rng rng(102);
    Problem p = make_problem(rng, 6);
    FactorizedPair wrong = test::random_factors(rng, 5, p.cfg.rank, p.cfg.d_z);
    CHECK_THROWS_AS(flash_ipa_forward(p.s, wrong, p.frames, p.cfg, p.weights), ValueError);
}

}  // TEST_SUITE
