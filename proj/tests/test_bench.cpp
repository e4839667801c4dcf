#include "doctest.h"

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fipa/bench.hpp"
#include "fipa/error.hpp"
#include "fipa/geometry.hpp"
#include "fipa/ipa.hpp"
#include "fipa/model_io.hpp"
#include "fipa/rng.hpp"
#include "test_support.hpp"

using namespace fipa;

namespace {

BenchConfig tiny_config() {
    BenchConfig cfg = load_config("");
    cfg.model.d_in = 8;
    cfg.model.c = 4;
    cfg.model.n_query = 2;
    cfg.model.n_value = 2;
    cfg.distogram.k = 4;
    cfg.distogram.pe_dim = 4;
    cfg.trials = 2;
    return cfg;
}

const CheckOutcome* find_check(const RunReport& report, const std::string& needle) {
    for (const CheckOutcome& c : report.checks) {
        if (c.name.find(needle) != std::string::npos) return &c;
    }
    return nullptr;
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("fit recovers a pure linear law") {
    std::vector<std::pair<double, double>> pts;
    for (double L : {64.0, 128.0, 256.0, 512.0}) pts.push_back({L, 3.0 * L});
    const FitCoefficients fit = fit_polynomial(pts);
    CHECK(fit.quadratic == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::abs(fit.quadratic) < 1e-9);
    CHECK(fit.linear == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit recovers mixed quadratic and linear coefficients exactly") {
    std::vector<std::pair<double, double>> pts;
    for (double L : {100.0, 300.0, 1000.0, 4000.0, 8192.0}) {
        pts.push_back({L, 2.0 * L * L + 1.0 * L});
    }
    const FitCoefficients fit = fit_polynomial(pts);
    CHECK(fit.quadratic == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fit.linear == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit tolerates measurement noise") {
    Rng rng(120);
    std::vector<std::pair<double, double>> pts;
    for (double L : {128.0, 256.0, 512.0, 1024.0, 2048.0, 4096.0}) {
        const double truth = 5.0 * L * L + 400.0 * L;
        pts.push_back({L, truth * (1.0 + 0.01 * rng.gaussian())});
    }
    const FitCoefficients fit = fit_polynomial(pts);
    CHECK(fit.quadratic == doctest::Approx(5.0).epsilon(0.15));
    CHECK(fit.r_squared > 0.99);
}

TEST_CASE("fit refuses degenerate designs") {
    CHECK_THROWS_AS(fit_polynomial({}), NumericError);
    CHECK_THROWS_AS(fit_polynomial({{64.0, 1.0}}), NumericError);
    CHECK_THROWS_AS(fit_polynomial({{64.0, 1.0}, {64.0, 2.0}, {64.0, 3.0}}), NumericError);
}

TEST_CASE("synthetic instances have coherent shapes and valid frames") {
    BenchConfig cfg = tiny_config();
    Rng rng(121);
    const std::size_t L = 10;
    const Instance inst = make_instance(cfg, L, rng);
    CHECK(inst.s.shape() == std::vector<std::size_t>{L, cfg.model.d_in});
    CHECK(inst.fp.length() == L);
    CHECK(inst.fp.rank() == cfg.model.rank);
    CHECK(inst.fp.channels() == cfg.model.d_z);
    REQUIRE(inst.frames.size() == L);
    for (std::size_t i = 0; i < L; ++i) {
        CHECK(inst.frames.mask[i]);
        const auto& R = inst.frames.frames[i].rotation;
        // R·Rᵀ = I
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 3; ++k) acc += R[r * 3 + k] * R[c * 3 + k];
                CHECK(acc == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("short chains clamp the neighbor count instead of failing") {
    BenchConfig cfg = tiny_config();
    Rng rng(122);
    const Instance inst = make_instance(cfg, 3, rng);  // k=4 would exceed L-1
    CHECK(inst.s.dim(0) == 3);
    CHECK(inst.fp.length() == 3);
}

TEST_CASE("reference byte estimate follows the dense quadratic working set") {
    IpaConfig model;
    model.d_z = 4;
    model.heads = 2;
    const std::size_t L = 100;
    const std::size_t per_entry = (model.d_z + 3 * model.heads) * sizeof(double);
    CHECK(estimate_reference_bytes(model, L) == per_entry * L * L);
    model.precision = Precision::f32;
    CHECK(estimate_reference_bytes(model, L) ==
          (model.d_z + 3 * model.heads) * sizeof(float) * L * L);
}

TEST_CASE("zero-amplitude motion leaves outputs bitwise identical") {
    BenchConfig cfg = tiny_config();
    cfg.lengths = {12};
    cfg.trials = 2;
    cfg.motion_translation_scale = 0.0;
    Rng rng(123);
    const Instance inst = make_instance(cfg, 12, rng);
    // A pure rotation about the origin with zero amplitude is the identity;
    // composing it in must not move anything at all.
    const RigidTransform g;  // identity
    const FrameSet moved = test::transformed(inst.frames, g);
    IpaWeights w = IpaWeights::init(cfg.model, rng);
    PairRep pair;
    pair.factors = &inst.fp;
    const Tensor a = reference_forward(inst.s, pair, inst.frames, cfg.model, w);
    const Tensor b = reference_forward(inst.s, pair, moved, cfg.model, w);
    CHECK(test::max_abs_diff(a, b) == 0.0);
}

TEST_CASE("invariance command passes at 64-bit and reports per-arm checks") {
    BenchConfig cfg = tiny_config();
    cfg.lengths = {10};
    cfg.trials = 2;
    const RunReport report = run_invariance(cfg, 7);
    CHECK(report.command == "invariance");
    REQUIRE(!report.checks.empty());
    CHECK(report.all_pass());
    const CheckOutcome* ref = find_check(report, "invariance/reference/L=10");
    const CheckOutcome* fla = find_check(report, "invariance/flash/L=10");
    REQUIRE(ref != nullptr);
    REQUIRE(fla != nullptr);
    CHECK(ref->tolerance == 1e-9);
    CHECK(fla->tolerance == 1e-9);
    CHECK(ref->value < ref->tolerance);
}

TEST_CASE("invariance tolerances widen at 32-bit storage") {
    BenchConfig cfg = tiny_config();
    cfg.model.precision = Precision::f32;
    cfg.lengths = {10};
    cfg.trials = 2;
    const RunReport report = run_invariance(cfg, 8);
    const CheckOutcome* ref = find_check(report, "invariance/reference/L=10");
    const CheckOutcome* fla = find_check(report, "invariance/flash/L=10");
    REQUIRE(ref != nullptr);
    REQUIRE(fla != nullptr);
    CHECK(ref->tolerance == 1e-6);
    CHECK(fla->tolerance == 1e-3);
    CHECK(report.all_pass());
}

TEST_CASE("equivalence command compares the two arms on shared instances") {
    BenchConfig cfg = tiny_config();
    cfg.lengths = {9, 17};
    cfg.trials = 3;
    const RunReport report = run_equivalence(cfg, 9);
    CHECK(report.command == "equivalence");
    REQUIRE(report.checks.size() == 2);
    for (const CheckOutcome& c : report.checks) {
        CHECK(c.name.find("equivalence/L=") != std::string::npos);
        CHECK(c.tolerance == 1e-8);
        CHECK(c.pass);
        CHECK(c.value < 1e-10);  // far inside the gate at 64-bit
    }
}

TEST_CASE("scaling command is deterministic and records both arms") {
    BenchConfig cfg = tiny_config();
    cfg.lengths = {24, 48};
    const RunReport a = run_scaling(cfg, 11);
    const RunReport b = run_scaling(cfg, 11);
    CHECK(a.command == "scaling");
    REQUIRE(a.records.size() == 4);  // 2 arms × 2 lengths
    REQUIRE(b.records.size() == 4);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].arm == b.records[i].arm);
        CHECK(a.records[i].length == b.records[i].length);
        CHECK(a.records[i].peak_bytes == b.records[i].peak_bytes);
        CHECK(a.records[i].peak_bytes > 0);
        CHECK(a.records[i].seconds > 0.0);
    }
    // Two lengths are too few for the stability checks, but fits must exist.
    CHECK(a.fits.size() >= 2);
}

TEST_CASE("scaling skips the quadratic arm above the byte budget") {
    BenchConfig cfg = tiny_config();
    cfg.lengths = {16, 32};
    cfg.reference_byte_budget = 1;  // nothing fits
    const RunReport report = run_scaling(cfg, 12);
    for (const RunRecord& r : report.records) CHECK(r.arm == "flash");
    REQUIRE(!report.notes.empty());
    bool mentioned = false;
    for (const std::string& note : report.notes) {
        if (note.find("reference") != std::string::npos) mentioned = true;
    }
    CHECK(mentioned);
}

TEST_CASE("fit command reconstructs per-arm laws from a CSV") {
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "fipa_bench_fit.csv";
    {
        std::ofstream out(path);
        out << "arm,L,seed,precision,peak_bytes,seconds\n";
        for (std::size_t L : {100, 200, 400}) {
            out << "reference," << L << ",7,f64," << (2 * L * L + 3 * L) << ",0.5\n";
            out << "flash," << L << ",7,f64," << (40 * L) << ",0.25\n";
        }
    }
    const RunReport report = run_fit(path.string(), "peak_bytes", load_config(""));
    std::filesystem::remove(path);

    CHECK(report.command == "fit");
    REQUIRE(report.fits.size() == 2);
    CHECK(report.fits[0].arm == "reference");
    CHECK(report.fits[0].metric == "peak_bytes");
    CHECK(report.fits[0].quadratic == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(report.fits[0].linear == doctest::Approx(3.0).epsilon(1e-3));
    CHECK(report.fits[1].arm == "flash");
    CHECK(report.fits[1].quadratic == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(std::abs(report.fits[1].quadratic) < 1e-6);
    CHECK(report.fits[1].linear == doctest::Approx(40.0).epsilon(1e-6));

    CHECK_THROWS_AS(run_fit(path.string(), "peak_bytes", load_config("")), IoError);
}

TEST_CASE("fit command rejects unknown metrics") {
    const std::filesystem::path path =
        std::filesystem::temp_directory_path() / "fipa_bench_fit_metric.csv";
    {
        std::ofstream out(path);
        out << "arm,L,seed,precision,peak_bytes,seconds\n";
        out << "flash,100,7,f64,4000,0.25\n";
        out << "flash,200,7,f64,8000,0.5\n";
    }
    CHECK_THROWS_AS(run_fit(path.string(), "cycles", load_config("")), ValueError);
    const RunReport seconds = run_fit(path.string(), "seconds", load_config(""));
    std::filesystem::remove(path);
    REQUIRE(seconds.fits.size() == 1);
    CHECK(seconds.fits[0].metric == "seconds");
    CHECK(seconds.fits[0].linear == doctest::Approx(0.0025).epsilon(1e-6));
}

}  // TEST_SUITE
