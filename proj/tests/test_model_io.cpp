#include "doctest.h"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fipa/error.hpp"
#include "fipa/ipa.hpp"
#include "fipa/model_io.hpp"
#include "fipa/rng.hpp"
#include "fipa/tensor.hpp"
#include "test_support.hpp"

using namespace fipa;

namespace {

// Unique-per-test scratch file that cleans up after itself.
struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove(path);
    }
    ~TempFile() { std::filesystem::remove(path); }
    std::string str() const { return path.string(); }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::vector<char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

bool weights_identical(const IpaWeights& a, const IpaWeights& b) {
    const Tensor* lhs[] = {&a.w_q, &a.w_k,    &a.w_v,       &a.w_qp,  &a.w_kp,
                           &a.w_vp, &a.w_bias, &a.gamma_raw, &a.w_out, &a.b_out};
    const Tensor* rhs[] = {&b.w_q, &b.w_k,    &b.w_v,       &b.w_qp,  &b.w_kp,
                           &b.w_vp, &b.w_bias, &b.gamma_raw, &b.w_out, &b.b_out};
    for (std::size_t t = 0; t < 10; ++t) {
        if (lhs[t]->shape() != rhs[t]->shape()) return false;
        if (lhs[t]->precision() != rhs[t]->precision()) return false;
        for (std::size_t i = 0; i < lhs[t]->size(); ++i) {
            if (lhs[t]->get_flat(i) != rhs[t]->get_flat(i)) return false;
        }
    }
    return a.w_l == b.w_l && a.w_c == b.w_c;
}

RunReport sample_report() {
    RunReport report;
    report.command = "scaling";
    report.config_echo = "{}";
    report.records.push_back({"reference", 128, 7, Precision::f64, 1048576, 0.25});
    report.records.push_back({"flash", 128, 7, Precision::f32, 65536, 0.125});
    report.fits.push_back({"flash", "peak_bytes", 0.001, 3040.0, 0.9999});
    report.checks.push_back({"scaling/flash/linear", 0.001, 0.01, true});
    report.notes.push_back("reference arm skipped at L=8192");
    return report;
}

}  // namespace

TEST_SUITE("model_io") {

TEST_CASE("weights survive a save/load round trip bit-for-bit") {
    Rng rng(110);
    IpaConfig cfg;
    cfg.d_in = 10;
    cfg.d_z = 3;
    cfg.heads = 2;
    cfg.c = 4;
    cfg.n_query = 2;
    cfg.n_value = 3;
    cfg.rank = 2;
    IpaWeights w = IpaWeights::init(cfg, rng);
    TempFile file("fipa_weights_roundtrip.bin");
    save_weights(w, file.str());
    IpaWeights back = load_weights(file.str());
    CHECK(weights_identical(w, back));
}

TEST_CASE("single-precision weights round trip with their precision intact") {
    Rng rng(111);
    IpaConfig cfg;
    cfg.precision = Precision::f32;
    IpaWeights w = IpaWeights::init(cfg, rng);
    TempFile file("fipa_weights_f32.bin");
    save_weights(w, file.str());
    IpaWeights back = load_weights(file.str());
    CHECK(back.w_q.precision() == Precision::f32);
    CHECK(weights_identical(w, back));
}

TEST_CASE("weights file starts with the documented magic and version") {
    Rng rng(112);
    IpaWeights w = IpaWeights::init(IpaConfig{}, rng);
    TempFile file("fipa_weights_magic.bin");
    save_weights(w, file.str());
    const std::vector<char> bytes = read_bytes(file.str());
    REQUIRE(bytes.size() > 8);
    CHECK(bytes[0] == 'F');
    CHECK(bytes[1] == 'I');
    CHECK(bytes[2] == 'P');
    CHECK(bytes[3] == 'A');
    const std::uint16_t version = static_cast<std::uint16_t>(
        static_cast<unsigned char>(bytes[4]) |
        (static_cast<unsigned char>(bytes[5]) << 8));
    CHECK(version == kWeightsVersion);
}

TEST_CASE("corrupted weights files are rejected") {
    Rng rng(113);
    IpaWeights w = IpaWeights::init(IpaConfig{}, rng);
    TempFile file("fipa_weights_corrupt.bin");

    SUBCASE("missing file") { CHECK_THROWS_AS(load_weights(file.str()), IoError); }
    SUBCASE("bad magic") {
        save_weights(w, file.str());
        std::vector<char> bytes = read_bytes(file.str());
        bytes[0] = 'X';
        write_text(file.str(), std::string(bytes.begin(), bytes.end()));
        CHECK_THROWS_AS(load_weights(file.str()), IoError);
    }
    SUBCASE("unsupported version") {
        save_weights(w, file.str());
        std::vector<char> bytes = read_bytes(file.str());
        bytes[4] = 99;
        write_text(file.str(), std::string(bytes.begin(), bytes.end()));
        CHECK_THROWS_AS(load_weights(file.str()), IoError);
    }
    SUBCASE("truncated payload") {
        save_weights(w, file.str());
        std::vector<char> bytes = read_bytes(file.str());
        bytes.resize(bytes.size() / 2);
        write_text(file.str(), std::string(bytes.begin(), bytes.end()));
        CHECK_THROWS_AS(load_weights(file.str()), IoError);
    }
}

TEST_CASE("records CSV uses the pinned column order and round trips exactly") {
    const RunReport report = sample_report();
    const std::string csv = report_to_csv(report);
    CHECK(csv.rfind("arm,L,seed,precision,peak_bytes,seconds\n", 0) == 0);

    TempFile file("fipa_records.csv");
    write_text(file.str(), csv);
    const std::vector<RunRecord> back = parse_records_csv(file.str());
    REQUIRE(back.size() == report.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].arm == report.records[i].arm);
        CHECK(back[i].length == report.records[i].length);
        CHECK(back[i].seed == report.records[i].seed);
        CHECK(back[i].precision == report.records[i].precision);
        CHECK(back[i].peak_bytes == report.records[i].peak_bytes);
        CHECK(back[i].seconds == report.records[i].seconds);
    }
}

TEST_CASE("header-only CSV parses to an empty record list") {
    TempFile file("fipa_records_empty.csv");
    write_text(file.str(), "arm,L,seed,precision,peak_bytes,seconds\n");
    CHECK(parse_records_csv(file.str()).empty());
}

TEST_CASE("malformed CSV inputs are rejected") {
    TempFile file("fipa_records_bad.csv");
    SUBCASE("missing file") { CHECK_THROWS_AS(parse_records_csv(file.str()), IoError); }
    SUBCASE("wrong header") {
        write_text(file.str(), "arm,length,seed,precision,peak_bytes,seconds\n");
        CHECK_THROWS_AS(parse_records_csv(file.str()), IoError);
    }
    SUBCASE("short row") {
        write_text(file.str(),
                   "arm,L,seed,precision,peak_bytes,seconds\nflash,128,7,f64\n");
        CHECK_THROWS_AS(parse_records_csv(file.str()), IoError);
    }
    SUBCASE("non-numeric length") {
        write_text(file.str(),
                   "arm,L,seed,precision,peak_bytes,seconds\nflash,huge,7,f64,1,0.5\n");
        CHECK_THROWS_AS(parse_records_csv(file.str()), IoError);
    }
}

TEST_CASE("JSON reports carry records, fits, checks, and notes") {
    const RunReport report = sample_report();
    const nlohmann::json doc = nlohmann::json::parse(report_to_json(report));
    CHECK(doc.at("command") == "scaling");
    REQUIRE(doc.at("records").size() == 2);
    CHECK(doc.at("records")[0].at("arm") == "reference");
    CHECK(doc.at("records")[0].at("L") == 128);
    CHECK(doc.at("records")[1].at("precision") == "f32");
    REQUIRE(doc.at("fits").size() == 1);
    CHECK(doc.at("fits")[0].at("metric") == "peak_bytes");
    REQUIRE(doc.at("checks").size() == 1);
    CHECK(doc.at("checks")[0].at("pass") == true);
    CHECK(doc.at("notes")[0].get<std::string>().find("8192") != std::string::npos);
}

TEST_CASE("emit_report writes the chosen format to a file") {
    const RunReport report = sample_report();
    TempFile csv_file("fipa_emit.csv");
    TempFile json_file("fipa_emit.json");
    emit_report(report, "csv", csv_file.str());
    emit_report(report, "json", json_file.str());
    const std::vector<RunRecord> back = parse_records_csv(csv_file.str());
    CHECK(back.size() == 2);
    std::ifstream in(json_file.str());
    nlohmann::json doc;
    in >> doc;
    CHECK(doc.at("records").size() == 2);
    CHECK_THROWS_AS(emit_report(report, "yaml", csv_file.str()), ValueError);
}

TEST_CASE("default configuration matches the documented values") {
    const BenchConfig cfg = load_config("");
    CHECK(cfg.model.d_in == 32);
    CHECK(cfg.model.heads == 2);
    CHECK(cfg.model.precision == Precision::f64);
    CHECK(cfg.distogram.k == 20);
    CHECK(cfg.distogram.n_bins == 22);
    CHECK(cfg.lengths.empty());
    CHECK(cfg.arms == std::vector<std::string>{"reference", "flash"});
    CHECK(cfg.trials == 100);
    CHECK(cfg.tiles.block_rows == 64);
    CHECK(cfg.reference_byte_budget == 1500000000);
    CHECK(cfg.threads == 1);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("configuration files override only the fields they mention") {
    TempFile file("fipa_config.json");
    write_text(file.str(), R"({
        "model": {"heads": 4, "precision": "f32", "rank": 3},
        "distogram": {"k": 10},
        "bench": {"lengths": [32, 64], "arms": ["flash"], "trials": 5,
                  "tile_rows": 16, "tile_cols": 32, "threads": 2,
                  "translation_scale": 2.5, "reference_byte_budget": 1000}
    })");
    const BenchConfig cfg = load_config(file.str());
    CHECK(cfg.model.heads == 4);
    CHECK(cfg.model.precision == Precision::f32);
    CHECK(cfg.model.rank == 3);
    CHECK(cfg.model.d_in == 32);  // untouched default
    CHECK(cfg.distogram.k == 10);
    CHECK(cfg.distogram.n_bins == 22);  // untouched default
    CHECK(cfg.lengths == std::vector<std::size_t>{32, 64});
    CHECK(cfg.arms == std::vector<std::string>{"flash"});
    CHECK(cfg.trials == 5);
    CHECK(cfg.tiles.block_rows == 16);
    CHECK(cfg.tiles.block_cols == 32);
    CHECK(cfg.threads == 2);
    CHECK(cfg.translation_scale == 2.5);
    CHECK(cfg.reference_byte_budget == 1000);
}

TEST_CASE("broken configuration files are rejected") {
    TempFile file("fipa_config_bad.json");
    SUBCASE("missing file") { CHECK_THROWS_AS(load_config(file.str()), IoError); }
    SUBCASE("invalid JSON") {
        write_text(file.str(), "{not json");
        CHECK_THROWS_AS(load_config(file.str()), IoError);
    }
    SUBCASE("bad precision string") {
        write_text(file.str(), R"({"model": {"precision": "f16"}})");
        CHECK_THROWS_AS(load_config(file.str()), ValueError);
    }
    SUBCASE("bad arm name") {
        write_text(file.str(), R"({"bench": {"arms": ["turbo"]}})");
        CHECK_THROWS_AS(load_config(file.str()).validate(), ValueError);
    }
}

TEST_CASE("config echo is valid JSON and reload-stable") {
    const BenchConfig cfg = load_config("");
    const std::string echo = config_to_json(cfg);
    const nlohmann::json doc = nlohmann::json::parse(echo);
    CHECK(doc.at("model").at("d_in") == 32);
    CHECK(doc.at("bench").at("trials") == 100);

    TempFile file("fipa_config_echo.json");
    write_text(file.str(), echo);
    const BenchConfig back = load_config(file.str());
    CHECK(back.model.d_in == cfg.model.d_in);
    CHECK(back.trials == cfg.trials);
    CHECK(back.arms == cfg.arms);
}

}  // TEST_SUITE
