#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fipa/attention_kernel.hpp"
#include "fipa/ipa.hpp"
#include "fipa/pair_features.hpp"
#include "fipa/tensor.hpp"

namespace fipa {

// --- weights files -----------------------------------------------------------
// Binary layout (all integers little-endian):
//   magic "FIPA" | u16 version | u16 tensor count | entries...
// entry: u16 name length | name bytes | u8 precision (0=f32, 1=f64) |
//        u8 rank | u64 dims[rank] | raw little-endian element payload.
// The scalar logit weights travel as 1-element f64 tensors named
// "w_l" / "w_c". Round trips are bit-exact.

inline constexpr std::uint16_t kWeightsVersion = 1;

void save_weights(const IpaWeights& w, const std::string& path);
IpaWeights load_weights(const std::string& path);

// --- benchmark reports -------------------------------------------------------

// One measured forward pass.
struct RunRecord {
    std::string arm;  // "reference" or "flash"
    std::size_t length = 0;
    std::uint64_t seed = 0;
    Precision precision = Precision::f64;
    std::size_t peak_bytes = 0;  // ledger peak during the measured region
    double seconds = 0.0;        // median wall-clock
};

// Least-squares summary of y = quadratic·L² + linear·L for one arm/metric.
struct FitSummary {
    std::string arm;
    std::string metric;  // "peak_bytes" or "seconds"
    double quadratic = 0.0;
    double linear = 0.0;
    double r_squared = 0.0;
};

// One tolerance check with its outcome.
struct CheckOutcome {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct RunReport {
    std::string command;
    std::string config_echo;  // JSON text of the effective configuration
    std::vector<RunRecord> records;
    std::vector<FitSummary> fits;
    std::vector<CheckOutcome> checks;
    std::vector<std::string> notes;

    bool all_pass() const {
        for (const auto& c : checks) {
            if (!c.pass) return false;
        }
        return true;
    }
};

// CSV columns, in order: arm,L,seed,precision,peak_bytes,seconds — records
// only (fits, checks, and notes appear in the JSON form).
std::string report_to_csv(const RunReport& report);
std::string report_to_json(const RunReport& report);

// Write the report to `path` ("-" = stdout) as "csv" or "json".
void emit_report(const RunReport& report, const std::string& format, const std::string& path);

// Parse a records CSV produced by report_to_csv (header required).
std::vector<RunRecord> parse_records_csv(const std::string& path);

// --- configuration -----------------------------------------------------------

// Everything the benchmark commands need; loaded from a JSON file with
// defaults for every omitted field (see configs/default.json for the schema).
struct BenchConfig {
    IpaConfig model;
    DistogramSpec distogram;
    std::vector<std::size_t> lengths;  // empty = per-command default
    std::vector<std::string> arms = {"reference", "flash"};
    std::size_t trials = 100;
    double translation_scale = 1.0;         // stddev of the synthetic point cloud
    double motion_translation_scale = 1.0;  // stddev of applied rigid motions
    TileSpec tiles;
    std::size_t reference_byte_budget = 1500000000;  // auto-cap for the quadratic arm
    int threads = 1;

    void validate() const;
};

// path "" loads pure defaults; otherwise the file must parse as JSON.
BenchConfig load_config(const std::string& path);
std::string config_to_json(const BenchConfig& cfg);

}  // namespace fipa
