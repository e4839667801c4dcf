#include "fipa/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fipa/error.hpp"

namespace fipa {

namespace {

using nlohmann::json;

// --- little-endian packing ---------------------------------------------------

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Cursor {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("weights file: truncated payload");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= std::uint16_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 2;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
    FIPA_REQUIRE(!t.empty(), "cannot serialize empty tensor '", name, "'");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(t.precision() == Precision::f32 ? 0 : 1));
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    if (t.precision() == Precision::f32) {
        const float* p = t.f32();
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(p[i]);
            for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
        }
    } else {
        const double* p = t.f64();
        for (std::size_t i = 0; i < t.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(p[i]));
    }
}

Tensor get_tensor(Cursor& cur, std::string* name_out) {
    const std::uint16_t name_len = cur.u16();
    *name_out = cur.bytes(name_len);
    const std::uint8_t prec_tag = cur.u8();
    if (prec_tag > 1) throw IoError("weights file: unknown precision tag");
    const Precision prec = prec_tag == 0 ? Precision::f32 : Precision::f64;
    const std::uint8_t rank = cur.u8();
    if (rank == 0) throw IoError("weights file: rank-0 tensor entry");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
        d = static_cast<std::size_t>(cur.u64());
        if (d == 0) throw IoError("weights file: zero dimension");
    }
    Tensor t(shape, prec);
    if (prec == Precision::f32) {
        float* p = t.f32();
        for (std::size_t i = 0; i < t.size(); ++i) {
            cur.need(4);
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                bits |= std::uint32_t(std::uint8_t(cur.buf[cur.pos + b])) << (8 * b);
            }
            cur.pos += 4;
            p[i] = std::bit_cast<float>(bits);
        }
    } else {
        double* p = t.f64();
        for (std::size_t i = 0; i < t.size(); ++i) p[i] = std::bit_cast<double>(cur.u64());
    }
    return t;
}

const char* precision_of(const RunRecord& r) {
    return precision_name(r.precision);
}

}  // namespace

void save_weights(const IpaWeights& w, const std::string& path) {
    std::string buf;
    buf.append("FIPA");
    put_u16(buf, kWeightsVersion);

    const std::pair<const char*, const Tensor*> entries[] = {
        {"w_q", &w.w_q},   {"w_k", &w.w_k},   {"w_v", &w.w_v},
        {"w_qp", &w.w_qp}, {"w_kp", &w.w_kp}, {"w_vp", &w.w_vp},
        {"w_bias", &w.w_bias}, {"gamma_raw", &w.gamma_raw},
        {"w_out", &w.w_out}, {"b_out", &w.b_out},
    };
    put_u16(buf, static_cast<std::uint16_t>(std::size(entries) + 2));
    for (const auto& [name, t] : entries) put_tensor(buf, name, *t);
    put_tensor(buf, "w_l", Tensor::full({1}, w.w_l));
    put_tensor(buf, "w_c", Tensor::full({1}, w.w_c));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to '" + path + "'");
}

IpaWeights load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string buf = ss.str();

    Cursor cur{buf};
    if (cur.bytes(4) != "FIPA") throw IoError("weights file: bad magic");
    const std::uint16_t version = cur.u16();
    if (version != kWeightsVersion) {
        throw IoError(detail::strcat("weights file: version ", version, ", expected ",
                                     kWeightsVersion));
    }
    const std::uint16_t count = cur.u16();

    std::map<std::string, Tensor> table;
    for (std::uint16_t e = 0; e < count; ++e) {
        std::string name;
        Tensor t = get_tensor(cur, &name);
        if (!table.emplace(std::move(name), std::move(t)).second) {
            throw IoError("weights file: duplicate tensor entry");
        }
    }
    if (cur.pos != buf.size()) throw IoError("weights file: trailing bytes");

    auto take = [&table](const char* name) {
        auto it = table.find(name);
        if (it == table.end()) {
            throw IoError(std::string("weights file: missing tensor '") + name + "'");
        }
        Tensor t = std::move(it->second);
        table.erase(it);
        return t;
    };

    IpaWeights w;
    w.w_q = take("w_q");
    w.w_k = take("w_k");
    w.w_v = take("w_v");
    w.w_qp = take("w_qp");
    w.w_kp = take("w_kp");
    w.w_vp = take("w_vp");
    w.w_bias = take("w_bias");
    w.gamma_raw = take("gamma_raw");
    w.w_out = take("w_out");
    w.b_out = take("b_out");
    w.w_l = take("w_l").get_flat(0);
    w.w_c = take("w_c").get_flat(0);
    if (!table.empty()) {
        throw IoError("weights file: unexpected tensor '" + table.begin()->first + "'");
    }
    return w;
}

// --- reports -----------------------------------------------------------------

std::string report_to_csv(const RunReport& report) {
    std::ostringstream os;
    os << "arm,L,seed,precision,peak_bytes,seconds\n";
    os.precision(17);
    for (const RunRecord& r : report.records) {
        os << r.arm << ',' << r.length << ',' << r.seed << ',' << precision_of(r) << ','
           << r.peak_bytes << ',' << r.seconds << '\n';
    }
    return os.str();
}

std::string report_to_json(const RunReport& report) {
    json j;
    j["command"] = report.command;
    j["config"] = report.config_echo.empty() ? json::object() : json::parse(report.config_echo);
    j["records"] = json::array();
    for (const RunRecord& r : report.records) {
        j["records"].push_back({{"arm", r.arm},
                                {"L", r.length},
                                {"seed", r.seed},
                                {"precision", precision_of(r)},
                                {"peak_bytes", r.peak_bytes},
                                {"seconds", r.seconds}});
    }
    j["fits"] = json::array();
    for (const FitSummary& f : report.fits) {
        j["fits"].push_back({{"arm", f.arm},
                             {"metric", f.metric},
                             {"quadratic", f.quadratic},
                             {"linear", f.linear},
                             {"r_squared", f.r_squared}});
    }
    j["checks"] = json::array();
    for (const CheckOutcome& c : report.checks) {
        j["checks"].push_back({{"name", c.name},
                               {"value", c.value},
                               {"tolerance", c.tolerance},
                               {"pass", c.pass}});
    }
    j["notes"] = report.notes;
    return j.dump(2) + "\n";
}

void emit_report(const RunReport& report, const std::string& format, const std::string& path) {
    std::string text;
    if (format == "csv") {
        text = report_to_csv(report);
    } else if (format == "json") {
        text = report_to_json(report);
    } else {
        throw ValueError("unknown report format '" + format + "' (expected csv or json)");
    }
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("short write to '" + path + "'");
}

std::vector<RunRecord> parse_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw IoError("records csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "arm,L,seed,precision,peak_bytes,seconds") {
        throw IoError("records csv: unexpected header '" + line + "'");
    }

    std::vector<RunRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cells.size() != 6) {
            throw IoError(detail::strcat("records csv: line ", line_no, " has ", cells.size(),
                                         " fields, expected 6"));
        }
        try {
            RunRecord r;
            r.arm = cells[0];
            r.length = std::stoull(cells[1]);
            r.seed = std::stoull(cells[2]);
            r.precision = precision_from_name(cells[3]);
            r.peak_bytes = std::stoull(cells[4]);
            r.seconds = std::stod(cells[5]);
            records.push_back(std::move(r));
        } catch (const ValueError&) {
            throw;
        } catch (const std::exception&) {
            throw IoError(detail::strcat("records csv: line ", line_no, " is not numeric"));
        }
    }
    return records;
}

// --- configuration -----------------------------------------------------------

void BenchConfig::validate() const {
    model.validate();
    FIPA_REQUIRE(!arms.empty(), "at least one arm required");
    for (const std::string& arm : arms) {
        FIPA_REQUIRE(arm == "reference" || arm == "flash", "unknown arm '", arm,
                     "' (expected reference or flash)");
    }
    for (std::size_t i = 1; i < lengths.size(); ++i) {
        FIPA_REQUIRE(lengths[i - 1] < lengths[i], "lengths must be strictly increasing");
    }
    FIPA_REQUIRE(trials >= 1, "trials must be positive");
    FIPA_REQUIRE(tiles.block_rows >= 1 && tiles.block_cols >= 1, "tile sizes must be positive");
    FIPA_REQUIRE(threads >= 1, "threads must be positive");
    FIPA_REQUIRE(translation_scale >= 0 && motion_translation_scale >= 0,
                 "translation scales must be non-negative");
}

BenchConfig load_config(const std::string& path) {
    BenchConfig cfg;
    if (path.empty()) return cfg;

    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("config '" + path + "': " + e.what());
    }

    try {
        const json m = j.value("model", json::object());
        cfg.model.d_in = m.value("d_in", cfg.model.d_in);
        cfg.model.d_z = m.value("d_z", cfg.model.d_z);
        cfg.model.heads = m.value("heads", cfg.model.heads);
        cfg.model.c = m.value("c", cfg.model.c);
        cfg.model.n_query = m.value("n_query", cfg.model.n_query);
        cfg.model.n_value = m.value("n_value", cfg.model.n_value);
        cfg.model.rank = m.value("rank", cfg.model.rank);
        cfg.model.enforce_head_cap = m.value("enforce_head_cap", cfg.model.enforce_head_cap);
        if (m.contains("precision")) {
            cfg.model.precision = precision_from_name(m["precision"].get<std::string>());
        }

        const json d = j.value("distogram", json::object());
        cfg.distogram.k = d.value("k", cfg.distogram.k);
        cfg.distogram.n_bins = d.value("n_bins", cfg.distogram.n_bins);
        cfg.distogram.d_min = d.value("d_min", cfg.distogram.d_min);
        cfg.distogram.d_max = d.value("d_max", cfg.distogram.d_max);
        cfg.distogram.pe_dim = d.value("pe_dim", cfg.distogram.pe_dim);

        const json b = j.value("bench", json::object());
        cfg.lengths = b.value("lengths", cfg.lengths);
        cfg.arms = b.value("arms", cfg.arms);
        cfg.trials = b.value("trials", cfg.trials);
        cfg.translation_scale = b.value("translation_scale", cfg.translation_scale);
        cfg.motion_translation_scale =
            b.value("motion_translation_scale", cfg.motion_translation_scale);
        cfg.tiles.block_rows = b.value("tile_rows", cfg.tiles.block_rows);
        cfg.tiles.block_cols = b.value("tile_cols", cfg.tiles.block_cols);
        cfg.reference_byte_budget =
            b.value("reference_byte_budget", cfg.reference_byte_budget);
        cfg.threads = b.value("threads", cfg.threads);
    } catch (const json::exception& e) {
        throw IoError("config '" + path + "': " + e.what());
    }
    return cfg;
}

std::string config_to_json(const BenchConfig& cfg) {
    json j;
    j["model"] = {{"d_in", cfg.model.d_in},
                  {"d_z", cfg.model.d_z},
                  {"heads", cfg.model.heads},
                  {"c", cfg.model.c},
                  {"n_query", cfg.model.n_query},
                  {"n_value", cfg.model.n_value},
                  {"rank", cfg.model.rank},
                  {"precision", precision_name(cfg.model.precision)},
                  {"enforce_head_cap", cfg.model.enforce_head_cap}};
    j["distogram"] = {{"k", cfg.distogram.k},
                      {"n_bins", cfg.distogram.n_bins},
                      {"d_min", cfg.distogram.d_min},
                      {"d_max", cfg.distogram.d_max},
                      {"pe_dim", cfg.distogram.pe_dim}};
    j["bench"] = {{"lengths", cfg.lengths},
                  {"arms", cfg.arms},
                  {"trials", cfg.trials},
                  {"translation_scale", cfg.translation_scale},
                  {"motion_translation_scale", cfg.motion_translation_scale},
                  {"tile_rows", cfg.tiles.block_rows},
                  {"tile_cols", cfg.tiles.block_cols},
                  {"reference_byte_budget", cfg.reference_byte_budget},
                  {"threads", cfg.threads}};
    return j.dump();
}

}  // namespace fipa
