// Benchmark driver for the two interchangeable attention implementations:
// the quadratic reference form and the factorized linear-memory form.
//
//   fipa invariance|equivalence|scaling|fit
//        --config <path> --seed <u64> --precision {f32,f64}
//        --out <path> --format {csv,json}
//        [--lengths L1,L2,...] [--arms reference,flash] [--threads N]
//   fit only: --in <records.csv> [--metric peak_bytes|seconds]
//
// Exit codes: 0 = every check passed, 1 = any check failed or a run-time
// error occurred, 2 = command-line usage error.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fipa/bench.hpp"
#include "fipa/error.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string precision;
    std::string out = "-";
    std::string format = "json";
    std::vector<std::size_t> lengths;
    std::vector<std::string> arms;
    int threads = 1;

    CLI::Option* precision_opt = nullptr;
    CLI::Option* lengths_opt = nullptr;
    CLI::Option* arms_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
};

void add_common_options(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path,
                    "JSON configuration file (omitted fields take defaults)");
    sub->add_option("--seed", args.seed, "RNG seed; every command is deterministic given it");
    args.precision_opt =
        sub->add_option("--precision", args.precision, "working precision override")
            ->check(CLI::IsMember({"f32", "f64"}));
    sub->add_option("--out", args.out, "report destination path, '-' for stdout");
    sub->add_option("--format", args.format, "report format")
        ->check(CLI::IsMember({"csv", "json"}));
    args.lengths_opt =
        sub->add_option("--lengths", args.lengths, "sequence lengths override")
            ->delimiter(',');
    args.arms_opt = sub->add_option("--arms", args.arms, "implementation arms override")
                        ->delimiter(',')
                        ->check(CLI::IsMember({"reference", "flash"}));
    args.threads_opt =
        sub->add_option("--threads", args.threads, "worker threads inside the tiled kernel")
            ->check(CLI::PositiveNumber);
}

fipa::BenchConfig build_config(const CommonArgs& args) {
    fipa::BenchConfig cfg = fipa::load_config(args.config_path);
    if (args.precision_opt->count() > 0) {
        cfg.model.precision = fipa::precision_from_name(args.precision);
    }
    if (args.lengths_opt->count() > 0) cfg.lengths = args.lengths;
    if (args.arms_opt->count() > 0) cfg.arms = args.arms;
    if (args.threads_opt->count() > 0) cfg.threads = args.threads;
    cfg.validate();
    return cfg;
}

void print_summary(const fipa::RunReport& report, std::FILE* stream) {
    for (const auto& note : report.notes) {
        std::fprintf(stream, "[NOTE] %s\n", note.c_str());
    }
    for (const auto& fit : report.fits) {
        std::fprintf(stream, "[FIT ] %s %s: quadratic=%.6e linear=%.6e r2=%.6f\n",
                     fit.arm.c_str(), fit.metric.c_str(), fit.quadratic, fit.linear,
                     fit.r_squared);
    }
    for (const auto& check : report.checks) {
        std::fprintf(stream, "[%s] %s: value=%.6e tolerance=%.6e\n",
                     check.pass ? "PASS" : "FAIL", check.name.c_str(), check.value,
                     check.tolerance);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Invariant point attention benchmarks: quadratic reference form vs. "
        "factorized linear-memory form"};
    app.require_subcommand(1);

    CommonArgs inv_args, eqv_args, scl_args, fit_args;
    CLI::App* inv = app.add_subcommand(
        "invariance", "output deviation under random global rigid motions");
    add_common_options(inv, inv_args);
    CLI::App* eqv = app.add_subcommand(
        "equivalence", "max relative deviation between the two forms on identical inputs");
    add_common_options(eqv, eqv_args);
    CLI::App* scl = app.add_subcommand(
        "scaling", "peak-memory and wall-clock sweep over sequence lengths with fits");
    add_common_options(scl, scl_args);
    CLI::App* fit = app.add_subcommand("fit", "refit y = a*L^2 + b*L to a scaling CSV");
    add_common_options(fit, fit_args);
    std::string fit_in;
    std::string fit_metric = "peak_bytes";
    fit->add_option("--in", fit_in, "records CSV produced by the scaling command")
        ->required();
    fit->add_option("--metric", fit_metric, "column to fit")
        ->check(CLI::IsMember({"peak_bytes", "seconds"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        fipa::RunReport report;
        const CommonArgs* args = nullptr;
        if (inv->parsed()) {
            args = &inv_args;
            report = fipa::run_invariance(build_config(inv_args), inv_args.seed);
        } else if (eqv->parsed()) {
            args = &eqv_args;
            report = fipa::run_equivalence(build_config(eqv_args), eqv_args.seed);
        } else if (scl->parsed()) {
            args = &scl_args;
            report = fipa::run_scaling(build_config(scl_args), scl_args.seed);
        } else {
            args = &fit_args;
            report = fipa::run_fit(fit_in, fit_metric, build_config(fit_args));
        }

        fipa::emit_report(report, args->format, args->out);
        // Keep stdout machine-clean when the report itself goes there.
        print_summary(report, args->out == "-" ? stderr : stdout);
        return report.all_pass() ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
