// whitenopt command-line front end.
//
// Subcommands:
//   run        train one experiment from a config file, write its trace CSV
//   sweep      expand a config's sweep axes, run all, write traces + summary
//   verify     run the numerical invariant suite (the headline command)
//   grad-check audit analytic gradients against finite differences
//
// Exit codes: 0 success; 1 usage/config/io error; 2 numerical failure
// (divergent run, failed invariant or gradient check); 130 interrupted.
//
// Deliberately built against the C API in whitenopt.h only, so it doubles
// as a consumer test of the shared library. Reports go to stdout; progress
// and diagnostics go to stderr.

#include <csignal>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "whitenopt.h"

namespace {

int g_verbosity = 1;  // 0 with -q, 2 with -v

void info(const std::string& line) {
    if (g_verbosity >= 1) std::fprintf(stderr, "%s\n", line.c_str());
}

void detail(const std::string& line) {
    if (g_verbosity >= 2) std::fprintf(stderr, "%s\n", line.c_str());
}

void error(const std::string& line) { std::fprintf(stderr, "error: %s\n", line.c_str()); }

// Frees C API buffers on scope exit.
struct Buffer {
    char* p = nullptr;
    ~Buffer() { wopt_buffer_free(p); }
};

struct SweepGuard {
    wopt_sweep_result* p = nullptr;
    ~SweepGuard() { wopt_sweep_result_free(p); }
};

extern "C" void handle_sigint(int) { wopt_request_interrupt(); }

bool read_file(const std::string& path, std::string& text_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) return false;
    std::ostringstream ss;
    ss << in.rdbuf();
    text_out = ss.str();
    return !in.bad();
}

bool write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) return false;
    out << text;
    out.flush();
    return out.good();
}

// Every subcommand validates its paths up front, before any work runs.
bool probe_writable(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    return out.good();
}

int report_api_failure(const char* what, wopt_status status) {
    error(std::string(what) + ": " + wopt_last_error() + " [" + wopt_status_name(status) + "]");
    return 1;
}

std::string sanitize_filename(const std::string& id) {
    std::string out = id;
    for (char& c : out) {
        if (c == '/' || c == '\\' || c == ' ') c = '_';
    }
    return out;
}

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    std::string corpus_path;
    std::int64_t seed = -1;  // < 0 keeps the config's run.seed
};

// Loads the config file and optional corpus file, validating both up front.
// Returns 0 on success, otherwise the process exit code.
int load_inputs(const CommonArgs& args, std::string& config_text, std::string& corpus_text,
                bool& have_corpus) {
    if (!read_file(args.config_path, config_text)) {
        error("cannot read config file '" + args.config_path + "'");
        return 1;
    }
    have_corpus = !args.corpus_path.empty();
    if (have_corpus && !read_file(args.corpus_path, corpus_text)) {
        error("cannot read corpus file '" + args.corpus_path + "'");
        return 1;
    }
    return 0;
}

int cmd_run(const CommonArgs& args) {
    std::string config_text, corpus_text;
    bool have_corpus = false;
    if (int rc = load_inputs(args, config_text, corpus_text, have_corpus); rc != 0) return rc;
    if (!probe_writable(args.out_path)) {
        error("cannot write output file '" + args.out_path + "'");
        return 1;
    }

    detail("running config '" + args.config_path + "' -> '" + args.out_path + "'");
    Buffer csv;
    int diverged = 0, interrupted = 0;
    const wopt_status status =
        wopt_run_config(config_text.c_str(), have_corpus ? corpus_text.c_str() : nullptr,
                        args.seed, &csv.p, &diverged, &interrupted);
    if (status != WOPT_OK) return report_api_failure("run", status);

    if (!write_file(args.out_path, csv.p)) {
        error("failed writing trace to '" + args.out_path + "'");
        return 1;
    }
    if (interrupted != 0) {
        info("interrupted; partial trace written to " + args.out_path);
        return 130;
    }
    if (diverged != 0) {
        info("diverged; truncated trace written to " + args.out_path);
        return 2;
    }
    info("trace written to " + args.out_path);
    return 0;
}

int cmd_sweep(const CommonArgs& args, std::size_t max_threads) {
    std::string config_text, corpus_text;
    bool have_corpus = false;
    if (int rc = load_inputs(args, config_text, corpus_text, have_corpus); rc != 0) return rc;

    std::size_t count = 0;
    if (wopt_status status = wopt_config_count(config_text.c_str(), &count); status != WOPT_OK) {
        return report_api_failure("sweep", status);
    }
    if (count < 2) {
        error("config '" + args.config_path +
              "' has no sweep axis (comma-separated values); use `run` for a single experiment");
        return 1;
    }

    std::error_code ec;
    std::filesystem::create_directories(args.out_path, ec);
    if (ec || !std::filesystem::is_directory(args.out_path)) {
        error("cannot create output directory '" + args.out_path + "'");
        return 1;
    }

    detail("sweeping " + std::to_string(count) + " configs into '" + args.out_path + "'");
    SweepGuard sweep;
    const wopt_status status = wopt_sweep_run(
        config_text.c_str(), have_corpus ? corpus_text.c_str() : nullptr, args.seed, max_threads,
        &sweep.p);
    if (status != WOPT_OK) return report_api_failure("sweep", status);

    bool any_error = false;
    for (std::size_t i = 0; i < wopt_sweep_count(sweep.p); ++i) {
        const std::string id = wopt_sweep_id(sweep.p, i);
        const std::string entry_error = wopt_sweep_error(sweep.p, i);
        if (!entry_error.empty()) {
            error("config '" + id + "' failed: " + entry_error);
            any_error = true;
        }
        Buffer csv;
        if (wopt_status s = wopt_sweep_trace_csv(sweep.p, i, &csv.p); s != WOPT_OK) {
            return report_api_failure("sweep trace", s);
        }
        const std::string path = args.out_path + "/" + sanitize_filename(id) + ".csv";
        if (!write_file(path, csv.p)) {
            error("failed writing trace to '" + path + "'");
            return 1;
        }
        detail("wrote " + path);
    }

    Buffer summary;
    if (wopt_status s = wopt_sweep_summary_csv(sweep.p, &summary.p); s != WOPT_OK) {
        return report_api_failure("sweep summary", s);
    }
    const std::string summary_path = args.out_path + "/summary.csv";
    if (!write_file(summary_path, summary.p)) {
        error("failed writing summary to '" + summary_path + "'");
        return 1;
    }
    info("summary written to " + summary_path);

    if (wopt_interrupt_requested()) return 130;
    return any_error ? 1 : 0;
}

// Shared by verify and grad-check: print the report, optionally save it,
// exit by the pass flag.
int finish_report(const char* what, wopt_status status, const Buffer& report, int all_passed,
                  const std::string& out_path) {
    if (status != WOPT_OK) return report_api_failure(what, status);
    std::fputs(report.p, stdout);
    std::fflush(stdout);
    if (!out_path.empty() && !write_file(out_path, report.p)) {
        error("cannot write report to '" + out_path + "'");
        return 1;
    }
    if (all_passed != 1) {
        error(std::string(what) + ": some checks failed");
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, handle_sigint);

    CLI::App app{"Gradient-whitening optimizers: training runs, sweeps and numerical checks"};
    app.require_subcommand(1);
    app.fallthrough();  // let -v/-q appear after the subcommand too
    app.add_flag_callback("-v,--verbose", [] { g_verbosity = 2; }, "Log details to stderr");
    app.add_flag_callback("-q,--quiet", [] { g_verbosity = 0; }, "Log only errors to stderr");

    CommonArgs run_args;
    CLI::App* run = app.add_subcommand("run", "Run one experiment and write its trace CSV");
    run->add_option("--config", run_args.config_path, "Experiment config file")->required();
    run->add_option("--out", run_args.out_path, "Trace CSV output path")->required();
    run->add_option("--seed", run_args.seed, "Override run.seed (>= 0)");
    run->add_option("--corpus", run_args.corpus_path, "Text file for the bigram model");

    CommonArgs sweep_args;
    std::size_t sweep_threads = 0;
    CLI::App* sweep =
        app.add_subcommand("sweep", "Expand sweep axes, run every config, write traces + summary");
    sweep->add_option("--config", sweep_args.config_path, "Config file with sweep axes")
        ->required();
    sweep->add_option("--out", sweep_args.out_path, "Output directory")->required();
    sweep->add_option("--seed", sweep_args.seed, "Override run.seed for every config (>= 0)");
    sweep->add_option("--corpus", sweep_args.corpus_path, "Text file for the bigram model");
    sweep->add_option("--threads", sweep_threads,
                      "Max concurrent experiments (0 = WHITENOPT_THREADS or hardware)");

    std::uint64_t verify_seed = 1;
    std::size_t verify_cases = 200;
    std::size_t verify_max_dim = 5;
    std::string verify_out;
    CLI::App* verify = app.add_subcommand(
        "verify", "Run the numerical invariant suite (one line per invariant, PASS/FAIL)");
    verify->add_option("--seed", verify_seed, "Base seed for the randomized checks");
    verify->add_option("--cases", verify_cases, "Random instances per invariant");
    verify->add_option("--max-dim", verify_max_dim, "Largest factor dimension (2..6)");
    verify->add_option("--out", verify_out, "Also write the report to this file");

    std::uint64_t grad_seed = 1;
    std::size_t grad_rounds = 20;
    std::string grad_out;
    CLI::App* grad = app.add_subcommand(
        "grad-check", "Check analytic gradients against finite differences for every model");
    grad->add_option("--seed", grad_seed, "Base seed for the sampled models");
    grad->add_option("--cases", grad_rounds, "Independently seeded models per kind");
    grad->add_option("--out", grad_out, "Also write the report to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (app.got_subcommand(run)) return cmd_run(run_args);
    if (app.got_subcommand(sweep)) return cmd_sweep(sweep_args, sweep_threads);
    if (app.got_subcommand(verify)) {
        if (!verify_out.empty() && !probe_writable(verify_out)) {
            error("cannot write report to '" + verify_out + "'");
            return 1;
        }
        detail("verify: seed " + std::to_string(verify_seed) + ", " +
               std::to_string(verify_cases) + " cases, max dim " +
               std::to_string(verify_max_dim));
        Buffer report;
        int all_passed = 0;
        const wopt_status status =
            wopt_verify(verify_seed, verify_cases, verify_max_dim, &report.p, &all_passed);
        return finish_report("verify", status, report, all_passed, verify_out);
    }
    if (!grad_out.empty() && !probe_writable(grad_out)) {
        error("cannot write report to '" + grad_out + "'");
        return 1;
    }
    detail("grad-check: seed " + std::to_string(grad_seed) + ", " + std::to_string(grad_rounds) +
           " rounds");
    Buffer report;
    int all_passed = 0;
    const wopt_status status = wopt_grad_check(grad_seed, grad_rounds, &report.p, &all_passed);
    return finish_report("grad-check", status, report, all_passed, grad_out);
}
