#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>

#include "support.hpp"
#include "whitenopt/harness.hpp"

using namespace whitenopt;
namespace ts = testsupport;

namespace {

const std::string kCli = WHITENOPT_CLI_PATH;

std::string quoted(const std::string& s) { return "'" + s + "'"; }

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

const char* kQuadConfig =
    "model.kind = quadratic\n"
    "opt.kind = soap\n"
    "opt.lr = 0.5\n"
    "run.steps = 8\n"
    "run.eval_every = 4\n"
    "run.seed = 11\n";

}  // namespace

TEST_CASE("run writes the trace CSV and exits 0") {
    ts::TempDir dir("wopt-cli-run");
    ts::write_text(dir.file("exp.cfg"), kQuadConfig);

    const auto result = ts::run_command(kCli + " run --config " + quoted(dir.file("exp.cfg")) +
                                        " --out " + quoted(dir.file("trace.csv")));
    CHECK(result.exit_code == 0);

    const std::string csv = ts::read_text(dir.file("trace.csv"));
    CHECK(csv.rfind("step,train_loss,val_loss,grad_norm,elapsed_s\n", 0) == 0);
    CHECK(count_lines(csv) == 10);  // header + rows 0..8

    // The CLI goes through the C API yet must reproduce the library trace.
    const LossTrace trace = run_experiment(parse_single_config(kQuadConfig));
    CHECK(trace_csv_determinism_key(csv) == trace_csv_determinism_key(trace_csv_string(trace)));
}

TEST_CASE("quiet runs log nothing; verbose runs log to stderr only") {
    ts::TempDir dir("wopt-cli-verbosity");
    ts::write_text(dir.file("exp.cfg"), kQuadConfig);

    const auto quiet = ts::run_command(kCli + " run -q --config " + quoted(dir.file("exp.cfg")) +
                                       " --out " + quoted(dir.file("a.csv")));
    CHECK(quiet.exit_code == 0);
    CHECK(quiet.output.empty());

    // Discarding stdout must not lose the chatter: it lives on stderr. The
    // subshell keeps these redirections ahead of run_command's own merge.
    const auto loud =
        ts::run_command("( " + kCli + " run -v --config " + quoted(dir.file("exp.cfg")) +
                        " --out " + quoted(dir.file("b.csv")) + " 2>&1 1>/dev/null )");
    CHECK(loud.exit_code == 0);
    CHECK(loud.output.find("trace written") != std::string::npos);
}

TEST_CASE("two runs of the same config agree apart from wall-clock") {
    ts::TempDir dir("wopt-cli-determinism");
    ts::write_text(dir.file("exp.cfg"), kQuadConfig);

    const std::string base = kCli + " run -q --config " + quoted(dir.file("exp.cfg")) + " --out ";
    REQUIRE(ts::run_command(base + quoted(dir.file("a.csv"))).exit_code == 0);
    REQUIRE(ts::run_command(base + quoted(dir.file("b.csv"))).exit_code == 0);
    CHECK(trace_csv_determinism_key(ts::read_text(dir.file("a.csv"))) ==
          trace_csv_determinism_key(ts::read_text(dir.file("b.csv"))));

    // A seed override must change the trajectory...
    REQUIRE(ts::run_command(base + quoted(dir.file("c.csv")) + " --seed 99").exit_code == 0);
    CHECK(trace_csv_determinism_key(ts::read_text(dir.file("a.csv"))) !=
          trace_csv_determinism_key(ts::read_text(dir.file("c.csv"))));
    // ...unless it matches the config's seed.
    REQUIRE(ts::run_command(base + quoted(dir.file("d.csv")) + " --seed 11").exit_code == 0);
    CHECK(trace_csv_determinism_key(ts::read_text(dir.file("a.csv"))) ==
          trace_csv_determinism_key(ts::read_text(dir.file("d.csv"))));
}

TEST_CASE("usage and config failures exit 1 with a message naming the problem") {
    ts::TempDir dir("wopt-cli-errors");

    SUBCASE("missing config file") {
        const auto r = ts::run_command(kCli + " run --config " + quoted(dir.file("gone.cfg")) +
                                       " --out " + quoted(dir.file("t.csv")));
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("gone.cfg") != std::string::npos);
    }
    SUBCASE("unknown config key") {
        ts::write_text(dir.file("bad.cfg"), "opt.typo = 1\n");
        const auto r = ts::run_command(kCli + " run --config " + quoted(dir.file("bad.cfg")) +
                                       " --out " + quoted(dir.file("t.csv")));
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("opt.typo") != std::string::npos);
    }
    SUBCASE("unwritable output path") {
        ts::write_text(dir.file("exp.cfg"), kQuadConfig);
        const auto r = ts::run_command(kCli + " run --config " + quoted(dir.file("exp.cfg")) +
                                       " --out " + quoted(dir.file("no/such/dir/t.csv")));
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("cannot write") != std::string::npos);
    }
    SUBCASE("missing required flag") {
        const auto r = ts::run_command(kCli + " run --config x.cfg");
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("--out") != std::string::npos);
    }
    SUBCASE("unknown subcommand") {
        CHECK(ts::run_command(kCli + " dance").exit_code == 1);
        CHECK(ts::run_command(kCli).exit_code == 1);
    }
    SUBCASE("sweep config without an axis") {
        ts::write_text(dir.file("single.cfg"), kQuadConfig);
        const auto r = ts::run_command(kCli + " sweep --config " + quoted(dir.file("single.cfg")) +
                                       " --out " + quoted(dir.file("out")));
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("no sweep axis") != std::string::npos);
    }
    SUBCASE("malformed sweep axis") {
        ts::write_text(dir.file("axis.cfg"), "opt.lr = 1,,10\n");
        const auto r = ts::run_command(kCli + " sweep --config " + quoted(dir.file("axis.cfg")) +
                                       " --out " + quoted(dir.file("out")));
        CHECK(r.exit_code == 1);
        CHECK(r.output.find("opt.lr") != std::string::npos);
    }
}

TEST_CASE("a divergent run exits 2 and truncates the trace with a marker") {
    ts::TempDir dir("wopt-cli-diverge");
    ts::write_text(dir.file("exp.cfg"),
                   "model.kind = quadratic\n"
                   "opt.kind = shampoo\n"
                   "opt.lr = 10\n"
                   "run.steps = 15000\n"
                   "run.eval_every = 5000\n"
                   "run.seed = 7\n");

    const auto r = ts::run_command(kCli + " run -q --config " + quoted(dir.file("exp.cfg")) +
                                   " --out " + quoted(dir.file("t.csv")));
    CHECK(r.exit_code == 2);
    const std::string csv = ts::read_text(dir.file("t.csv"));
    CHECK(csv.find("# diverged at step ") != std::string::npos);
    CHECK(count_lines(csv) < 15000);  // truncated well before the budget
}

TEST_CASE("sweep writes one trace per expanded config plus the summary") {
    ts::TempDir dir("wopt-cli-sweep");
    ts::write_text(dir.file("sweep.cfg"),
                   "model.kind = quadratic\n"
                   "opt.kind = shampoo,soap\n"
                   "opt.precond_freq = 1,10\n"
                   "opt.precond_beta = 0.95\n"
                   "opt.ridge = 1e-1\n"
                   "opt.lr = 0.01\n"
                   "run.steps = 6\n"
                   "run.seed = 2\n");

    const auto r = ts::run_command(kCli + " sweep -q --config " + quoted(dir.file("sweep.cfg")) +
                                   " --out " + quoted(dir.file("grid")));
    CHECK(r.exit_code == 0);

    const char* expected[] = {
        "opt.kind=shampoo__opt.precond_freq=1", "opt.kind=shampoo__opt.precond_freq=10",
        "opt.kind=soap__opt.precond_freq=1", "opt.kind=soap__opt.precond_freq=10"};
    for (const char* id : expected) {
        const std::string csv = ts::read_text(dir.file("grid/" + std::string(id) + ".csv"));
        CHECK(csv.rfind("step,", 0) == 0);
        CHECK(count_lines(csv) == 8);
    }
    const std::string summary = ts::read_text(dir.file("grid/summary.csv"));
    CHECK(count_lines(summary) == 5);  // header + 4 entries
    for (const char* id : expected) CHECK(summary.find(id) != std::string::npos);
}

TEST_CASE("verify prints one PASS/FAIL line per invariant and exits by the verdict") {
    ts::TempDir dir("wopt-cli-verify");
    const std::string cmd = kCli + " verify -q --cases 25 --max-dim 4 --out " +
                            quoted(dir.file("report.txt"));
    const auto r = ts::run_command(cmd);
    CHECK(r.exit_code == 0);
    CHECK(count_lines(r.output) == 14);
    CHECK(r.output.find("soap_direction_equals_shampoo") != std::string::npos);
    CHECK(r.output.find("tolerance=") != std::string::npos);
    CHECK(r.output.find("FAIL") == std::string::npos);
    CHECK(ts::read_text(dir.file("report.txt")) == r.output);

    // Same options, different seed: verdicts must not flip.
    const auto reseeded = ts::run_command(kCli + " verify -q --cases 25 --max-dim 4 --seed 9");
    CHECK(reseeded.exit_code == 0);
    CHECK(reseeded.output.find("FAIL") == std::string::npos);

    // Identical invocations agree byte for byte.
    CHECK(ts::run_command(cmd).output == r.output);

    CHECK(ts::run_command(kCli + " verify --cases 0").exit_code == 1);
    CHECK(ts::run_command(kCli + " verify --max-dim 9").exit_code == 1);
}

TEST_CASE("grad-check reports every model kind") {
    const auto r = ts::run_command(kCli + " grad-check -q --cases 2 --seed 3");
    CHECK(r.exit_code == 0);
    CHECK(count_lines(r.output) == 4);
    for (const char* name : {"quadratic", "linear_regression", "mlp2", "bigram"}) {
        CHECK(r.output.find(name) != std::string::npos);
    }
    CHECK(r.output.find("FAIL") == std::string::npos);
}

TEST_CASE("run accepts a corpus file for the bigram model") {
    ts::TempDir dir("wopt-cli-corpus");
    std::string corpus;
    for (int i = 0; i < 200; ++i) corpus += "the cat sat. ";
    ts::write_text(dir.file("corpus.txt"), corpus);
    ts::write_text(dir.file("exp.cfg"),
                   "model.kind = bigram_lm\n"
                   "model.batch = 16\n"
                   "opt.kind = adam\n"
                   "opt.lr = 0.05\n"
                   "run.steps = 5\n"
                   "run.seed = 4\n");

    const auto with_corpus = ts::run_command(
        kCli + " run -q --config " + quoted(dir.file("exp.cfg")) + " --corpus " +
        quoted(dir.file("corpus.txt")) + " --out " + quoted(dir.file("a.csv")));
    CHECK(with_corpus.exit_code == 0);

    const auto synthesized =
        ts::run_command(kCli + " run -q --config " + quoted(dir.file("exp.cfg")) + " --out " +
                        quoted(dir.file("b.csv")));
    CHECK(synthesized.exit_code == 0);
    CHECK(trace_csv_determinism_key(ts::read_text(dir.file("a.csv"))) !=
          trace_csv_determinism_key(ts::read_text(dir.file("b.csv"))));

    const auto missing = ts::run_command(
        kCli + " run -q --config " + quoted(dir.file("exp.cfg")) + " --corpus " +
        quoted(dir.file("gone.txt")) + " --out " + quoted(dir.file("c.csv")));
    CHECK(missing.exit_code == 1);
    CHECK(missing.output.find("gone.txt") != std::string::npos);
}

TEST_CASE("SIGINT flushes a truncated trace and exits 130") {
    ts::TempDir dir("wopt-cli-sigint");
    ts::write_text(dir.file("exp.cfg"),
                   "model.kind = quadratic\n"
                   "opt.kind = soap\n"
                   "opt.lr = 0.01\n"
                   "run.steps = 50000000\n"
                   "run.eval_every = 1000000\n"
                   "run.seed = 5\n");

    const std::string script = kCli + " run -q --config " + quoted(dir.file("exp.cfg")) +
                               " --out " + quoted(dir.file("t.csv")) +
                               " & pid=$!; sleep 0.5; kill -INT $pid; wait $pid; echo EXIT=$?";
    const auto r = ts::run_command(script);
    CHECK(r.output.find("EXIT=130") != std::string::npos);

    const std::string csv = ts::read_text(dir.file("t.csv"));
    CHECK(csv.rfind("step,", 0) == 0);
    CHECK(csv.find("# interrupted at step ") != std::string::npos);
}

TEST_CASE("--help lists the subcommands and exits 0") {
    const auto r = ts::run_command(kCli + " --help");
    CHECK(r.exit_code == 0);
    for (const char* sub : {"run", "sweep", "verify", "grad-check"}) {
        CHECK(r.output.find(sub) != std::string::npos);
    }
}
