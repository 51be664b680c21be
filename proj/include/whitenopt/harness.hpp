#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "whitenopt/models.hpp"
#include "whitenopt/optim.hpp"
#include "whitenopt/rng.hpp"

namespace whitenopt {

enum class OptimizerKind { adam, shampoo, soap };

const char* optimizer_kind_name(OptimizerKind kind);

// One experiment: a model, an optimizer and a step budget, all derived
// deterministically from the seed. The optimizer fields are shared across
// algorithms: beta1 is the first-moment coefficient (Adam/SOAP beta1,
// Shampoo's gradient momentum), beta2/epsilon apply to Adam and SOAP's inner
// Adam, ridge applies to Shampoo, and precond_freq/precond_beta apply to the
// two preconditioned optimizers. Fields an algorithm has no use for are
// ignored.
struct ExperimentConfig {
    ModelKind model_kind = ModelKind::quadratic;
    std::size_t model_m = 4;       // quadratic rows / regression features
    std::size_t model_n = 4;       // quadratic cols / regression outputs
    double model_cond = 1e4;       // quadratic condition number
    bool model_kron = true;        // quadratic curvature structure
    std::size_t model_batch = 32;  // batch size for the stochastic models
    std::string corpus;            // bigram text; empty -> synthesized
    std::size_t corpus_length = 65536;  // length of the synthesized corpus

    OptimizerKind opt_kind = OptimizerKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double ridge = 0.0;
    double precond_beta = 0.0;
    std::uint32_t precond_freq = 1;

    std::size_t steps = 100;
    std::size_t eval_every = 10;
    std::uint64_t seed = 0;
    std::optional<double> threshold;  // target train loss for summaries

    void validate() const;  // throws DimensionError on out-of-range values
};

struct TraceRow {
    std::size_t step = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
    double grad_norm = 0.0;
    double elapsed_s = 0.0;  // informational; excluded from determinism
};

struct LossTrace {
    std::vector<TraceRow> rows;
    bool diverged = false;
    bool interrupted = false;
    std::size_t stopped_at = 0;  // step at which divergence/interrupt hit
};

// Steps an experiment one update at a time so callers can checkpoint or stop
// between steps. Row 0 reports the evaluation loss at initialization; row k
// reports the step-k batch loss and gradient norm measured after applying
// update k, with a validation loss whenever k is a multiple of eval_every or
// the final step. Divergence (loss above 1e12, non-finite values, or an
// optimizer numerical failure) truncates the trace and flags it.
class ExperimentRunner {
  public:
    explicit ExperimentRunner(ExperimentConfig cfg);

    // Applies one update and records its row. Returns false once the step
    // budget is exhausted, the run diverged, or an interrupt was requested.
    bool step();
    void run();  // steps until done

    bool finished() const;
    std::size_t current_step() const { return current_step_; }
    const LossTrace& trace() const { return trace_; }
    const ExperimentConfig& config() const { return cfg_; }
    Model& model() { return *model_; }

    // Model parameters, optimizer states, RNG state and the step counter;
    // restoring into a runner built from the same config continues the run
    // bit-exactly (the resumed trace holds post-resume rows only).
    std::vector<std::uint8_t> save_checkpoint() const;
    void restore_checkpoint(std::span<const std::uint8_t> bytes);

  private:
    double eval_loss() const;

    ExperimentConfig cfg_;
    std::unique_ptr<Model> model_;
    AdamConfig adam_cfg_;
    ShampooConfig shampoo_cfg_;
    SoapConfig soap_cfg_;
    std::vector<AdamState> adam_states_;
    std::vector<ShampooState> shampoo_states_;
    std::vector<SoapState> soap_states_;
    Rng batch_rng_;
    std::size_t current_step_ = 0;
    LossTrace trace_;
    double started_at_ = 0.0;  // monotonic seconds at construction/restore
};

std::unique_ptr<Model> make_model(const ExperimentConfig& cfg);

LossTrace run_experiment(const ExperimentConfig& cfg);

// First recorded step whose train loss is <= threshold, or nullopt if the
// trace never gets there. Row 0 (the initial loss) counts.
std::optional<std::size_t> steps_to_threshold(const LossTrace& trace, double threshold);

// CSV with header step,train_loss,val_loss,grad_norm,elapsed_s. Losses are
// printed with 17 significant digits so reruns are byte-comparable;
// elapsed_s is wall-clock and must be masked before such comparisons (see
// trace_csv_determinism_key). Divergence or interruption appends a trailing
// "# diverged at step N" / "# interrupted at step N" comment line.
std::string trace_csv_string(const LossTrace& trace);
void write_trace_csv(const LossTrace& trace, const std::string& path);

// The trace CSV with every elapsed_s field replaced by "-": equal keys mean
// equal traces up to wall-clock jitter.
std::string trace_csv_determinism_key(const std::string& csv);

// --- Config files ---------------------------------------------------------
//
// Flat "key = value" text, one pair per line, '#' comments. Recognized keys:
//   model.kind   quadratic | linear_regression | mlp2 | bigram_lm
//   model.m, model.n, model.batch, model.cond, model.kron
//   opt.kind     adam | shampoo | soap
//   opt.lr, opt.beta1, opt.beta2, opt.epsilon, opt.ridge,
//   opt.precond_freq, opt.precond_beta
//   run.steps, run.eval_every, run.seed, run.threshold
// Unknown keys and duplicate keys are errors. A comma-separated value turns
// the key into a sweep axis; axes expand as a cross product in file order
// with later keys cycling fastest. Each expanded config is labeled by its
// swept key=value pairs ("run" when nothing is swept).
std::vector<std::pair<std::string, ExperimentConfig>> parse_experiment_configs(
    const std::string& text);

// Single-experiment variant: rejects sweep axes.
ExperimentConfig parse_single_config(const std::string& text);

// --- Sweeps ----------------------------------------------------------------

struct SweepResult {
    std::string id;
    ExperimentConfig config;
    LossTrace trace;
    std::string error;  // non-empty when the experiment itself failed
    double final_train_loss = 0.0;
    std::optional<double> final_val_loss;
    std::optional<std::size_t> steps_to_thresh;  // vs config.threshold
};

// Runs every config independently and in parallel (at most max_threads at a
// time; 0 means one per hardware thread). A failing config reports through
// its result's error field without disturbing the others.
std::vector<SweepResult> sweep(const std::vector<std::pair<std::string, ExperimentConfig>>& configs,
                               std::size_t max_threads = 0);

// Sweep parallelism cap from WHITENOPT_THREADS (>= 1), defaulting to the
// hardware thread count. A malformed value is a ParseError.
std::size_t sweep_thread_cap();

// Summary CSV over sweep results: one row per config with its final losses
// and threshold crossing, then best-of-grid lr comment lines per optimizer
// whenever opt.lr was swept.
std::string sweep_summary_csv(const std::vector<SweepResult>& results);

// --- Cooperative interruption ----------------------------------------------
//
// Signal-safe stop flag: runners check it between steps and mark their trace
// interrupted. The CLI's SIGINT handler sets it.
void request_interrupt();
void clear_interrupt();
bool interrupt_requested();

}  // namespace whitenopt
