#include "whitenopt.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "whitenopt/errors.hpp"
#include "whitenopt/harness.hpp"
#include "whitenopt/matrix.hpp"
#include "whitenopt/optim.hpp"
#include "whitenopt/verify.hpp"

namespace {

using namespace whitenopt;

thread_local std::string g_last_error;

wopt_status fail(wopt_status code, const std::string& message) {
    g_last_error = message;
    return code;
}

wopt_status fail_null(const char* what) {
    return fail(WOPT_ERR_INVALID_ARGUMENT, std::string(what) + " must not be null");
}

// Runs fn, translating library exceptions into status codes.
template <typename Fn>
wopt_status guarded(Fn&& fn) noexcept {
    try {
        return fn();
    } catch (const DimensionError& e) {
        return fail(WOPT_ERR_DIMENSION, e.what());
    } catch (const NumericalError& e) {
        return fail(WOPT_ERR_NUMERICAL, e.what());
    } catch (const ParseError& e) {
        return fail(WOPT_ERR_PARSE, e.what());
    } catch (const IoError& e) {
        return fail(WOPT_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(WOPT_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(WOPT_ERR_INTERNAL, "unknown failure");
    }
}

// Copies a string into a malloc'd buffer the caller frees with
// wopt_buffer_free.
char* copy_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

uint8_t* copy_bytes(const std::vector<std::uint8_t>& bytes) {
    // malloc(0) may return NULL; every state blob has at least a header.
    uint8_t* out = static_cast<uint8_t*>(std::malloc(bytes.size()));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, bytes.data(), bytes.size());
    return out;
}

struct AdamPack {
    AdamConfig cfg;
    AdamState state;
};
struct ShampooPack {
    ShampooConfig cfg;
    ShampooState state;
};
struct SoapPack {
    SoapConfig cfg;
    SoapState state;
};

void apply_overrides(ExperimentConfig& cfg, const char* corpus, int64_t seed_override) {
    if (corpus != nullptr) cfg.corpus = corpus;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
}

void require_shape(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
        throw DimensionError("optimizer parameters must have at least one row and column");
    }
}

}  // namespace

struct wopt_optimizer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::variant<AdamPack, ShampooPack, SoapPack> impl;
};

struct wopt_sweep_result {
    std::vector<SweepResult> entries;
};

extern "C" {

const char* wopt_status_name(wopt_status status) {
    switch (status) {
        case WOPT_OK: return "WOPT_OK";
        case WOPT_ERR_INVALID_ARGUMENT: return "WOPT_ERR_INVALID_ARGUMENT";
        case WOPT_ERR_DIMENSION: return "WOPT_ERR_DIMENSION";
        case WOPT_ERR_NUMERICAL: return "WOPT_ERR_NUMERICAL";
        case WOPT_ERR_PARSE: return "WOPT_ERR_PARSE";
        case WOPT_ERR_IO: return "WOPT_ERR_IO";
        case WOPT_ERR_INTERNAL: return "WOPT_ERR_INTERNAL";
    }
    return "WOPT_ERR_UNKNOWN";
}

const char* wopt_last_error(void) { return g_last_error.c_str(); }

const char* wopt_version(void) { return "0.1.0"; }

void wopt_buffer_free(void* buffer) { std::free(buffer); }

// --- Optimizers -------------------------------------------------------------

wopt_status wopt_adam_create(size_t rows, size_t cols, double lr, double beta1, double beta2,
                             double epsilon, wopt_optimizer** out) {
    if (out == nullptr) return fail_null("out");
    return guarded([&] {
        require_shape(rows, cols);
        AdamPack pack{AdamConfig{}, AdamState::zeros(rows, cols)};
        pack.cfg.lr = lr;
        pack.cfg.beta1 = beta1;
        pack.cfg.beta2 = beta2;
        pack.cfg.epsilon = epsilon;
        pack.cfg.validate();
        *out = new wopt_optimizer{rows, cols, std::move(pack)};
        return WOPT_OK;
    });
}

wopt_status wopt_shampoo_create(size_t rows, size_t cols, double lr, uint32_t precond_freq,
                                double precond_beta, double ridge, double momentum_beta,
                                wopt_optimizer** out) {
    if (out == nullptr) return fail_null("out");
    return guarded([&] {
        require_shape(rows, cols);
        ShampooPack pack{ShampooConfig{}, ShampooState::zeros(rows, cols)};
        pack.cfg.lr = lr;
        pack.cfg.precondition_frequency = precond_freq;
        pack.cfg.preconditioner_beta = precond_beta;
        pack.cfg.ridge = ridge;
        pack.cfg.momentum_beta = momentum_beta;
        pack.cfg.validate();
        *out = new wopt_optimizer{rows, cols, std::move(pack)};
        return WOPT_OK;
    });
}

wopt_status wopt_soap_create(size_t rows, size_t cols, double lr, uint32_t precond_freq,
                             double precond_beta, double beta1, double beta2, double epsilon,
                             wopt_optimizer** out) {
    if (out == nullptr) return fail_null("out");
    return guarded([&] {
        require_shape(rows, cols);
        SoapPack pack{SoapConfig{}, SoapState::zeros(rows, cols)};
        pack.cfg.lr = lr;
        pack.cfg.precondition_frequency = precond_freq;
        pack.cfg.preconditioner_beta = precond_beta;
        pack.cfg.inner.beta1 = beta1;
        pack.cfg.inner.beta2 = beta2;
        pack.cfg.inner.epsilon = epsilon;
        pack.cfg.validate();
        *out = new wopt_optimizer{rows, cols, std::move(pack)};
        return WOPT_OK;
    });
}

wopt_status wopt_optimizer_step(wopt_optimizer* opt, double* param, const double* grad,
                                size_t len, wopt_step_outcome* outcome) {
    if (opt == nullptr) return fail_null("opt");
    if (param == nullptr) return fail_null("param");
    if (grad == nullptr) return fail_null("grad");
    if (len != opt->rows * opt->cols) {
        return fail(WOPT_ERR_DIMENSION,
                    "step: len is " + std::to_string(len) + " but the optimizer was created for " +
                        std::to_string(opt->rows) + "x" + std::to_string(opt->cols) +
                        " parameters");
    }
    return guarded([&] {
        Matrix p(opt->rows, opt->cols, std::vector<double>(param, param + len));
        const Matrix g(opt->rows, opt->cols, std::vector<double>(grad, grad + len));
        StepOutcome result = StepOutcome::stepped;
        if (auto* adam = std::get_if<AdamPack>(&opt->impl)) {
            adam_step(adam->state, adam->cfg, p, g);
        } else if (auto* shampoo = std::get_if<ShampooPack>(&opt->impl)) {
            result = shampoo_step(shampoo->state, shampoo->cfg, p, g);
        } else {
            auto& soap = std::get<SoapPack>(opt->impl);
            result = soap_step(soap.state, soap.cfg, p, g);
        }
        std::memcpy(param, p.data().data(), len * sizeof(double));
        if (outcome != nullptr) {
            *outcome = result == StepOutcome::stepped ? WOPT_STEP_APPLIED
                                                      : WOPT_STEP_SKIPPED_ZERO_CURVATURE;
        }
        return WOPT_OK;
    });
}

wopt_status wopt_optimizer_save(const wopt_optimizer* opt, uint8_t** bytes_out, size_t* len_out) {
    if (opt == nullptr) return fail_null("opt");
    if (bytes_out == nullptr) return fail_null("bytes_out");
    if (len_out == nullptr) return fail_null("len_out");
    return guarded([&] {
        const std::vector<std::uint8_t> bytes = std::visit(
            [](const auto& pack) { return serialize_state(pack.state); }, opt->impl);
        *bytes_out = copy_bytes(bytes);
        *len_out = bytes.size();
        return WOPT_OK;
    });
}

wopt_status wopt_optimizer_restore(wopt_optimizer* opt, const uint8_t* bytes, size_t len) {
    if (opt == nullptr) return fail_null("opt");
    if (bytes == nullptr) return fail_null("bytes");
    return guarded([&] {
        const std::span<const std::uint8_t> view(bytes, len);
        if (auto* adam = std::get_if<AdamPack>(&opt->impl)) {
            AdamState state = deserialize_adam_state(view);
            if (state.m.rows() != opt->rows || state.m.cols() != opt->cols) {
                throw DimensionError("restore: checkpoint shape " +
                                     std::to_string(state.m.rows()) + "x" +
                                     std::to_string(state.m.cols()) +
                                     " does not match the optimizer's " +
                                     std::to_string(opt->rows) + "x" + std::to_string(opt->cols));
            }
            adam->state = std::move(state);
        } else if (auto* shampoo = std::get_if<ShampooPack>(&opt->impl)) {
            ShampooState state = deserialize_shampoo_state(view);
            if (state.l.rows() != opt->rows || state.r.rows() != opt->cols) {
                throw DimensionError("restore: checkpoint factors " +
                                     std::to_string(state.l.rows()) + "/" +
                                     std::to_string(state.r.rows()) +
                                     " do not match the optimizer's " + std::to_string(opt->rows) +
                                     "x" + std::to_string(opt->cols) + " parameters");
            }
            shampoo->state = std::move(state);
        } else {
            auto& soap = std::get<SoapPack>(opt->impl);
            SoapState state = deserialize_soap_state(view);
            if (state.l.rows() != opt->rows || state.r.rows() != opt->cols) {
                throw DimensionError("restore: checkpoint factors " +
                                     std::to_string(state.l.rows()) + "/" +
                                     std::to_string(state.r.rows()) +
                                     " do not match the optimizer's " + std::to_string(opt->rows) +
                                     "x" + std::to_string(opt->cols) + " parameters");
            }
            soap.state = std::move(state);
        }
        return WOPT_OK;
    });
}

void wopt_optimizer_free(wopt_optimizer* opt) { delete opt; }

// --- Experiments --------------------------------------------------------------

wopt_status wopt_run_config(const char* config_text, const char* corpus, int64_t seed_override,
                            char** trace_csv_out, int* diverged_out, int* interrupted_out) {
    if (config_text == nullptr) return fail_null("config_text");
    if (trace_csv_out == nullptr) return fail_null("trace_csv_out");
    return guarded([&] {
        ExperimentConfig cfg = parse_single_config(config_text);
        apply_overrides(cfg, corpus, seed_override);
        cfg.validate();
        const LossTrace trace = run_experiment(cfg);
        *trace_csv_out = copy_string(trace_csv_string(trace));
        if (diverged_out != nullptr) *diverged_out = trace.diverged ? 1 : 0;
        if (interrupted_out != nullptr) *interrupted_out = trace.interrupted ? 1 : 0;
        return WOPT_OK;
    });
}

wopt_status wopt_config_count(const char* config_text, size_t* count_out) {
    if (config_text == nullptr) return fail_null("config_text");
    if (count_out == nullptr) return fail_null("count_out");
    return guarded([&] {
        *count_out = parse_experiment_configs(config_text).size();
        return WOPT_OK;
    });
}

wopt_status wopt_sweep_run(const char* config_text, const char* corpus, int64_t seed_override,
                           size_t max_threads, wopt_sweep_result** out) {
    if (config_text == nullptr) return fail_null("config_text");
    if (out == nullptr) return fail_null("out");
    return guarded([&] {
        auto configs = parse_experiment_configs(config_text);
        for (auto& [id, cfg] : configs) apply_overrides(cfg, corpus, seed_override);
        auto result = std::make_unique<wopt_sweep_result>();
        result->entries = sweep(configs, max_threads);
        *out = result.release();
        return WOPT_OK;
    });
}

size_t wopt_sweep_count(const wopt_sweep_result* result) {
    return result == nullptr ? 0 : result->entries.size();
}

const char* wopt_sweep_id(const wopt_sweep_result* result, size_t index) {
    if (result == nullptr || index >= result->entries.size()) {
        fail(WOPT_ERR_INVALID_ARGUMENT, "sweep entry index out of range");
        return nullptr;
    }
    return result->entries[index].id.c_str();
}

const char* wopt_sweep_error(const wopt_sweep_result* result, size_t index) {
    if (result == nullptr || index >= result->entries.size()) {
        fail(WOPT_ERR_INVALID_ARGUMENT, "sweep entry index out of range");
        return nullptr;
    }
    return result->entries[index].error.c_str();
}

int wopt_sweep_diverged(const wopt_sweep_result* result, size_t index) {
    if (result == nullptr || index >= result->entries.size()) return 0;
    return result->entries[index].trace.diverged ? 1 : 0;
}

wopt_status wopt_sweep_trace_csv(const wopt_sweep_result* result, size_t index, char** csv_out) {
    if (result == nullptr) return fail_null("result");
    if (csv_out == nullptr) return fail_null("csv_out");
    if (index >= result->entries.size()) {
        return fail(WOPT_ERR_INVALID_ARGUMENT, "sweep entry index out of range");
    }
    return guarded([&] {
        *csv_out = copy_string(trace_csv_string(result->entries[index].trace));
        return WOPT_OK;
    });
}

wopt_status wopt_sweep_summary_csv(const wopt_sweep_result* result, char** csv_out) {
    if (result == nullptr) return fail_null("result");
    if (csv_out == nullptr) return fail_null("csv_out");
    return guarded([&] {
        *csv_out = copy_string(sweep_summary_csv(result->entries));
        return WOPT_OK;
    });
}

void wopt_sweep_result_free(wopt_sweep_result* result) { delete result; }

// --- Verification -------------------------------------------------------------

wopt_status wopt_verify(uint64_t seed, size_t cases, size_t max_dim, char** report_out,
                        int* all_passed_out) {
    if (report_out == nullptr) return fail_null("report_out");
    return guarded([&] {
        VerifyOptions opts;
        opts.seed = seed;
        opts.cases = cases;
        opts.max_dim = max_dim;
        const VerifyReport report = run_verify(opts);
        *report_out = copy_string(verify_report_text(report));
        if (all_passed_out != nullptr) *all_passed_out = report.all_passed() ? 1 : 0;
        return WOPT_OK;
    });
}

wopt_status wopt_grad_check(uint64_t seed, size_t rounds, char** report_out,
                            int* all_passed_out) {
    if (report_out == nullptr) return fail_null("report_out");
    return guarded([&] {
        const VerifyReport report = run_grad_check(seed, rounds);
        *report_out = copy_string(verify_report_text(report));
        if (all_passed_out != nullptr) *all_passed_out = report.all_passed() ? 1 : 0;
        return WOPT_OK;
    });
}

// --- Interruption ---------------------------------------------------------------

void wopt_request_interrupt(void) { request_interrupt(); }

void wopt_clear_interrupt(void) { clear_interrupt(); }

int wopt_interrupt_requested(void) { return interrupt_requested() ? 1 : 0; }

}  // extern "C"
