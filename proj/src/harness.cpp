#include "whitenopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "whitenopt/errors.hpp"

namespace whitenopt {

namespace {

constexpr double kDivergenceLimit = 1e12;

double monotonic_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::atomic<bool> g_interrupt{false};

}  // namespace

void request_interrupt() { g_interrupt.store(true, std::memory_order_relaxed); }
void clear_interrupt() { g_interrupt.store(false, std::memory_order_relaxed); }
bool interrupt_requested() { return g_interrupt.load(std::memory_order_relaxed); }

const char* optimizer_kind_name(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::shampoo: return "shampoo";
        case OptimizerKind::soap: return "soap";
    }
    return "unknown";
}

void ExperimentConfig::validate() const {
    if (model_m == 0 || model_n == 0 || model_batch == 0) {
        throw DimensionError("config: model sizes and batch must be >= 1");
    }
    if (!(model_cond >= 1.0)) throw DimensionError("config: model.cond must be >= 1");
    if (model_kind == ModelKind::bigram_lm && corpus.empty() && corpus_length < 2) {
        throw DimensionError("config: corpus length must be >= 2");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) throw DimensionError("config: opt.lr must be positive");
    if (!(beta1 >= 0.0) || beta1 >= 1.0) throw DimensionError("config: opt.beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0) || beta2 >= 1.0) throw DimensionError("config: opt.beta2 must be in [0, 1)");
    if (!(epsilon >= 0.0)) throw DimensionError("config: opt.epsilon must be >= 0");
    if (!(ridge >= 0.0)) throw DimensionError("config: opt.ridge must be >= 0");
    if (!(precond_beta >= 0.0) || precond_beta >= 1.0) {
        throw DimensionError("config: opt.precond_beta must be in [0, 1)");
    }
    if (precond_freq == 0) throw DimensionError("config: opt.precond_freq must be >= 1");
    if (eval_every == 0) throw DimensionError("config: run.eval_every must be >= 1");
    if (threshold && !std::isfinite(*threshold)) {
        throw DimensionError("config: run.threshold must be finite");
    }
}

std::unique_ptr<Model> make_model(const ExperimentConfig& cfg) {
    switch (cfg.model_kind) {
        case ModelKind::quadratic:
            return make_quadratic(cfg.model_m, cfg.model_n, cfg.seed, cfg.model_cond,
                                  cfg.model_kron);
        case ModelKind::linear_regression:
            return std::make_unique<LinearRegressionModel>(cfg.model_m, cfg.model_n,
                                                           cfg.model_batch, cfg.seed);
        case ModelKind::mlp2:
            return std::make_unique<Mlp2Model>(cfg.seed, cfg.model_batch);
        case ModelKind::bigram_lm:
            return std::make_unique<BigramModel>(
                cfg.corpus.empty() ? make_bigram_corpus(cfg.seed, cfg.corpus_length) : cfg.corpus,
                cfg.model_batch, cfg.seed);
    }
    throw DimensionError("config: unknown model kind");
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

ExperimentRunner::ExperimentRunner(ExperimentConfig cfg)
    : cfg_(std::move(cfg)), batch_rng_(Rng::derive(cfg_.seed, 0x41)) {
    cfg_.validate();
    model_ = make_model(cfg_);

    switch (cfg_.opt_kind) {
        case OptimizerKind::adam:
            adam_cfg_ = {cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.epsilon, true};
            adam_cfg_.validate();
            break;
        case OptimizerKind::shampoo:
            shampoo_cfg_ = {cfg_.lr, cfg_.precond_freq, cfg_.precond_beta, cfg_.ridge, cfg_.beta1};
            shampoo_cfg_.validate();
            break;
        case OptimizerKind::soap:
            soap_cfg_ = {cfg_.lr, cfg_.precond_freq, cfg_.precond_beta,
                         AdamConfig{1.0, cfg_.beta1, cfg_.beta2, cfg_.epsilon, true}};
            soap_cfg_.validate();
            break;
    }
    for (const NamedParam& p : model_->params()) {
        const std::size_t rows = p.value.rows(), cols = p.value.cols();
        switch (cfg_.opt_kind) {
            case OptimizerKind::adam: adam_states_.push_back(AdamState::zeros(rows, cols)); break;
            case OptimizerKind::shampoo:
                shampoo_states_.push_back(ShampooState::zeros(rows, cols));
                break;
            case OptimizerKind::soap: soap_states_.push_back(SoapState::zeros(rows, cols)); break;
        }
    }

    started_at_ = monotonic_seconds();
    const double initial = eval_loss();
    trace_.rows.push_back({0, initial, initial, 0.0, 0.0});
}

double ExperimentRunner::eval_loss() const { return model_->loss(model_->eval_batch()); }

bool ExperimentRunner::finished() const {
    return current_step_ >= cfg_.steps || trace_.diverged || trace_.interrupted;
}

bool ExperimentRunner::step() {
    if (finished()) return false;
    if (interrupt_requested()) {
        trace_.interrupted = true;
        trace_.stopped_at = current_step_;
        return false;
    }
    const std::size_t this_step = current_step_ + 1;
    try {
        const Batch batch = model_->sample_batch(batch_rng_);
        std::vector<Matrix> grads;
        const double pre_loss = model_->loss_and_grads(batch, grads);

        double grad_sq = 0.0;
        for (const Matrix& g : grads) {
            const double fro = frobenius_norm(g);
            grad_sq += fro * fro;
        }
        const double grad_norm = std::sqrt(grad_sq);
        if (!std::isfinite(pre_loss) || pre_loss > kDivergenceLimit || !std::isfinite(grad_norm)) {
            trace_.diverged = true;
            trace_.stopped_at = this_step;
            return false;
        }

        std::vector<NamedParam>& params = model_->params();
        for (std::size_t p = 0; p < params.size(); ++p) {
            switch (cfg_.opt_kind) {
                case OptimizerKind::adam:
                    adam_step(adam_states_[p], adam_cfg_, params[p].value, grads[p]);
                    break;
                case OptimizerKind::shampoo:
                    shampoo_step(shampoo_states_[p], shampoo_cfg_, params[p].value, grads[p]);
                    break;
                case OptimizerKind::soap:
                    soap_step(soap_states_[p], soap_cfg_, params[p].value, grads[p]);
                    break;
            }
        }

        const double post_loss = model_->loss(batch);
        if (!std::isfinite(post_loss) || post_loss > kDivergenceLimit) {
            trace_.diverged = true;
            trace_.stopped_at = this_step;
            return false;
        }
        current_step_ = this_step;

        TraceRow row;
        row.step = this_step;
        row.train_loss = post_loss;
        row.grad_norm = grad_norm;
        row.elapsed_s = monotonic_seconds() - started_at_;
        if (this_step % cfg_.eval_every == 0 || this_step == cfg_.steps) {
            row.val_loss = eval_loss();
        }
        trace_.rows.push_back(row);
    } catch (const NumericalError&) {
        trace_.diverged = true;
        trace_.stopped_at = this_step;
        return false;
    }
    return !finished();
}

void ExperimentRunner::run() {
    while (step()) {
    }
}

LossTrace run_experiment(const ExperimentConfig& cfg) {
    ExperimentRunner runner(cfg);
    runner.run();
    return runner.trace();
}

// ---------------------------------------------------------------------------
// Runner checkpoints: "WRUN" header, then the step counter, RNG state, every
// model parameter and every optimizer state blob, all little-endian.
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
  public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8(const char* what) { return take(1, what)[0]; }

    std::uint32_t u32(const char* what) {
        const std::uint8_t* p = take(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        return v;
    }

    std::uint64_t u64(const char* what) {
        const std::uint8_t* p = take(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }

    std::span<const std::uint8_t> blob(std::size_t len, const char* what) {
        const std::uint8_t* p = take(len, what);
        return {p, len};
    }

    std::size_t offset() const { return offset_; }

    void expect_end() const {
        if (offset_ != bytes_.size()) {
            throw ParseError("run checkpoint: " + std::to_string(bytes_.size() - offset_) +
                             " trailing bytes at offset " + std::to_string(offset_));
        }
    }

  private:
    const std::uint8_t* take(std::size_t len, const char* what) {
        if (bytes_.size() - offset_ < len || bytes_.size() < len) {
            throw ParseError("run checkpoint: truncated reading " + std::string(what) +
                             " at offset " + std::to_string(offset_));
        }
        const std::uint8_t* p = bytes_.data() + offset_;
        offset_ += len;
        return p;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t offset_ = 0;
};

std::uint8_t algorithm_byte(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::adam: return 1;
        case OptimizerKind::shampoo: return 2;
        case OptimizerKind::soap: return 3;
    }
    return 0;
}

}  // namespace

std::vector<std::uint8_t> ExperimentRunner::save_checkpoint() const {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'W', 'R', 'U', 'N'});
    out.push_back(1);  // version
    out.push_back(algorithm_byte(cfg_.opt_kind));
    put_u64(out, current_step_);
    for (std::uint64_t word : batch_rng_.state()) put_u64(out, word);

    const std::vector<NamedParam>& params = model_->params();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (std::size_t p = 0; p < params.size(); ++p) {
        const Matrix& value = params[p].value;
        put_u32(out, static_cast<std::uint32_t>(value.rows()));
        put_u32(out, static_cast<std::uint32_t>(value.cols()));
        for (std::size_t i = 0; i < value.size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &value.data()[i], 8);
            put_u64(out, bits);
        }
        std::vector<std::uint8_t> blob;
        switch (cfg_.opt_kind) {
            case OptimizerKind::adam: blob = serialize_state(adam_states_[p]); break;
            case OptimizerKind::shampoo: blob = serialize_state(shampoo_states_[p]); break;
            case OptimizerKind::soap: blob = serialize_state(soap_states_[p]); break;
        }
        put_u64(out, blob.size());
        out.insert(out.end(), blob.begin(), blob.end());
    }
    return out;
}

void ExperimentRunner::restore_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader reader(bytes);
    const std::uint8_t magic[4] = {reader.u8("magic"), reader.u8("magic"), reader.u8("magic"),
                                   reader.u8("magic")};
    if (std::memcmp(magic, "WRUN", 4) != 0) {
        throw ParseError("run checkpoint: bad magic at offset 0");
    }
    const std::uint8_t version = reader.u8("version");
    if (version != 1) {
        throw ParseError("run checkpoint: unsupported version " + std::to_string(version) +
                         " at offset 4");
    }
    const std::uint8_t algorithm = reader.u8("algorithm");
    if (algorithm != algorithm_byte(cfg_.opt_kind)) {
        throw ParseError("run checkpoint: algorithm tag " + std::to_string(algorithm) +
                         " does not match configured " + optimizer_kind_name(cfg_.opt_kind));
    }
    const std::uint64_t step = reader.u64("step");
    if (step > cfg_.steps) {
        throw ParseError("run checkpoint: step " + std::to_string(step) +
                         " exceeds configured budget " + std::to_string(cfg_.steps));
    }
    std::array<std::uint64_t, 4> rng_state;
    for (std::uint64_t& word : rng_state) word = reader.u64("rng state");

    std::vector<NamedParam>& params = model_->params();
    const std::uint32_t count = reader.u32("parameter count");
    if (count != params.size()) {
        throw ParseError("run checkpoint: has " + std::to_string(count) +
                         " parameters, model has " + std::to_string(params.size()));
    }

    std::vector<Matrix> values;
    std::vector<AdamState> adam_states;
    std::vector<ShampooState> shampoo_states;
    std::vector<SoapState> soap_states;
    for (std::uint32_t p = 0; p < count; ++p) {
        const std::uint32_t rows = reader.u32("rows");
        const std::uint32_t cols = reader.u32("cols");
        if (rows != params[p].value.rows() || cols != params[p].value.cols()) {
            throw ParseError("run checkpoint: parameter '" + params[p].name + "' is " +
                             std::to_string(rows) + "x" + std::to_string(cols) +
                             ", model expects " + shape_string(params[p].value));
        }
        Matrix value(rows, cols);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const std::uint64_t bits = reader.u64("parameter data");
            std::memcpy(&value.data()[i], &bits, 8);
        }
        values.push_back(std::move(value));

        const std::uint64_t blob_len = reader.u64("state length");
        const std::span<const std::uint8_t> blob =
            reader.blob(static_cast<std::size_t>(blob_len), "optimizer state");
        switch (cfg_.opt_kind) {
            case OptimizerKind::adam: adam_states.push_back(deserialize_adam_state(blob)); break;
            case OptimizerKind::shampoo:
                shampoo_states.push_back(deserialize_shampoo_state(blob));
                break;
            case OptimizerKind::soap: soap_states.push_back(deserialize_soap_state(blob)); break;
        }
    }
    reader.expect_end();

    // All parsed; commit.
    for (std::uint32_t p = 0; p < count; ++p) params[p].value = std::move(values[p]);
    adam_states_ = std::move(adam_states);
    shampoo_states_ = std::move(shampoo_states);
    soap_states_ = std::move(soap_states);
    batch_rng_.set_state(rng_state);
    current_step_ = static_cast<std::size_t>(step);
    trace_ = LossTrace{};
    started_at_ = monotonic_seconds();
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

std::optional<std::size_t> steps_to_threshold(const LossTrace& trace, double threshold) {
    if (!std::isfinite(threshold)) {
        throw DimensionError("steps_to_threshold: threshold must be finite");
    }
    for (const TraceRow& row : trace.rows) {
        if (row.train_loss <= threshold) return row.step;
    }
    return std::nullopt;
}

namespace {

std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string trace_csv_string(const LossTrace& trace) {
    std::string out = "step,train_loss,val_loss,grad_norm,elapsed_s\n";
    char elapsed[32];
    for (const TraceRow& row : trace.rows) {
        std::snprintf(elapsed, sizeof(elapsed), "%.6f", row.elapsed_s);
        out += std::to_string(row.step);
        out += ',';
        out += format_g17(row.train_loss);
        out += ',';
        if (row.val_loss) out += format_g17(*row.val_loss);
        out += ',';
        out += format_g17(row.grad_norm);
        out += ',';
        out += elapsed;
        out += '\n';
    }
    if (trace.diverged) {
        out += "# diverged at step " + std::to_string(trace.stopped_at) + "\n";
    } else if (trace.interrupted) {
        out += "# interrupted at step " + std::to_string(trace.stopped_at) + "\n";
    }
    return out;
}

void write_trace_csv(const LossTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    const std::string csv = trace_csv_string(trace);
    out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
    if (!out) throw IoError("failed writing trace to '" + path + "'");
}

std::string trace_csv_determinism_key(const std::string& csv) {
    std::string out;
    out.reserve(csv.size());
    std::size_t line_start = 0;
    while (line_start < csv.size()) {
        std::size_t line_end = csv.find('\n', line_start);
        if (line_end == std::string::npos) line_end = csv.size();
        const std::string line = csv.substr(line_start, line_end - line_start);
        if (!line.empty() && line[0] != '#' && line.find("step,") != 0) {
            const std::size_t last_comma = line.rfind(',');
            out += line.substr(0, last_comma + 1);
            out += '-';
        } else {
            out += line;
        }
        out += '\n';
        line_start = line_end + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used == value.size()) return v;
    } catch (const std::exception&) {
    }
    throw ParseError("config: invalid number '" + value + "' for key '" + key + "'");
}

std::uint64_t parse_u64(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used == value.size() && value[0] != '-') return v;
    } catch (const std::exception&) {
    }
    throw ParseError("config: invalid integer '" + value + "' for key '" + key + "'");
}

bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ParseError("config: invalid boolean '" + value + "' for key '" + key + "'");
}

ModelKind parse_model_kind(const std::string& value) {
    if (value == "quadratic") return ModelKind::quadratic;
    if (value == "linear_regression") return ModelKind::linear_regression;
    if (value == "mlp2") return ModelKind::mlp2;
    if (value == "bigram_lm") return ModelKind::bigram_lm;
    throw ParseError("config: unknown model kind '" + value + "'");
}

OptimizerKind parse_optimizer_kind(const std::string& value) {
    if (value == "adam") return OptimizerKind::adam;
    if (value == "shampoo") return OptimizerKind::shampoo;
    if (value == "soap") return OptimizerKind::soap;
    throw ParseError("config: unknown optimizer kind '" + value + "'");
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "model.kind") {
        cfg.model_kind = parse_model_kind(value);
    } else if (key == "model.m") {
        cfg.model_m = static_cast<std::size_t>(parse_u64(value, key));
    } else if (key == "model.n") {
        cfg.model_n = static_cast<std::size_t>(parse_u64(value, key));
    } else if (key == "model.batch") {
        cfg.model_batch = static_cast<std::size_t>(parse_u64(value, key));
    } else if (key == "model.cond") {
        cfg.model_cond = parse_double(value, key);
    } else if (key == "model.kron") {
        cfg.model_kron = parse_bool(value, key);
    } else if (key == "opt.kind") {
        cfg.opt_kind = parse_optimizer_kind(value);
    } else if (key == "opt.lr") {
        cfg.lr = parse_double(value, key);
    } else if (key == "opt.beta1") {
        cfg.beta1 = parse_double(value, key);
    } else if (key == "opt.beta2") {
        cfg.beta2 = parse_double(value, key);
    } else if (key == "opt.epsilon") {
        cfg.epsilon = parse_double(value, key);
    } else if (key == "opt.ridge") {
        cfg.ridge = parse_double(value, key);
    } else if (key == "opt.precond_freq") {
        cfg.precond_freq = static_cast<std::uint32_t>(parse_u64(value, key));
    } else if (key == "opt.precond_beta") {
        cfg.precond_beta = parse_double(value, key);
    } else if (key == "run.steps") {
        cfg.steps = static_cast<std::size_t>(parse_u64(value, key));
    } else if (key == "run.eval_every") {
        cfg.eval_every = static_cast<std::size_t>(parse_u64(value, key));
    } else if (key == "run.seed") {
        cfg.seed = parse_u64(value, key);
    } else if (key == "run.threshold") {
        cfg.threshold = parse_double(value, key);
    } else {
        throw ParseError("config: unknown key '" + key + "'");
    }
}

}  // namespace

std::vector<std::pair<std::string, ExperimentConfig>> parse_experiment_configs(
    const std::string& text) {
    struct Entry {
        std::string key;
        std::vector<std::string> values;
    };
    std::vector<Entry> entries;

    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(line_no) +
                             ": expected 'key = value', got '" + line + "'");
        }
        Entry entry;
        entry.key = trim(line.substr(0, eq));
        const std::string value_part = line.substr(eq + 1);
        if (entry.key.empty()) {
            throw ParseError("config line " + std::to_string(line_no) + ": empty key");
        }
        for (const Entry& seen : entries) {
            if (seen.key == entry.key) {
                throw ParseError("config line " + std::to_string(line_no) + ": duplicate key '" +
                                 entry.key + "'");
            }
        }
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = value_part.find(',', start);
            const std::string piece =
                trim(value_part.substr(start, comma == std::string::npos ? std::string::npos
                                                                         : comma - start));
            if (piece.empty()) {
                throw ParseError("config line " + std::to_string(line_no) +
                                 ": empty element in list for key '" + entry.key + "'");
            }
            entry.values.push_back(piece);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        entries.push_back(std::move(entry));
    }

    // Cross product over list-valued keys, later axes cycling fastest.
    std::vector<std::pair<std::string, ExperimentConfig>> configs;
    configs.emplace_back("", ExperimentConfig{});
    for (const auto& entry : entries) {
        std::vector<std::pair<std::string, ExperimentConfig>> expanded;
        expanded.reserve(configs.size() * entry.values.size());
        for (const auto& [id, cfg] : configs) {
            for (const std::string& value : entry.values) {
                ExperimentConfig next = cfg;
                apply_key(next, entry.key, value);
                std::string next_id = id;
                if (entry.values.size() > 1) {
                    if (!next_id.empty()) next_id += "__";
                    next_id += entry.key + "=" + value;
                }
                expanded.emplace_back(std::move(next_id), std::move(next));
            }
        }
        configs = std::move(expanded);
    }
    for (auto& [id, cfg] : configs) {
        if (id.empty()) id = "run";
        cfg.validate();
    }
    return configs;
}

ExperimentConfig parse_single_config(const std::string& text) {
    auto configs = parse_experiment_configs(text);
    if (configs.size() != 1) {
        throw ParseError("config: expected a single experiment, found a sweep over " +
                         std::to_string(configs.size()) + " configurations");
    }
    return configs.front().second;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

std::size_t sweep_thread_cap() {
    const char* env = std::getenv("WHITENOPT_THREADS");
    if (env == nullptr || *env == '\0') {
        return std::max<std::size_t>(1, std::thread::hardware_concurrency());
    }
    const std::uint64_t v = parse_u64(env, "WHITENOPT_THREADS");
    if (v == 0) throw ParseError("config: invalid integer '0' for key 'WHITENOPT_THREADS'");
    return static_cast<std::size_t>(v);
}

std::vector<SweepResult> sweep(const std::vector<std::pair<std::string, ExperimentConfig>>& configs,
                               std::size_t max_threads) {
    if (configs.empty()) throw DimensionError("sweep: need at least one configuration");
    if (max_threads == 0) max_threads = sweep_thread_cap();

    std::vector<SweepResult> results(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= configs.size()) return;
            SweepResult& result = results[i];
            result.id = configs[i].first;
            result.config = configs[i].second;
            try {
                result.trace = run_experiment(result.config);
                result.final_train_loss = result.trace.rows.back().train_loss;
                for (auto it = result.trace.rows.rbegin(); it != result.trace.rows.rend(); ++it) {
                    if (it->val_loss) {
                        result.final_val_loss = it->val_loss;
                        break;
                    }
                }
                if (result.config.threshold) {
                    result.steps_to_thresh =
                        steps_to_threshold(result.trace, *result.config.threshold);
                }
            } catch (const Error& e) {
                result.error = e.what();
            }
        }
    };

    const std::size_t workers = std::min(max_threads, configs.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    return results;
}

std::string sweep_summary_csv(const std::vector<SweepResult>& results) {
    std::string out =
        "id,model,optimizer,lr,precond_freq,seed,final_train_loss,final_val_loss,"
        "steps_to_threshold,status\n";
    for (const SweepResult& r : results) {
        out += r.id;
        out += ',';
        out += model_kind_name(r.config.model_kind);
        out += ',';
        out += optimizer_kind_name(r.config.opt_kind);
        out += ',';
        out += format_g17(r.config.lr);
        out += ',';
        out += std::to_string(r.config.precond_freq);
        out += ',';
        out += std::to_string(r.config.seed);
        out += ',';
        if (r.error.empty()) out += format_g17(r.final_train_loss);
        out += ',';
        if (r.error.empty() && r.final_val_loss) out += format_g17(*r.final_val_loss);
        out += ',';
        if (r.config.threshold) {
            out += r.steps_to_thresh ? std::to_string(*r.steps_to_thresh) : "never";
        }
        out += ',';
        if (!r.error.empty()) {
            out += "error";
        } else if (r.trace.diverged) {
            out += "diverged";
        } else if (r.trace.interrupted) {
            out += "interrupted";
        } else {
            out += "ok";
        }
        out += '\n';
    }

    // Best-of-grid learning rate per optimizer, by final validation loss
    // (falling back to train loss when no eval ran), only when lr was swept.
    std::map<OptimizerKind, std::vector<const SweepResult*>> by_opt;
    for (const SweepResult& r : results) {
        if (r.error.empty() && !r.trace.diverged && !r.trace.interrupted) {
            by_opt[r.config.opt_kind].push_back(&r);
        }
    }
    for (const auto& [kind, group] : by_opt) {
        bool lr_varies = false;
        for (const SweepResult* r : group) lr_varies |= r->config.lr != group.front()->config.lr;
        if (!lr_varies) continue;
        const SweepResult* best = nullptr;
        double best_loss = 0.0;
        for (const SweepResult* r : group) {
            const double loss = r->final_val_loss.value_or(r->final_train_loss);
            if (best == nullptr || loss < best_loss) {
                best = r;
                best_loss = loss;
            }
        }
        out += "# best opt.lr for " + std::string(optimizer_kind_name(kind)) + ": " +
               format_g17(best->config.lr) + " (loss " + format_g17(best_loss) + ")\n";
    }
    return out;
}

}  // namespace whitenopt
