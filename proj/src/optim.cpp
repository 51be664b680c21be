#include "whitenopt/optim.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "whitenopt/eig.hpp"
#include "whitenopt/errors.hpp"

namespace whitenopt {

namespace {

void require_unit_interval(double x, const char* name) {
    if (!(x >= 0.0) || !(x < 1.0)) {
        throw DimensionError(std::string(name) + " must lie in [0, 1), got " + std::to_string(x));
    }
}

void require_positive(double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw DimensionError(std::string(name) + " must be positive and finite, got " +
                             std::to_string(x));
    }
}

void require_step_args(const Matrix& param, const Matrix& grad, std::size_t rows,
                       std::size_t cols) {
    if (!param.same_shape(grad)) {
        throw DimensionError("optimizer step: param " + shape_string(param) + " vs grad " +
                             shape_string(grad));
    }
    if (param.rows() != rows || param.cols() != cols) {
        throw DimensionError("optimizer step: state built for " + std::to_string(rows) + "x" +
                             std::to_string(cols) + " but got param " + shape_string(param));
    }
    ensure_finite(grad, "optimizer step gradient");
}

// EMA blend: acc <- beta * acc + (1 - beta) * update, without temporaries.
void ema_into(Matrix& acc, double beta, const Matrix& update) {
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc.data()[i] = beta * acc.data()[i] + (1.0 - beta) * update.data()[i];
    }
}

bool precond_due(std::uint64_t step_count, std::uint32_t frequency) {
    return (step_count - 1) % frequency == 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void AdamConfig::validate() const {
    require_positive(lr, "AdamConfig.lr");
    require_unit_interval(beta1, "AdamConfig.beta1");
    require_unit_interval(beta2, "AdamConfig.beta2");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw DimensionError("AdamConfig.epsilon must be >= 0");
    }
}

AdamState AdamState::zeros(std::size_t rows, std::size_t cols) {
    AdamState s;
    s.m = Matrix(rows, cols);
    s.v = Matrix(rows, cols);
    return s;
}

Matrix adam_direction(AdamState& state, const AdamConfig& cfg, const Matrix& grad) {
    cfg.validate();
    require_step_args(state.m, grad, state.m.rows(), state.m.cols());

    ema_into(state.m, cfg.beta1, grad);
    for (std::size_t i = 0; i < state.v.size(); ++i) {
        const double g = grad.data()[i];
        state.v.data()[i] = cfg.beta2 * state.v.data()[i] + (1.0 - cfg.beta2) * g * g;
    }
    state.step_count += 1;

    double m_corr = 1.0;
    double v_corr = 1.0;
    if (cfg.bias_correction) {
        const double t = static_cast<double>(state.step_count);
        m_corr = 1.0 - std::pow(cfg.beta1, t);
        v_corr = 1.0 - std::pow(cfg.beta2, t);
    }

    Matrix dir(grad.rows(), grad.cols());
    for (std::size_t i = 0; i < dir.size(); ++i) {
        const double m_hat = state.m.data()[i] / m_corr;
        const double v_hat = state.v.data()[i] / v_corr;
        const double denom = std::sqrt(v_hat) + cfg.epsilon;
        // denom == 0 implies the whole gradient history of this entry is
        // zero, hence m_hat == 0: define the update as zero.
        dir.data()[i] = denom > 0.0 ? m_hat / denom : 0.0;
    }
    ensure_finite(dir, "adam direction");
    return dir;
}

void adam_step(AdamState& state, const AdamConfig& cfg, Matrix& param, const Matrix& grad) {
    require_step_args(param, grad, state.m.rows(), state.m.cols());
    const Matrix dir = adam_direction(state, cfg, grad);
    for (std::size_t i = 0; i < param.size(); ++i) param.data()[i] -= cfg.lr * dir.data()[i];
    ensure_finite(param, "adam updated parameter");
}

// ---------------------------------------------------------------------------
// Shampoo
// ---------------------------------------------------------------------------

void ShampooConfig::validate() const {
    require_positive(lr, "ShampooConfig.lr");
    if (precondition_frequency == 0) {
        throw DimensionError("ShampooConfig.precondition_frequency must be >= 1");
    }
    require_unit_interval(preconditioner_beta, "ShampooConfig.preconditioner_beta");
    require_unit_interval(momentum_beta, "ShampooConfig.momentum_beta");
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
        throw DimensionError("ShampooConfig.ridge must be >= 0");
    }
}

ShampooState ShampooState::zeros(std::size_t rows, std::size_t cols) {
    ShampooState s;
    s.l = Matrix(rows, rows);
    s.r = Matrix(cols, cols);
    return s;
}

StepOutcome shampoo_step(ShampooState& state, const ShampooConfig& cfg, Matrix& param,
                         const Matrix& grad) {
    cfg.validate();
    require_step_args(param, grad, state.l.rows(), state.r.rows());

    ema_into(state.l, cfg.preconditioner_beta, matmul(grad, transpose(grad)));
    ema_into(state.r, cfg.preconditioner_beta, matmul(transpose(grad), grad));
    state.step_count += 1;

    const Matrix* effective_grad = &grad;
    if (cfg.momentum_beta > 0.0) {
        if (!state.momentum) state.momentum = Matrix(grad.rows(), grad.cols());
        ema_into(*state.momentum, cfg.momentum_beta, grad);
        effective_grad = &*state.momentum;
    }

    const double trace_l = trace(state.l);
    if (trace_l <= 0.0) {
        return StepOutcome::skipped_zero_curvature;
    }

    // Lazily recompute if the schedule says so, or if a skipped first step
    // left the cache empty.
    if (precond_due(state.step_count, cfg.precondition_frequency) || !state.l_inv_root) {
        // cfg.ridge is the spectral floor; 0 means unregularized, in which
        // case numerically-zero directions of L or R drop out of the
        // preconditioner instead of being clamped.
        state.l_inv_root = mat_power_sym(state.l, -0.5, cfg.ridge);
        state.r_inv_root = mat_power_sym(state.r, -0.5, cfg.ridge);
        state.last_precond_step = state.step_count;
    }

    const Matrix preconditioned =
        matmul(matmul(*state.l_inv_root, *effective_grad), *state.r_inv_root);
    const double scale = cfg.lr * std::sqrt(trace_l);
    for (std::size_t i = 0; i < param.size(); ++i) {
        param.data()[i] -= scale * preconditioned.data()[i];
    }
    ensure_finite(param, "shampoo updated parameter");
    return StepOutcome::stepped;
}

// ---------------------------------------------------------------------------
// SOAP
// ---------------------------------------------------------------------------

void SoapConfig::validate() const {
    require_positive(lr, "SoapConfig.lr");
    if (precondition_frequency == 0) {
        throw DimensionError("SoapConfig.precondition_frequency must be >= 1");
    }
    require_unit_interval(preconditioner_beta, "SoapConfig.preconditioner_beta");
    inner.validate();
}

SoapState SoapState::zeros(std::size_t rows, std::size_t cols) {
    SoapState s;
    s.l = Matrix(rows, rows);
    s.r = Matrix(cols, cols);
    s.rotated_adam = AdamState::zeros(rows, cols);
    return s;
}

StepOutcome soap_step(SoapState& state, const SoapConfig& cfg, Matrix& param, const Matrix& grad) {
    cfg.validate();
    require_step_args(param, grad, state.l.rows(), state.r.rows());

    ema_into(state.l, cfg.preconditioner_beta, matmul(grad, transpose(grad)));
    ema_into(state.r, cfg.preconditioner_beta, matmul(transpose(grad), grad));
    state.step_count += 1;

    if (trace(state.l) <= 0.0) {
        return StepOutcome::skipped_zero_curvature;
    }

    if (precond_due(state.step_count, cfg.precondition_frequency) || !state.q_l) {
        state.q_l = eig_sym(state.l).vectors;
        state.q_r = eig_sym(state.r).vectors;
        state.last_precond_step = state.step_count;
    }

    const Matrix rotated_grad = matmul(matmul(transpose(*state.q_l), grad), *state.q_r);
    const Matrix rotated_dir = adam_direction(state.rotated_adam, cfg.inner, rotated_grad);
    const Matrix update = matmul(matmul(*state.q_l, rotated_dir), transpose(*state.q_r));
    for (std::size_t i = 0; i < param.size(); ++i) {
        param.data()[i] -= cfg.lr * update.data()[i];
    }
    ensure_finite(param, "soap updated parameter");
    return StepOutcome::stepped;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint8_t kFormatVersion = 1;
constexpr char kMagic[4] = {'W', 'O', 'P', 'T'};

class ByteWriter {
public:
    void u8(std::uint8_t x) { bytes_.push_back(x); }

    void u32(std::uint32_t x) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
    }

    void u64(std::uint64_t x) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
    }

    void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }

    void matrix(const Matrix& m) {
        u32(static_cast<std::uint32_t>(m.rows()));
        u32(static_cast<std::uint32_t>(m.cols()));
        for (double x : m.data()) f64(x);  // row-major payload
    }

    void header(AlgorithmTag tag, std::uint8_t flags) {
        for (char c : kMagic) bytes_.push_back(static_cast<std::uint8_t>(c));
        u8(kFormatVersion);
        u8(static_cast<std::uint8_t>(tag));
        u8(flags);
    }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[offset_++];
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= std::uint32_t{bytes_[offset_ + i]} << (8 * i);
        offset_ += 4;
        return x;
    }

    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= std::uint64_t{bytes_[offset_ + i]} << (8 * i);
        offset_ += 8;
        return x;
    }

    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    Matrix matrix(const char* what) {
        const std::uint32_t rows = u32(what);
        const std::uint32_t cols = u32(what);
        const std::uint64_t count = std::uint64_t{rows} * cols;
        // Compare against the remaining payload before allocating anything,
        // so corrupt dimension fields cannot request absurd buffers.
        if (count > (bytes_.size() - offset_) / 8) {
            throw ParseError("checkpoint: truncated while reading " + std::string(what) +
                             " at offset " + std::to_string(offset_));
        }
        std::vector<double> data(count);
        for (std::uint64_t i = 0; i < count; ++i) data[i] = f64(what);
        return Matrix(rows, cols, std::move(data));
    }

    AlgorithmTag header() {
        need(7, "checkpoint header");
        for (int i = 0; i < 4; ++i) {
            if (bytes_[i] != static_cast<std::uint8_t>(kMagic[i])) {
                throw ParseError("checkpoint: bad magic at offset " + std::to_string(i));
            }
        }
        offset_ = 4;
        const std::uint8_t version = u8("version");
        if (version != kFormatVersion) {
            throw ParseError("checkpoint: unsupported format version " + std::to_string(version) +
                             " at offset 4");
        }
        const std::uint8_t tag = u8("algorithm tag");
        if (tag < 1 || tag > 3) {
            throw ParseError("checkpoint: unknown algorithm tag " + std::to_string(tag) +
                             " at offset 5");
        }
        flags_ = u8("flags");
        return static_cast<AlgorithmTag>(tag);
    }

    std::uint8_t flags() const { return flags_; }

    void finish() const {
        if (offset_ != bytes_.size()) {
            throw ParseError("checkpoint: " + std::to_string(bytes_.size() - offset_) +
                             " trailing bytes at offset " + std::to_string(offset_));
        }
    }

private:
    void need(std::uint64_t n, const char* what) const {
        if (offset_ + n > bytes_.size()) {
            throw ParseError("checkpoint: truncated while reading " + std::string(what) +
                             " at offset " + std::to_string(offset_));
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t offset_ = 0;
    std::uint8_t flags_ = 0;
};

constexpr std::uint8_t kFlagMomentum = 1u << 0;
constexpr std::uint8_t kFlagRoots = 1u << 1;
constexpr std::uint8_t kFlagBasis = 1u << 2;

AlgorithmTag checked_header(ByteReader& reader, AlgorithmTag expected, const char* name) {
    const AlgorithmTag tag = reader.header();
    if (tag != expected) {
        throw ParseError(std::string("checkpoint: expected ") + name +
                         " state but found algorithm tag " +
                         std::to_string(static_cast<int>(tag)) + " at offset 5");
    }
    return tag;
}

}  // namespace

std::vector<std::uint8_t> serialize_state(const AdamState& state) {
    ByteWriter w;
    w.header(AlgorithmTag::adam, 0);
    w.matrix(state.m);
    w.matrix(state.v);
    w.u64(state.step_count);
    return w.take();
}

std::vector<std::uint8_t> serialize_state(const ShampooState& state) {
    ByteWriter w;
    std::uint8_t flags = 0;
    if (state.momentum) flags |= kFlagMomentum;
    if (state.l_inv_root) flags |= kFlagRoots;
    w.header(AlgorithmTag::shampoo, flags);
    w.matrix(state.l);
    w.matrix(state.r);
    if (state.momentum) w.matrix(*state.momentum);
    if (state.l_inv_root) {
        w.matrix(*state.l_inv_root);
        w.matrix(*state.r_inv_root);
    }
    w.u64(state.step_count);
    w.u64(state.last_precond_step);
    return w.take();
}

std::vector<std::uint8_t> serialize_state(const SoapState& state) {
    ByteWriter w;
    std::uint8_t flags = 0;
    if (state.q_l) flags |= kFlagBasis;
    w.header(AlgorithmTag::soap, flags);
    w.matrix(state.l);
    w.matrix(state.r);
    if (state.q_l) {
        w.matrix(*state.q_l);
        w.matrix(*state.q_r);
    }
    w.matrix(state.rotated_adam.m);
    w.matrix(state.rotated_adam.v);
    w.u64(state.step_count);
    w.u64(state.rotated_adam.step_count);
    w.u64(state.last_precond_step);
    return w.take();
}

AlgorithmTag peek_algorithm(std::span<const std::uint8_t> bytes) {
    ByteReader reader(bytes);
    return reader.header();
}

AdamState deserialize_adam_state(std::span<const std::uint8_t> bytes) {
    ByteReader reader(bytes);
    checked_header(reader, AlgorithmTag::adam, "adam");
    AdamState state;
    state.m = reader.matrix("adam m");
    state.v = reader.matrix("adam v");
    state.step_count = reader.u64("step_count");
    reader.finish();
    if (!state.m.same_shape(state.v)) {
        throw ParseError("checkpoint: adam moment shapes disagree");
    }
    return state;
}

ShampooState deserialize_shampoo_state(std::span<const std::uint8_t> bytes) {
    ByteReader reader(bytes);
    checked_header(reader, AlgorithmTag::shampoo, "shampoo");
    ShampooState state;
    state.l = reader.matrix("shampoo L");
    state.r = reader.matrix("shampoo R");
    if (reader.flags() & kFlagMomentum) state.momentum = reader.matrix("shampoo momentum");
    if (reader.flags() & kFlagRoots) {
        state.l_inv_root = reader.matrix("shampoo L inverse root");
        state.r_inv_root = reader.matrix("shampoo R inverse root");
    }
    state.step_count = reader.u64("step_count");
    state.last_precond_step = reader.u64("last_precond_step");
    reader.finish();
    return state;
}

SoapState deserialize_soap_state(std::span<const std::uint8_t> bytes) {
    ByteReader reader(bytes);
    checked_header(reader, AlgorithmTag::soap, "soap");
    SoapState state;
    state.l = reader.matrix("soap L");
    state.r = reader.matrix("soap R");
    if (reader.flags() & kFlagBasis) {
        state.q_l = reader.matrix("soap Q_L");
        state.q_r = reader.matrix("soap Q_R");
    }
    state.rotated_adam.m = reader.matrix("soap rotated m");
    state.rotated_adam.v = reader.matrix("soap rotated v");
    state.step_count = reader.u64("step_count");
    state.rotated_adam.step_count = reader.u64("inner step_count");
    state.last_precond_step = reader.u64("last_precond_step");
    reader.finish();
    return state;
}

}  // namespace whitenopt
