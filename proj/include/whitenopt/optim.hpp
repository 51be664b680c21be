#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "whitenopt/matrix.hpp"

namespace whitenopt {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;   // 0 gives the pure sign-style update
    bool bias_correction = true;

    void validate() const;
};

struct AdamState {
    Matrix m;  // first-moment EMA
    Matrix v;  // second-moment EMA, entrywise >= 0
    std::uint64_t step_count = 0;

    static AdamState zeros(std::size_t rows, std::size_t cols);
};

// Advances the moments and returns the update direction m_hat / (sqrt(v_hat)
// + epsilon) without applying a learning rate. Entries whose denominator is
// exactly zero (possible only when the numerator is zero too) yield zero.
Matrix adam_direction(AdamState& state, const AdamConfig& cfg, const Matrix& grad);

// param <- param - lr * adam_direction(...)
void adam_step(AdamState& state, const AdamConfig& cfg, Matrix& param, const Matrix& grad);

// ---------------------------------------------------------------------------
// Shampoo
// ---------------------------------------------------------------------------

struct ShampooConfig {
    double lr = 1e-3;
    // Inverse roots are recomputed at steps 1, f+1, 2f+1, ...; L and R still
    // accumulate every step.
    std::uint32_t precondition_frequency = 1;
    // EMA factor for L and R. 0 keeps the plain per-step factors; ~0.95 is a
    // reasonable choice for noisy training gradients.
    double preconditioner_beta = 0.0;
    double ridge = 0.0;           // added to L and R before the inverse root
    double momentum_beta = 0.0;   // EMA on the gradient itself; 0 disables

    void validate() const;
};

struct ShampooState {
    Matrix l;  // rows x rows Gram accumulator
    Matrix r;  // cols x cols Gram accumulator
    std::optional<Matrix> l_inv_root;  // cached (l + ridge I)^(-1/2)
    std::optional<Matrix> r_inv_root;  // cached (r + ridge I)^(-1/2)
    std::optional<Matrix> momentum;
    std::uint64_t step_count = 0;
    std::uint64_t last_precond_step = 0;  // 0 = roots never computed

    static ShampooState zeros(std::size_t rows, std::size_t cols);
};

enum class StepOutcome {
    stepped,
    // trace(L) <= 0, which can only happen while the entire gradient history
    // is zero; the parameter is left untouched.
    skipped_zero_curvature,
};

// param <- param - lr * trace(L)^(1/2) * L^(-1/2) * G_m * R^(-1/2), where G_m
// is the momentum-averaged gradient (equal to grad when momentum_beta == 0).
StepOutcome shampoo_step(ShampooState& state, const ShampooConfig& cfg, Matrix& param,
                         const Matrix& grad);

// ---------------------------------------------------------------------------
// SOAP: Adam run inside Shampoo's eigenbasis
// ---------------------------------------------------------------------------

struct SoapConfig {
    double lr = 1e-3;
    std::uint32_t precondition_frequency = 1;
    double preconditioner_beta = 0.0;
    // Moment and epsilon settings for the inner Adam; its lr field is unused
    // because the outer lr scales the final update.
    AdamConfig inner;

    void validate() const;
};

struct SoapState {
    Matrix l;
    Matrix r;
    std::optional<Matrix> q_l;  // eigenvectors of l, refreshed every f steps
    std::optional<Matrix> q_r;  // eigenvectors of r
    // Inner Adam moments live in the rotated basis and are deliberately NOT
    // re-rotated when q_l / q_r are refreshed.
    AdamState rotated_adam;
    std::uint64_t step_count = 0;
    std::uint64_t last_precond_step = 0;

    static SoapState zeros(std::size_t rows, std::size_t cols);
};

// param <- param - lr * Q_L * AdamDir(Q_L^T grad Q_R) * Q_R^T
StepOutcome soap_step(SoapState& state, const SoapConfig& cfg, Matrix& param, const Matrix& grad);

// ---------------------------------------------------------------------------
// State checkpointing
//
// Binary little-endian format shared by all three algorithms:
//   bytes 0..3   magic "WOPT"
//   byte  4      format version (1)
//   byte  5      algorithm tag (1 = adam, 2 = shampoo, 3 = soap)
//   byte  6      presence flags for optional matrices
//   ...          matrices in a fixed per-algorithm order, each serialized as
//                rows (u32), cols (u32), then rows*cols row-major f64 values
//   ...          trailing u64 counters (step_count first)
// Deserialization is strict: bad magic, unknown version/tag, truncation or
// trailing bytes all raise ParseError with the offending byte offset.
// ---------------------------------------------------------------------------

enum class AlgorithmTag : std::uint8_t { adam = 1, shampoo = 2, soap = 3 };

std::vector<std::uint8_t> serialize_state(const AdamState& state);
std::vector<std::uint8_t> serialize_state(const ShampooState& state);
std::vector<std::uint8_t> serialize_state(const SoapState& state);

AlgorithmTag peek_algorithm(std::span<const std::uint8_t> bytes);
AdamState deserialize_adam_state(std::span<const std::uint8_t> bytes);
ShampooState deserialize_shampoo_state(std::span<const std::uint8_t> bytes);
SoapState deserialize_soap_state(std::span<const std::uint8_t> bytes);

}  // namespace whitenopt
