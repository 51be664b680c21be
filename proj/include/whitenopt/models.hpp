#pragma once

// Tiny differentiable models with analytic losses and gradients, plus a
// finite-difference gradient checker. Each model owns a named parameter
// list; evaluation is a pure function of (parameters, batch), and batches
// are drawn from the model's own data distribution so a training loop only
// needs sample_batch / loss_and_grads / eval_batch.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "whitenopt/matrix.hpp"
#include "whitenopt/rng.hpp"

namespace whitenopt {

enum class ModelKind { quadratic, linear_regression, mlp2, bigram_lm };

const char* model_kind_name(ModelKind kind);

struct NamedParam {
    std::string name;
    Matrix value;
};

// One batch of training data. Which fields are used depends on the model:
// numeric models fill inputs/targets (row counts must match); the bigram
// model fills the class id vectors (context symbol and next symbol, same
// length); the quadratic model is deterministic and uses an empty batch.
struct Batch {
    Matrix inputs;   // examples x features
    Matrix targets;  // examples x outputs
    std::vector<std::uint32_t> class_inputs;
    std::vector<std::uint32_t> class_targets;
};

class Model {
  public:
    virtual ~Model() = default;

    virtual ModelKind kind() const = 0;
    const char* kind_name() const { return model_kind_name(kind()); }

    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }

    // Training loss on the batch; throws NumericalError naming the first
    // non-finite parameter, or a generic one if the loss itself overflows.
    virtual double loss(const Batch& batch) const = 0;

    // Loss plus gradients aligned with params(). grads is resized.
    virtual double loss_and_grads(const Batch& batch, std::vector<Matrix>& grads) const = 0;

    // Draw a training batch from the model's data distribution.
    virtual Batch sample_batch(Rng& rng) const = 0;

    // Fixed held-out data for validation; deterministic per model instance.
    virtual Batch eval_batch() const = 0;

  protected:
    std::vector<NamedParam> params_;
};

// f(W) = 0.5 vec(W)^T A vec(W) - b^T vec(W) for an SPD A over column-stacked
// m x n parameters; gradient unvec(A vec(W) - b). Batches are empty: the
// gradient is deterministic.
class QuadraticModel : public Model {
  public:
    QuadraticModel(Matrix a, std::vector<double> b, std::size_t m, std::size_t n, Matrix w0);

    ModelKind kind() const override { return ModelKind::quadratic; }
    double loss(const Batch& batch) const override;
    double loss_and_grads(const Batch& batch, std::vector<Matrix>& grads) const override;
    Batch sample_batch(Rng& rng) const override;
    Batch eval_batch() const override;

    const Matrix& curvature() const { return a_; }
    double min_loss() const;  // value at the stationary point
    std::size_t param_rows() const { return m_; }
    std::size_t param_cols() const { return n_; }

  private:
    Matrix a_;
    std::vector<double> b_;
    std::size_t m_, n_;
};

// Least squares: loss = ||X W - Y||_F^2 / (2 batch). Data comes from a fixed
// random teacher with small additive noise.
class LinearRegressionModel : public Model {
  public:
    LinearRegressionModel(std::size_t features, std::size_t outputs, std::size_t batch_size,
                          std::uint64_t seed);

    ModelKind kind() const override { return ModelKind::linear_regression; }
    double loss(const Batch& batch) const override;
    double loss_and_grads(const Batch& batch, std::vector<Matrix>& grads) const override;
    Batch sample_batch(Rng& rng) const override;
    Batch eval_batch() const override;

  private:
    Matrix teacher_;
    std::size_t batch_size_;
    Batch eval_;
    double noise_ = 0.05;
};

// Two-layer tanh MLP (8 -> 16 -> 4) with mean squared error against a fixed
// random teacher of the same architecture; gradients by manual backprop.
// Biases are column vectors so the optimizers also see n x 1 parameters.
class Mlp2Model : public Model {
  public:
    explicit Mlp2Model(std::uint64_t seed, std::size_t batch_size = 32);

    ModelKind kind() const override { return ModelKind::mlp2; }
    double loss(const Batch& batch) const override;
    double loss_and_grads(const Batch& batch, std::vector<Matrix>& grads) const override;
    Batch sample_batch(Rng& rng) const override;
    Batch eval_batch() const override;

    static constexpr std::size_t kIn = 8, kHidden = 16, kOut = 4;

  private:
    Matrix forward(const Matrix& x, Matrix* hidden) const;
    Matrix teacher_forward(const Matrix& x) const;

    Matrix tw1_, tb1_, tw2_, tb2_;  // teacher weights
    std::size_t batch_size_;
    Batch eval_;
};

// Character bigram language model: one vocab x vocab logit table, trained
// with cross-entropy on next-symbol prediction over a corpus split 90/10
// into train/validation by position.
class BigramModel : public Model {
  public:
    BigramModel(const std::string& corpus, std::size_t batch_size, std::uint64_t seed);

    ModelKind kind() const override { return ModelKind::bigram_lm; }
    double loss(const Batch& batch) const override;
    double loss_and_grads(const Batch& batch, std::vector<Matrix>& grads) const override;
    Batch sample_batch(Rng& rng) const override;
    Batch eval_batch() const override;

    std::size_t train_transitions() const { return train_count_; }
    std::size_t val_transitions() const { return eval_.class_inputs.size(); }

  private:
    std::vector<std::uint8_t> ids_;  // corpus mapped to symbol ids
    std::size_t train_count_;        // positions [0, train_count_) are training transitions
    std::size_t batch_size_;
    Batch eval_;
};

// --- Markov source behind the bigram task -------------------------------

// The alphabet is 'a'..'p'; other bytes map to the catch-all last symbol.
inline constexpr std::size_t kBigramVocab = 16;
std::size_t bigram_symbol_id(char c);

// Row-stochastic transition table of the fixed generator (vocab x vocab).
const Matrix& bigram_transition_table();

// Conditional entropy of the generator in nats per symbol: the optimal
// achievable bigram cross-entropy on text it produces.
double bigram_entropy_floor();

// Deterministic synthetic text of the given length (>= 2) from the
// generator.
std::string make_bigram_corpus(std::uint64_t seed, std::size_t length);

// --- Factories ------------------------------------------------------------

// Random quadratic with condition number `cond` and largest eigenvalue 1.
// With kron_structured the curvature is (R kron L)/trace(L) for SPD factors
// whose condition numbers split `cond` evenly, so Kronecker-factored
// preconditioning is exact on it. The linear term is zero and the start
// point is scaled so the initial loss is 0.5 (minimum 0).
std::unique_ptr<QuadraticModel> make_quadratic(std::size_t m, std::size_t n, std::uint64_t seed,
                                               double cond, bool kron_structured);

// Central finite differences on up to 25 random coordinates per parameter;
// returns the max relative error against the analytic gradients. h > 0.
double finite_diff_check(Model& model, const Batch& batch, double h, Rng& rng);

}  // namespace whitenopt
