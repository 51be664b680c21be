#include "whitenopt/models.hpp"

#include <algorithm>
#include <cmath>

#include "whitenopt/eig.hpp"
#include "whitenopt/errors.hpp"

namespace whitenopt {

namespace {

void require_numeric_batch(const Batch& batch, std::size_t features, std::size_t outputs,
                           const char* what) {
    if (batch.inputs.cols() != features || batch.targets.cols() != outputs ||
        batch.inputs.rows() != batch.targets.rows() || batch.inputs.rows() == 0) {
        throw DimensionError(std::string(what) + ": batch is " + shape_string(batch.inputs) +
                             " -> " + shape_string(batch.targets) + ", expected (k x " +
                             std::to_string(features) + ") -> (k x " + std::to_string(outputs) +
                             ")");
    }
}

void require_class_batch(const Batch& batch, const char* what) {
    if (batch.class_inputs.empty() || batch.class_inputs.size() != batch.class_targets.size()) {
        throw DimensionError(std::string(what) + ": class batch sizes " +
                             std::to_string(batch.class_inputs.size()) + " and " +
                             std::to_string(batch.class_targets.size()) + " do not match");
    }
    for (std::uint32_t id : batch.class_inputs) {
        if (id >= kBigramVocab) throw DimensionError(std::string(what) + ": symbol id out of range");
    }
    for (std::uint32_t id : batch.class_targets) {
        if (id >= kBigramVocab) throw DimensionError(std::string(what) + ": symbol id out of range");
    }
}

void check_params_finite(const std::vector<NamedParam>& params) {
    for (const NamedParam& p : params) ensure_finite(p.value, p.name.c_str());
}

double finite_loss(double loss, const char* what) {
    if (!std::isfinite(loss)) {
        throw NumericalError(std::string(what) + ": loss is non-finite");
    }
    return loss;
}

std::vector<double> logspace(double lo, double hi, std::size_t count) {
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = hi;
        return out;
    }
    const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = std::exp(std::log(lo) + step * static_cast<double>(i));
    }
    return out;
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::quadratic: return "quadratic";
        case ModelKind::linear_regression: return "linear_regression";
        case ModelKind::mlp2: return "mlp2";
        case ModelKind::bigram_lm: return "bigram_lm";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Quadratic
// ---------------------------------------------------------------------------

QuadraticModel::QuadraticModel(Matrix a, std::vector<double> b, std::size_t m, std::size_t n,
                               Matrix w0)
    : a_(std::move(a)), b_(std::move(b)), m_(m), n_(n) {
    if (a_.rows() != m * n || a_.cols() != m * n) {
        throw DimensionError("quadratic: curvature is " + shape_string(a_) + ", expected " +
                             std::to_string(m * n) + "x" + std::to_string(m * n));
    }
    if (b_.size() != m * n) {
        throw DimensionError("quadratic: linear term has length " + std::to_string(b_.size()) +
                             ", expected " + std::to_string(m * n));
    }
    if (w0.rows() != m || w0.cols() != n) {
        throw DimensionError("quadratic: start point is " + shape_string(w0) + ", expected " +
                             std::to_string(m) + "x" + std::to_string(n));
    }
    ensure_finite(a_, "quadratic curvature");
    params_.push_back({"w", std::move(w0)});
}

double QuadraticModel::loss(const Batch&) const {
    check_params_finite(params_);
    const std::vector<double> v = vec(params_[0].value);
    const std::vector<double> av = matvec(a_, v);
    double value = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) value += v[i] * (0.5 * av[i] - b_[i]);
    return finite_loss(value, "quadratic");
}

double QuadraticModel::loss_and_grads(const Batch& batch, std::vector<Matrix>& grads) const {
    check_params_finite(params_);
    const std::vector<double> v = vec(params_[0].value);
    std::vector<double> av = matvec(a_, v);
    double value = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) value += v[i] * (0.5 * av[i] - b_[i]);
    for (std::size_t i = 0; i < v.size(); ++i) av[i] -= b_[i];
    grads.assign(1, unvec(av, m_, n_));
    (void)batch;
    return finite_loss(value, "quadratic");
}

Batch QuadraticModel::sample_batch(Rng&) const { return Batch{}; }
Batch QuadraticModel::eval_batch() const { return Batch{}; }

double QuadraticModel::min_loss() const {
    double max_b = 0.0;
    for (double x : b_) max_b = std::max(max_b, std::abs(x));
    if (max_b == 0.0) return 0.0;
    const std::vector<double> w_star = matvec(mat_power_sym(a_, -1.0, 0.0), b_);
    double value = 0.0;
    for (std::size_t i = 0; i < b_.size(); ++i) value -= 0.5 * b_[i] * w_star[i];
    return value;
}

std::unique_ptr<QuadraticModel> make_quadratic(std::size_t m, std::size_t n, std::uint64_t seed,
                                               double cond, bool kron_structured) {
    if (m == 0 || n == 0 || !(cond >= 1.0)) {
        throw DimensionError("make_quadratic: need m, n >= 1 and cond >= 1");
    }
    Rng rng {Rng::derive(seed, 0x51)};
    Matrix a;
    if (kron_structured) {
        // Split the condition number evenly across the factors and rescale
        // so the largest eigenvalue of the curvature is exactly 1.
        const double factor_cond = std::sqrt(cond);
        const std::vector<double> l_eigs = logspace(1.0, factor_cond, m);
        const std::vector<double> r_eigs = logspace(1.0, factor_cond, n);
        const Matrix l = spd_with_eigenvalues(l_eigs, rng);
        const Matrix r = spd_with_eigenvalues(r_eigs, rng);
        double trace_l = 0.0;
        for (double x : l_eigs) trace_l += x;
        const double lambda_max = factor_cond * factor_cond / trace_l;
        a = kron(r, l) * (1.0 / (trace_l * lambda_max));
    } else {
        a = spd_with_eigenvalues(logspace(1.0 / cond, 1.0, m * n), rng);
    }

    Matrix w0 = gaussian_matrix(m, n, rng);
    QuadraticModel probe(a, std::vector<double>(m * n, 0.0), m, n, w0);
    const double raw_loss = probe.loss(Batch{});
    w0 *= std::sqrt(0.5 / raw_loss);  // start at loss exactly 0.5
    return std::make_unique<QuadraticModel>(std::move(a), std::vector<double>(m * n, 0.0), m, n,
                                            std::move(w0));
}

// ---------------------------------------------------------------------------
// Linear regression
// ---------------------------------------------------------------------------

namespace {

Batch draw_regression_batch(const Matrix& teacher, std::size_t rows, double noise, Rng& rng) {
    Batch batch;
    batch.inputs = gaussian_matrix(rows, teacher.rows(), rng);
    batch.targets = matmul(batch.inputs, teacher);
    for (std::size_t i = 0; i < batch.targets.size(); ++i) {
        batch.targets.data()[i] += noise * rng.normal();
    }
    return batch;
}

}  // namespace

LinearRegressionModel::LinearRegressionModel(std::size_t features, std::size_t outputs,
                                             std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size) {
    if (features == 0 || outputs == 0 || batch_size == 0) {
        throw DimensionError("linear_regression: dimensions and batch size must be >= 1");
    }
    Rng teacher_rng {Rng::derive(seed, 0x11)};
    teacher_ = gaussian_matrix(features, outputs, teacher_rng);
    Rng init_rng {Rng::derive(seed, 0x12)};
    Matrix w0 = gaussian_matrix(features, outputs, init_rng);
    w0 *= 0.1;
    params_.push_back({"w", std::move(w0)});
    Rng eval_rng {Rng::derive(seed, 0x13)};
    eval_ = draw_regression_batch(teacher_, 256, noise_, eval_rng);
}

double LinearRegressionModel::loss(const Batch& batch) const {
    check_params_finite(params_);
    require_numeric_batch(batch, teacher_.rows(), teacher_.cols(), "linear_regression");
    const Matrix resid = matmul(batch.inputs, params_[0].value) - batch.targets;
    const double fro = frobenius_norm(resid);
    return finite_loss(fro * fro / (2.0 * static_cast<double>(batch.inputs.rows())),
                       "linear_regression");
}

double LinearRegressionModel::loss_and_grads(const Batch& batch,
                                             std::vector<Matrix>& grads) const {
    check_params_finite(params_);
    require_numeric_batch(batch, teacher_.rows(), teacher_.cols(), "linear_regression");
    const double inv_rows = 1.0 / static_cast<double>(batch.inputs.rows());
    const Matrix resid = matmul(batch.inputs, params_[0].value) - batch.targets;
    grads.assign(1, matmul(transpose(batch.inputs), resid) * inv_rows);
    const double fro = frobenius_norm(resid);
    return finite_loss(fro * fro * 0.5 * inv_rows, "linear_regression");
}

Batch LinearRegressionModel::sample_batch(Rng& rng) const {
    return draw_regression_batch(teacher_, batch_size_, noise_, rng);
}

Batch LinearRegressionModel::eval_batch() const { return eval_; }

// ---------------------------------------------------------------------------
// Two-layer MLP
// ---------------------------------------------------------------------------

namespace {

// x * w + broadcast row bias (bias is a column vector).
Matrix affine(const Matrix& x, const Matrix& w, const Matrix& bias) {
    Matrix out = matmul(x, w);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias(c, 0);
    }
    return out;
}

Matrix tanh_elementwise(Matrix x) {
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = std::tanh(x.data()[i]);
    return x;
}

Matrix column_sums(const Matrix& x) {
    Matrix out(x.cols(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) out(c, 0) += x(r, c);
    }
    return out;
}

Matrix scaled_gaussian(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
    Matrix out = gaussian_matrix(rows, cols, rng);
    out *= scale;
    return out;
}

}  // namespace

Mlp2Model::Mlp2Model(std::uint64_t seed, std::size_t batch_size) : batch_size_(batch_size) {
    if (batch_size == 0) throw DimensionError("mlp2: batch size must be >= 1");
    Rng teacher_rng {Rng::derive(seed, 0x21)};
    tw1_ = scaled_gaussian(kIn, kHidden, 1.0 / std::sqrt(double(kIn)), teacher_rng);
    tb1_ = scaled_gaussian(kHidden, 1, 0.2, teacher_rng);
    tw2_ = scaled_gaussian(kHidden, kOut, 1.0 / std::sqrt(double(kHidden)), teacher_rng);
    tb2_ = scaled_gaussian(kOut, 1, 0.2, teacher_rng);

    Rng init_rng {Rng::derive(seed, 0x22)};
    params_.push_back({"w1", scaled_gaussian(kIn, kHidden, 0.5 / std::sqrt(double(kIn)), init_rng)});
    params_.push_back({"b1", Matrix(kHidden, 1)});
    params_.push_back(
        {"w2", scaled_gaussian(kHidden, kOut, 0.5 / std::sqrt(double(kHidden)), init_rng)});
    params_.push_back({"b2", Matrix(kOut, 1)});

    Rng eval_rng {Rng::derive(seed, 0x23)};
    eval_.inputs = gaussian_matrix(256, kIn, eval_rng);
    eval_.targets = teacher_forward(eval_.inputs);
}

Matrix Mlp2Model::teacher_forward(const Matrix& x) const {
    return affine(tanh_elementwise(affine(x, tw1_, tb1_)), tw2_, tb2_);
}

Matrix Mlp2Model::forward(const Matrix& x, Matrix* hidden) const {
    Matrix h = tanh_elementwise(affine(x, params_[0].value, params_[1].value));
    Matrix out = affine(h, params_[2].value, params_[3].value);
    if (hidden) *hidden = std::move(h);
    return out;
}

double Mlp2Model::loss(const Batch& batch) const {
    check_params_finite(params_);
    require_numeric_batch(batch, kIn, kOut, "mlp2");
    const Matrix resid = forward(batch.inputs, nullptr) - batch.targets;
    const double fro = frobenius_norm(resid);
    return finite_loss(fro * fro / (2.0 * static_cast<double>(batch.inputs.rows())), "mlp2");
}

double Mlp2Model::loss_and_grads(const Batch& batch, std::vector<Matrix>& grads) const {
    check_params_finite(params_);
    require_numeric_batch(batch, kIn, kOut, "mlp2");
    const double inv_rows = 1.0 / static_cast<double>(batch.inputs.rows());

    Matrix h;
    const Matrix out = forward(batch.inputs, &h);
    Matrix d_out = out - batch.targets;
    d_out *= inv_rows;

    Matrix d_hidden = matmul(d_out, transpose(params_[2].value));
    for (std::size_t i = 0; i < d_hidden.size(); ++i) {
        d_hidden.data()[i] *= 1.0 - h.data()[i] * h.data()[i];  // tanh'
    }

    grads.assign(4, Matrix(0, 0));
    grads[0] = matmul(transpose(batch.inputs), d_hidden);
    grads[1] = column_sums(d_hidden);
    grads[2] = matmul(transpose(h), d_out);
    grads[3] = column_sums(d_out);

    const Matrix resid = out - batch.targets;
    const double fro = frobenius_norm(resid);
    return finite_loss(fro * fro * 0.5 * inv_rows, "mlp2");
}

Batch Mlp2Model::sample_batch(Rng& rng) const {
    Batch batch;
    batch.inputs = gaussian_matrix(batch_size_, kIn, rng);
    batch.targets = teacher_forward(batch.inputs);
    return batch;
}

Batch Mlp2Model::eval_batch() const { return eval_; }

// ---------------------------------------------------------------------------
// Bigram language model
// ---------------------------------------------------------------------------

std::size_t bigram_symbol_id(char c) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (u >= 'a' && u < 'a' + kBigramVocab) return u - 'a';
    return kBigramVocab - 1;  // catch-all symbol
}

const Matrix& bigram_transition_table() {
    // Circulant-ish rows: transition weight decays exponentially with cyclic
    // distance, with a per-row temperature so rows have distinct entropies.
    static const Matrix table = [] {
        Matrix t(kBigramVocab, kBigramVocab);
        for (std::size_t i = 0; i < kBigramVocab; ++i) {
            const double temperature = 0.8 + 0.06 * static_cast<double>(i);
            double row_sum = 0.0;
            for (std::size_t j = 0; j < kBigramVocab; ++j) {
                const std::size_t forward = (j + kBigramVocab - i) % kBigramVocab;
                const double dist = std::min(forward, kBigramVocab - forward);
                t(i, j) = std::exp(-dist / temperature);
                row_sum += t(i, j);
            }
            for (std::size_t j = 0; j < kBigramVocab; ++j) t(i, j) /= row_sum;
        }
        return t;
    }();
    return table;
}

double bigram_entropy_floor() {
    static const double floor_nats = [] {
        const Matrix& table = bigram_transition_table();
        // Stationary distribution by power iteration (all entries positive,
        // so the chain is irreducible and this converges).
        std::vector<double> pi(kBigramVocab, 1.0 / kBigramVocab);
        for (int iter = 0; iter < 10000; ++iter) {
            std::vector<double> next(kBigramVocab, 0.0);
            for (std::size_t i = 0; i < kBigramVocab; ++i) {
                for (std::size_t j = 0; j < kBigramVocab; ++j) next[j] += pi[i] * table(i, j);
            }
            double delta = 0.0;
            for (std::size_t j = 0; j < kBigramVocab; ++j) delta += std::abs(next[j] - pi[j]);
            pi = std::move(next);
            if (delta < 1e-15) break;
        }
        double entropy = 0.0;
        for (std::size_t i = 0; i < kBigramVocab; ++i) {
            for (std::size_t j = 0; j < kBigramVocab; ++j) {
                entropy -= pi[i] * table(i, j) * std::log(table(i, j));
            }
        }
        return entropy;
    }();
    return floor_nats;
}

std::string make_bigram_corpus(std::uint64_t seed, std::size_t length) {
    if (length < 2) throw DimensionError("make_bigram_corpus: length must be >= 2");
    const Matrix& table = bigram_transition_table();
    Rng rng {Rng::derive(seed, 0x31)};
    std::string text(length, 'a');
    std::size_t state = 0;
    for (std::size_t t = 1; t < length; ++t) {
        const double u = rng.uniform01();
        double acc = 0.0;
        std::size_t next = kBigramVocab - 1;
        for (std::size_t j = 0; j < kBigramVocab; ++j) {
            acc += table(state, j);
            if (u < acc) {
                next = j;
                break;
            }
        }
        state = next;
        text[t] = static_cast<char>('a' + state);
    }
    return text;
}

BigramModel::BigramModel(const std::string& corpus, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size) {
    if (batch_size == 0) throw DimensionError("bigram_lm: batch size must be >= 1");
    ids_.reserve(corpus.size());
    for (char c : corpus) ids_.push_back(static_cast<std::uint8_t>(bigram_symbol_id(c)));

    // 90/10 split by position; a transition belongs to a side only if both
    // its characters do, so the train/val boundary pair is dropped.
    const std::size_t split = corpus.size() * 9 / 10;
    train_count_ = split >= 2 ? split - 1 : 0;
    for (std::size_t p = split; p + 1 < ids_.size(); ++p) {
        eval_.class_inputs.push_back(ids_[p]);
        eval_.class_targets.push_back(ids_[p + 1]);
    }
    if (train_count_ == 0 || eval_.class_inputs.empty()) {
        throw DimensionError("bigram_lm: corpus of length " + std::to_string(corpus.size()) +
                             " is too short for a 90/10 split");
    }
    (void)seed;  // reserved for future init schemes; logits start uniform
    params_.push_back({"logits", Matrix(kBigramVocab, kBigramVocab)});
}

namespace {

// Cross-entropy and optional gradient of a logit table over id pairs.
double bigram_ce(const Matrix& logits, const Batch& batch, Matrix* grad) {
    const double inv_count = 1.0 / static_cast<double>(batch.class_inputs.size());
    double total = 0.0;
    double probs[kBigramVocab];
    for (std::size_t k = 0; k < batch.class_inputs.size(); ++k) {
        const std::size_t ctx = batch.class_inputs[k];
        const std::size_t target = batch.class_targets[k];
        double z_max = logits(ctx, 0);
        for (std::size_t j = 1; j < kBigramVocab; ++j) z_max = std::max(z_max, logits(ctx, j));
        double sum_exp = 0.0;
        for (std::size_t j = 0; j < kBigramVocab; ++j) {
            probs[j] = std::exp(logits(ctx, j) - z_max);
            sum_exp += probs[j];
        }
        total += z_max + std::log(sum_exp) - logits(ctx, target);
        if (grad) {
            for (std::size_t j = 0; j < kBigramVocab; ++j) {
                (*grad)(ctx, j) += probs[j] / sum_exp * inv_count;
            }
            (*grad)(ctx, target) -= inv_count;
        }
    }
    return total * inv_count;
}

}  // namespace

double BigramModel::loss(const Batch& batch) const {
    check_params_finite(params_);
    require_class_batch(batch, "bigram_lm");
    return finite_loss(bigram_ce(params_[0].value, batch, nullptr), "bigram_lm");
}

double BigramModel::loss_and_grads(const Batch& batch, std::vector<Matrix>& grads) const {
    check_params_finite(params_);
    require_class_batch(batch, "bigram_lm");
    grads.assign(1, Matrix(kBigramVocab, kBigramVocab));
    return finite_loss(bigram_ce(params_[0].value, batch, &grads[0]), "bigram_lm");
}

Batch BigramModel::sample_batch(Rng& rng) const {
    Batch batch;
    batch.class_inputs.reserve(batch_size_);
    batch.class_targets.reserve(batch_size_);
    for (std::size_t k = 0; k < batch_size_; ++k) {
        const std::size_t p = static_cast<std::size_t>(rng.below(train_count_));
        batch.class_inputs.push_back(ids_[p]);
        batch.class_targets.push_back(ids_[p + 1]);
    }
    return batch;
}

Batch BigramModel::eval_batch() const { return eval_; }

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

double finite_diff_check(Model& model, const Batch& batch, double h, Rng& rng) {
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw DimensionError("finite_diff_check: h must be positive and finite");
    }
    std::vector<Matrix> grads;
    model.loss_and_grads(batch, grads);

    double worst = 0.0;
    for (std::size_t p = 0; p < model.params().size(); ++p) {
        Matrix& value = model.params()[p].value;
        const std::size_t probes = std::min<std::size_t>(25, value.size());
        for (std::size_t t = 0; t < probes; ++t) {
            const std::size_t idx = static_cast<std::size_t>(rng.below(value.size()));
            const double saved = value.data()[idx];
            value.data()[idx] = saved + h;
            const double up = model.loss(batch);
            value.data()[idx] = saved - h;
            const double down = model.loss(batch);
            value.data()[idx] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double analytic = grads[p].data()[idx];
            const double scale = std::max({1.0, std::abs(fd), std::abs(analytic)});
            worst = std::max(worst, std::abs(fd - analytic) / scale);
        }
    }
    return worst;
}

}  // namespace whitenopt
