#include "whitenopt/eig.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "whitenopt/errors.hpp"

namespace whitenopt {

namespace {

double offdiag_norm(const Matrix& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            if (i != j) acc += a(i, j) * a(i, j);
        }
    }
    return std::sqrt(acc);
}

// One Jacobi rotation zeroing a(p, q), accumulating the rotation into v.
void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
    const double apq = a(p, q);
    if (apq == 0.0) return;
    const double app = a(p, p);
    const double aqq = a(q, q);
    const double theta = (aqq - app) / (2.0 * apq);
    double t;
    if (std::abs(theta) > 1e150) {
        t = 1.0 / (2.0 * theta);  // avoid overflow in theta * theta
    } else {
        t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
    }
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;
    const double tau = s / (1.0 + c);

    a(p, p) = app - t * apq;
    a(q, q) = aqq + t * apq;
    a(p, q) = 0.0;
    a(q, p) = 0.0;
    const std::size_t n = a.rows();
    for (std::size_t r = 0; r < n; ++r) {
        if (r == p || r == q) continue;
        const double arp = a(r, p);
        const double arq = a(r, q);
        a(r, p) = arp - s * (arq + tau * arp);
        a(p, r) = a(r, p);
        a(r, q) = arq + s * (arp - tau * arq);
        a(q, r) = a(r, q);
    }
    for (std::size_t r = 0; r < n; ++r) {
        const double vrp = v(r, p);
        const double vrq = v(r, q);
        v(r, p) = vrp - s * (vrq + tau * vrp);
        v(r, q) = vrq + s * (vrp - tau * vrq);
    }
}

}  // namespace

EigResult eig_sym(const Matrix& input) {
    if (input.rows() != input.cols()) {
        throw DimensionError("eig_sym: matrix must be square, got " + shape_string(input));
    }
    ensure_finite(input, "eig_sym input");
    const std::size_t n = input.rows();
    const double fro = frobenius_norm(input);
    const double asym = frobenius_norm(input - transpose(input));
    if (asym > 1e-8 * fro) {
        throw NumericalError("eig_sym: matrix is not symmetric (||a - a^T|| = " +
                             std::to_string(asym) + ", ||a|| = " + std::to_string(fro) + ")");
    }

    Matrix a = symmetrized(input);
    Matrix v = Matrix::identity(n);
    const double off_tol = 1e-12 * fro;
    constexpr int kMaxSweeps = 100;
    int sweep = 0;
    // Fixed cyclic order (row by row) keeps the iteration fully deterministic.
    while (offdiag_norm(a) > off_tol) {
        if (sweep++ == kMaxSweeps) {
            throw NumericalError("eig_sym: no convergence after " + std::to_string(kMaxSweeps) +
                                 " sweeps, off-diagonal residual " +
                                 std::to_string(offdiag_norm(a)));
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) rotate(a, v, p, q);
        }
    }
    // One polish sweep past the threshold: convergence is quadratic at this
    // point, so the leftover off-diagonal mass drops to roundoff level and
    // small eigenvalues of ill-conditioned matrices come out with absolute
    // error ~eps*||a|| instead of ~tol*||a||.
    for (std::size_t p = 0; p + 1 < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) rotate(a, v, p, q);
    }

    // Sort descending; ties keep the Jacobi output order.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    EigResult out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.values[k] = a(src, src);
        // Sign convention: first entry of largest magnitude is positive.
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double mag = std::abs(v(r, src));
            if (mag > best) {
                best = mag;
                arg = r;
            }
        }
        const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = sign * v(r, src);
    }
    ensure_finite(out.vectors, "eig_sym eigenvectors");
    ensure_finite(out.values, "eig_sym eigenvalues");
    return out;
}

Matrix power_from_eig(const EigResult& eig, double p, std::optional<double> floor_value,
                      double zero_cutoff) {
    const std::size_t n = eig.values.size();
    std::vector<double> powered(n);
    for (std::size_t i = 0; i < n; ++i) {
        double lam = eig.values[i];
        if (floor_value && lam < *floor_value) lam = *floor_value;
        if (zero_cutoff > 0.0 && lam < zero_cutoff) {
            powered[i] = 0.0;  // numerically zero direction: drop, don't amplify
        } else {
            powered[i] = std::pow(lam, p);
        }
    }
    // q * diag(powered) * q^T
    Matrix scaled = eig.vectors;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scaled(i, j) *= powered[j];
    Matrix out = matmul(scaled, transpose(eig.vectors));
    ensure_finite(out, "power_from_eig result");
    return out;
}

Matrix mat_power_sym(const Matrix& a, double p, double ridge) {
    const EigResult eig = eig_sym(a);  // also validates shape and symmetry
    const bool integral = std::isfinite(p) && p == std::floor(p);
    if (integral && p >= 0.0) {
        return power_from_eig(eig, p, std::nullopt);
    }

    const double fro = frobenius_norm(a);
    const double lambda_min = eig.values.back();
    if (lambda_min < -1e-8 * fro) {
        throw NumericalError("mat_power_sym: matrix is not PSD (min eigenvalue " +
                             std::to_string(lambda_min) + ") for power " + std::to_string(p));
    }
    double eps = ridge;
    if (eps < 0.0) eps = 1e-10 * trace(a) / static_cast<double>(a.rows());
    if (eps < 0.0) eps = 0.0;  // trace can round slightly negative for near-zero input
    const double lambda_max = std::max(eig.values.front(), 0.0);
    if (p < 0.0 && eps <= 0.0 && lambda_max <= 0.0) {
        throw NumericalError(
            "mat_power_sym: matrix is singular to working precision and no ridge was supplied");
    }
    // A positive ridge is a spectral floor; whatever stays below the
    // numerical-rank cutoff afterwards is treated as an exact zero. The
    // floor is never below 0 so roundoff-negative eigenvalues cannot reach
    // pow() with a fractional exponent.
    const double cutoff = 1e-12 * lambda_max;
    return power_from_eig(eig, p, std::max(eps, 0.0), cutoff);
}

Matrix random_orthogonal(std::size_t dim, Rng& rng) {
    // Householder QR of a Gaussian matrix; fixing the sign of the R diagonal
    // makes the distribution Haar and the output independent of QR details.
    Matrix g = gaussian_matrix(dim, dim, rng);
    std::vector<std::vector<double>> reflectors;
    std::vector<double> diag_sign(dim, 1.0);
    for (std::size_t k = 0; k < dim; ++k) {
        std::vector<double> v(dim - k);
        double norm2 = 0.0;
        for (std::size_t i = k; i < dim; ++i) {
            v[i - k] = g(i, k);
            norm2 += g(i, k) * g(i, k);
        }
        const double norm = std::sqrt(norm2);
        if (norm == 0.0) continue;
        const double alpha = v[0] >= 0.0 ? -norm : norm;
        v[0] -= alpha;  // |v[0]| grows by norm, so v^T v > 0 here
        double vtv = 0.0;
        for (double x : v) vtv += x * x;
        const double beta = 2.0 / vtv;
        for (std::size_t j = k; j < dim; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < dim; ++i) dot += v[i - k] * g(i, j);
            dot *= beta;
            for (std::size_t i = k; i < dim; ++i) g(i, j) -= dot * v[i - k];
        }
        diag_sign[k] = g(k, k) >= 0.0 ? 1.0 : -1.0;
        reflectors.push_back(std::move(v));  // offset k is recovered from the length
    }

    Matrix q = Matrix::identity(dim);
    // Apply reflectors in reverse to assemble Q = H_0 H_1 ... H_{m-1}.
    for (std::size_t idx = reflectors.size(); idx-- > 0;) {
        const auto& v = reflectors[idx];
        const std::size_t k = dim - v.size();
        double vtv = 0.0;
        for (double x : v) vtv += x * x;
        const double beta = 2.0 / vtv;
        for (std::size_t j = 0; j < dim; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < dim; ++i) dot += v[i - k] * q(i, j);
            dot *= beta;
            for (std::size_t i = k; i < dim; ++i) q(i, j) -= dot * v[i - k];
        }
    }
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < dim; ++i) q(i, j) *= diag_sign[j];
    }
    ensure_finite(q, "random_orthogonal result");
    return q;
}

Matrix spd_with_eigenvalues(std::span<const double> values, Rng& rng) {
    for (double x : values) {
        if (!(x > 0.0) || !std::isfinite(x)) {
            throw NumericalError("spd_with_eigenvalues: eigenvalues must be positive and finite");
        }
    }
    const std::size_t n = values.size();
    const Matrix q = random_orthogonal(n, rng);
    Matrix scaled = q;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) scaled(i, j) *= values[j];
    return matmul(scaled, transpose(q));
}

Matrix matrix_with_singular_values(std::span<const double> values, std::size_t rows,
                                   std::size_t cols, Rng& rng) {
    const std::size_t k = std::min(rows, cols);
    if (values.size() != k) {
        throw DimensionError("matrix_with_singular_values: expected " + std::to_string(k) +
                             " singular values, got " + std::to_string(values.size()));
    }
    for (double x : values) {
        if (!(x >= 0.0) || !std::isfinite(x)) {
            throw NumericalError(
                "matrix_with_singular_values: singular values must be non-negative and finite");
        }
    }
    const Matrix u = random_orthogonal(rows, rng);
    const Matrix v = random_orthogonal(cols, rng);
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            double sum = 0.0;
            for (std::size_t p = 0; p < k; ++p) sum += u(i, p) * values[p] * v(j, p);
            out(i, j) = sum;
        }
    }
    return out;
}

Matrix sample_spd(std::size_t dim, Rng& rng, double condition_number) {
    if (!(condition_number >= 1.0)) {
        throw DimensionError("sample_spd: condition_number must be >= 1, got " +
                             std::to_string(condition_number));
    }
    const Matrix q = random_orthogonal(dim, rng);
    const double log_cond = std::log(condition_number);
    std::vector<double> lam(dim);
    for (double& x : lam) x = std::exp(rng.uniform01() * log_cond);  // log-uniform in [1, cond]
    Matrix scaled = q;
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) scaled(i, j) *= lam[j];
    Matrix out = matmul(scaled, transpose(q));
    ensure_finite(out, "sample_spd result");
    return out;
}

Matrix sample_spd(std::size_t dim, std::uint64_t seed, double condition_number) {
    Rng rng(seed);
    return sample_spd(dim, rng, condition_number);
}

}  // namespace whitenopt
