#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "whitenopt/matrix.hpp"
#include "whitenopt/rng.hpp"

namespace whitenopt {

class Rng;

// Eigendecomposition of a symmetric matrix. Column i of `vectors` pairs with
// `values[i]`. Values are sorted descending and the largest-magnitude entry
// of each eigenvector is made positive, so identical inputs always produce
// identical output bits.
struct EigResult {
    std::vector<double> values;
    Matrix vectors;
};

// Cyclic Jacobi rotations. Requires a square matrix that is symmetric up to
// 1e-8 relative asymmetry (it is symmetrized internally before iterating).
// Converges when the off-diagonal Frobenius norm drops below 1e-12 * ||a||;
// throws NumericalError if that has not happened after 100 sweeps.
EigResult eig_sym(const Matrix& a);

// q * diag(values[i]^p) * q^T. Integer p >= 0 powers the signed eigenvalues
// directly. For negative or fractional p the input must be PSD up to
// roundoff (min eigenvalue >= -1e-8 * ||a||). A positive ridge acts as a
// spectral floor: eigenvalues below it are clamped to the ridge before
// powering (regularizer semantics); ridge < 0 selects the default
// 1e-10 * trace(a) / dim. Eigenvalues that remain below the numerical-rank
// cutoff 1e-12 * lambda_max after flooring are treated as exact zeros and
// contribute nothing (pseudo-inverse convention): such directions carry
// only rounding noise from products like G*G^T, and powering them would
// amplify that noise by enormous factors.
Matrix mat_power_sym(const Matrix& a, double p, double ridge = -1.0);

// Shared powering core. If floor_value is set, eigenvalues below it are
// clamped before powering; if zero_cutoff > 0, floored eigenvalues still
// below the cutoff contribute zero instead of being powered.
Matrix power_from_eig(const EigResult& eig, double p, std::optional<double> floor_value,
                      double zero_cutoff = 0.0);

// Haar-ish random orthogonal matrix (QR of a Gaussian matrix with the R
// diagonal sign fixed).
Matrix random_orthogonal(std::size_t dim, Rng& rng);

// Random SPD matrix q * diag(lambda) * q^T with eigenvalues drawn
// log-uniformly from [1, condition_number], so the eigenvalue ratio never
// exceeds condition_number. Requires condition_number >= 1.
Matrix sample_spd(std::size_t dim, std::uint64_t seed, double condition_number);
Matrix sample_spd(std::size_t dim, Rng& rng, double condition_number);

// SPD matrix with exactly the given (positive) eigenvalues in a random
// orthogonal basis; used where tests need a pinned spectrum.
Matrix spd_with_eigenvalues(std::span<const double> values, Rng& rng);

// Rectangular matrix u * diag(values) * v^T with random orthogonal u, v and
// exactly the given (non-negative) singular values; values.size() must be
// min(rows, cols). Used where tests need full-rank matrices with a bounded
// condition number.
Matrix matrix_with_singular_values(std::span<const double> values, std::size_t rows,
                                   std::size_t cols, Rng& rng);

}  // namespace whitenopt
