#pragma once

// Analytic gradient distributions and idealized optimizer directions.
//
// A GradientDistribution fixes the covariance Sigma of vec(G) for a random
// m x n gradient matrix G. The "idealized" directions replace every running
// second-moment estimate with its exact expectation under that distribution,
// which makes the following algebraic facts testable numerically:
//
//   * full whitening:      d = -Sigma^{-1/2} vec(G)
//   * idealized Shampoo:   d = -((R kron L)/trace(L))^{-1/2} vec(G),
//                          computed via the factored powers L^{-1/2}, R^{-1/2}
//   * idealized SOAP:      rotate into the factor eigenbasis, divide by the
//                          exact diagonal second moment, rotate back
//   * idealized Adam:      d = -diag(Sigma)^{-1/2} vec(G) elementwise
//
// When Sigma = (R kron L)/trace(L), the Shampoo and SOAP directions coincide
// with full whitening; Adam only coincides when Sigma is diagonal.

#include <cstdint>
#include <optional>
#include <vector>

#include "whitenopt/eig.hpp"
#include "whitenopt/matrix.hpp"
#include "whitenopt/rng.hpp"

namespace whitenopt {

// Covariance model for vec(G), with optional Kronecker factors. Use the
// make_* functions below; they validate and populate the cached
// decompositions that the direction functions rely on.
struct GradientDistribution {
    std::size_t m = 0;  // gradient rows
    std::size_t n = 0;  // gradient cols
    Matrix sigma;       // mn x mn SPD covariance of vec(G)

    // Present iff sigma was built as (R kron L)/trace(L).
    std::optional<Matrix> factor_l;  // m x m
    std::optional<Matrix> factor_r;  // n x n

    // Cached decompositions (filled by the constructors).
    Matrix sigma_root;      // Sigma^{1/2}
    Matrix sigma_inv_root;  // Sigma^{-1/2}
    std::optional<EigResult> eig_l;  // eig of factor_l
    std::optional<EigResult> eig_r;  // eig of factor_r

    bool has_factors() const { return factor_l.has_value() && factor_r.has_value(); }
};

// Monte-Carlo summary of how well whitening and the Kronecker covariance
// reconstruction behave on a distribution. All errors are >= 0.
struct WhiteningReport {
    // Frobenius distance of the whitened empirical covariance from I,
    // divided by the entry count mn*mn (a per-entry scale), and the largest
    // single-entry deviation.
    double empirical_cov_error = 0.0;
    double empirical_cov_max_abs = 0.0;
    // Relative Frobenius gap between the trace-normalized Kronecker
    // reconstruction (E[G^T G] kron E[G G^T])/trace(E[G G^T]) and the
    // trace-normalized dense covariance estimate; the overall scale is
    // reported separately as scale_ratio = trace(kron est)/trace(dense est).
    double kron_approx_error = 0.0;
    double scale_ratio = 0.0;
    std::uint64_t sample_count = 0;
};

// Sigma = (R kron L)/trace(L) with factors stored. L, R must be SPD.
GradientDistribution make_kron_distribution(const Matrix& l, const Matrix& r);

// Dense SPD covariance for an m x n gradient; no factors.
GradientDistribution make_dense_distribution(const Matrix& sigma, std::size_t m, std::size_t n);

// Draw G = unvec(Sigma^{1/2} z) with z standard normal from rng.
Matrix sample_gradient(const GradientDistribution& dist, Rng& rng);

// Sigma^{-1/2} g for a vectorized gradient of length mn.
std::vector<double> whiten(const GradientDistribution& dist, const std::vector<double>& g);

// One full-matrix whitening step: param - eta * unvec(Sigma^{-1/2} vec(grad)).
Matrix full_whitening_step(const Matrix& param, const Matrix& grad,
                           const GradientDistribution& dist, double eta);

// The idealized directions described at the top of the file. The Shampoo and
// SOAP variants require factors and never materialize the mn x mn root.
std::vector<double> idealized_shampoo_direction(const GradientDistribution& dist,
                                                const std::vector<double>& g);
std::vector<double> idealized_soap_direction(const GradientDistribution& dist,
                                             const std::vector<double>& g);
std::vector<double> idealized_adam_direction(const GradientDistribution& dist,
                                             const std::vector<double>& g);

// Monte-Carlo check of the Kronecker covariance reconstruction and of
// whitening, over sample_count >= 2 draws seeded by seed.
WhiteningReport kron_approx_error(const GradientDistribution& dist, std::uint64_t sample_count,
                                  std::uint64_t seed);

}  // namespace whitenopt
