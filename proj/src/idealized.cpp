#include "whitenopt/idealized.hpp"

#include <cmath>
#include <string>

#include "whitenopt/errors.hpp"

namespace whitenopt {

namespace {

// Eigendecomposition that insists on strictly positive eigenvalues.
EigResult spd_eig(const Matrix& a, const char* what) {
    EigResult eig = eig_sym(a);
    if (eig.values.empty() || eig.values.back() <= 0.0) {
        throw NumericalError(std::string(what) + " must be positive definite (min eigenvalue " +
                             std::to_string(eig.values.empty() ? 0.0 : eig.values.back()) + ")");
    }
    return eig;
}

void require_factors(const GradientDistribution& dist, const char* what) {
    if (!dist.has_factors()) {
        throw DimensionError(std::string(what) + " requires a Kronecker-factored distribution");
    }
}

void require_vec_length(const GradientDistribution& dist, const std::vector<double>& g,
                        const char* what) {
    if (g.size() != dist.m * dist.n) {
        throw DimensionError(std::string(what) + ": gradient vector has length " +
                             std::to_string(g.size()) + ", expected " +
                             std::to_string(dist.m * dist.n));
    }
}

}  // namespace

GradientDistribution make_kron_distribution(const Matrix& l, const Matrix& r) {
    GradientDistribution dist;
    dist.m = l.rows();
    dist.n = r.rows();
    dist.eig_l = spd_eig(l, "make_kron_distribution: L");
    dist.eig_r = spd_eig(r, "make_kron_distribution: R");
    dist.factor_l = l;
    dist.factor_r = r;

    const double trace_l = trace(l);
    dist.sigma = kron(r, l) * (1.0 / trace_l);

    // Sigma^{+-1/2} from the factor decompositions, using
    // (R kron L)^p = R^p kron L^p and the trace as a plain scalar.
    const Matrix l_root = power_from_eig(*dist.eig_l, 0.5, std::nullopt);
    const Matrix r_root = power_from_eig(*dist.eig_r, 0.5, std::nullopt);
    dist.sigma_root = kron(r_root, l_root) * (1.0 / std::sqrt(trace_l));
    const Matrix l_inv_root = power_from_eig(*dist.eig_l, -0.5, std::nullopt);
    const Matrix r_inv_root = power_from_eig(*dist.eig_r, -0.5, std::nullopt);
    dist.sigma_inv_root = kron(r_inv_root, l_inv_root) * std::sqrt(trace_l);
    return dist;
}

GradientDistribution make_dense_distribution(const Matrix& sigma, std::size_t m, std::size_t n) {
    if (sigma.rows() != m * n || sigma.cols() != m * n) {
        throw DimensionError("make_dense_distribution: sigma is " + shape_string(sigma) +
                             " but m*n = " + std::to_string(m * n));
    }
    GradientDistribution dist;
    dist.m = m;
    dist.n = n;
    dist.sigma = symmetrized(sigma);
    const EigResult eig = spd_eig(dist.sigma, "make_dense_distribution: sigma");
    dist.sigma_root = power_from_eig(eig, 0.5, std::nullopt);
    dist.sigma_inv_root = power_from_eig(eig, -0.5, std::nullopt);
    return dist;
}

Matrix sample_gradient(const GradientDistribution& dist, Rng& rng) {
    std::vector<double> z(dist.m * dist.n);
    for (double& x : z) x = rng.normal();
    return unvec(matvec(dist.sigma_root, z), dist.m, dist.n);
}

std::vector<double> whiten(const GradientDistribution& dist, const std::vector<double>& g) {
    require_vec_length(dist, g, "whiten");
    return matvec(dist.sigma_inv_root, g);
}

Matrix full_whitening_step(const Matrix& param, const Matrix& grad,
                           const GradientDistribution& dist, double eta) {
    if (param.rows() != dist.m || param.cols() != dist.n || !param.same_shape(grad)) {
        throw DimensionError("full_whitening_step: param " + shape_string(param) + ", grad " +
                             shape_string(grad) + " do not match distribution " +
                             std::to_string(dist.m) + "x" + std::to_string(dist.n));
    }
    // whiten() works on column-stacked vectors, so reshape before mixing
    // with the row-major parameter storage.
    const Matrix whitened = unvec(whiten(dist, vec(grad)), dist.m, dist.n);
    Matrix out = param;
    out -= whitened * eta;
    return out;
}

std::vector<double> idealized_shampoo_direction(const GradientDistribution& dist,
                                                const std::vector<double>& g) {
    require_factors(dist, "idealized_shampoo_direction");
    require_vec_length(dist, g, "idealized_shampoo_direction");
    // -((R kron L)/trace(L))^{-1/2} g
    //   = -sqrt(trace(L)) * vec(L^{-1/2} G R^{-1/2})
    const Matrix l_inv_root = power_from_eig(*dist.eig_l, -0.5, std::nullopt);
    const Matrix r_inv_root = power_from_eig(*dist.eig_r, -0.5, std::nullopt);
    const Matrix grad = unvec(g, dist.m, dist.n);
    std::vector<double> out = vec(matmul(matmul(l_inv_root, grad), r_inv_root));
    const double scale = -std::sqrt(trace(*dist.factor_l));
    for (double& x : out) x *= scale;
    return out;
}

std::vector<double> idealized_soap_direction(const GradientDistribution& dist,
                                             const std::vector<double>& g) {
    require_factors(dist, "idealized_soap_direction");
    require_vec_length(dist, g, "idealized_soap_direction");
    // Rotate into the factor eigenbasis: g' = vec(Q_L^T G Q_R). There the
    // covariance of the rotated gradient is exactly the diagonal
    // (Lambda_R kron Lambda_L)/trace(L), so the idealized inner step divides
    // elementwise by its square root; then rotate back.
    const Matrix& q_l = dist.eig_l->vectors;
    const Matrix& q_r = dist.eig_r->vectors;
    const Matrix rotated = matmul(matmul(transpose(q_l), unvec(g, dist.m, dist.n)), q_r);
    const double trace_l = trace(*dist.factor_l);
    Matrix scaled(dist.m, dist.n);
    for (std::size_t i = 0; i < dist.m; ++i) {
        for (std::size_t j = 0; j < dist.n; ++j) {
            const double second_moment = dist.eig_r->values[j] * dist.eig_l->values[i] / trace_l;
            scaled(i, j) = -rotated(i, j) / std::sqrt(second_moment);
        }
    }
    return vec(matmul(matmul(q_l, scaled), transpose(q_r)));
}

std::vector<double> idealized_adam_direction(const GradientDistribution& dist,
                                             const std::vector<double>& g) {
    require_vec_length(dist, g, "idealized_adam_direction");
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        out[i] = -g[i] / std::sqrt(dist.sigma(i, i));
    }
    return out;
}

WhiteningReport kron_approx_error(const GradientDistribution& dist, std::uint64_t sample_count,
                                  std::uint64_t seed) {
    if (sample_count < 2) {
        throw DimensionError("kron_approx_error: sample_count must be >= 2");
    }
    Rng rng(seed);
    const std::size_t mn = dist.m * dist.n;
    Matrix e_ggt(dist.m, dist.m);   // E[G G^T]
    Matrix e_gtg(dist.n, dist.n);   // E[G^T G]
    Matrix dense_cov(mn, mn);       // E[vec(G) vec(G)^T]
    Matrix whitened_cov(mn, mn);    // E[g' g'^T] for whitened g'

    for (std::uint64_t s = 0; s < sample_count; ++s) {
        const Matrix grad = sample_gradient(dist, rng);
        e_ggt += matmul(grad, transpose(grad));
        e_gtg += matmul(transpose(grad), grad);
        const std::vector<double> v = vec(grad);
        const std::vector<double> w = whiten(dist, v);
        for (std::size_t i = 0; i < mn; ++i) {
            for (std::size_t j = 0; j < mn; ++j) {
                dense_cov(i, j) += v[i] * v[j];
                whitened_cov(i, j) += w[i] * w[j];
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(sample_count);
    e_ggt *= inv_n;
    e_gtg *= inv_n;
    dense_cov *= inv_n;
    whitened_cov *= inv_n;

    WhiteningReport report;
    report.sample_count = sample_count;

    const Matrix identity = Matrix::identity(mn);
    const Matrix cov_err = whitened_cov - identity;
    report.empirical_cov_error = frobenius_norm(cov_err) / static_cast<double>(mn * mn);
    report.empirical_cov_max_abs = max_abs(cov_err);

    // Trace-normalized shapes compare the structure; the overall scale is a
    // separate ratio (exactly 1 in expectation for Kronecker distributions).
    const Matrix kron_est = kron(e_gtg, e_ggt) * (1.0 / trace(e_ggt));
    const double tr_kron = trace(kron_est);
    const double tr_dense = trace(dense_cov);
    const Matrix kron_shape = kron_est * (1.0 / tr_kron);
    const Matrix dense_shape = dense_cov * (1.0 / tr_dense);
    report.kron_approx_error =
        frobenius_norm(kron_shape - dense_shape) / frobenius_norm(dense_shape);
    report.scale_ratio = tr_kron / tr_dense;
    return report;
}

}  // namespace whitenopt
