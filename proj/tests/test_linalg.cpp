#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support.hpp"
#include "whitenopt/eig.hpp"
#include "whitenopt/errors.hpp"
#include "whitenopt/matrix.hpp"
#include "whitenopt/rng.hpp"

using namespace whitenopt;
namespace ts = testsupport;

TEST_CASE("matrix construction and element access") {
    Matrix z(2, 3);
    CHECK(z.rows() == 2);
    CHECK(z.cols() == 3);
    for (double x : z.data()) CHECK(x == 0.0);

    Matrix m = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    CHECK(m(0, 1) == 2.0);
    CHECK(m(1, 0) == 3.0);
    // Row-major layout is part of the checkpoint contract.
    CHECK(m.data() == std::vector<double>{1.0, 2.0, 3.0, 4.0});

    CHECK(Matrix::identity(3)(1, 1) == 1.0);
    CHECK(Matrix::identity(3)(0, 1) == 0.0);

    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1.0}), DimensionError);
    CHECK_THROWS_AS(Matrix::from_rows({{1.0, 2.0}, {3.0}}), DimensionError);
}

TEST_CASE("matmul matches hand example and triple-loop oracle") {
    const Matrix a = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    const Matrix b = Matrix::from_rows({{5.0, 6.0}, {7.0, 8.0}});
    const Matrix expected = Matrix::from_rows({{19.0, 22.0}, {43.0, 50.0}});
    CHECK(ts::max_abs_diff(matmul(a, b), expected) == 0.0);

    Rng rng(11);
    const Matrix x = ts::random_matrix(4, 3, rng);
    const Matrix y = ts::random_matrix(3, 5, rng);
    CHECK(ts::max_abs_diff(matmul(x, y), ts::matmul_oracle(x, y)) <= 1e-14);

    const Matrix i4 = Matrix::identity(4);
    CHECK(matmul(i4, x) == x);

    CHECK_THROWS_AS(matmul(x, x), DimensionError);
}

TEST_CASE("matvec, hadamard, transpose, trace, norms") {
    const Matrix a = Matrix::from_rows({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
    const std::vector<double> x{1.0, -1.0, 2.0};
    const std::vector<double> got = matvec(a, x);
    CHECK(got == std::vector<double>{5.0, 11.0});
    CHECK_THROWS_AS(matvec(a, std::vector<double>{1.0}), DimensionError);

    CHECK(transpose(a)(2, 1) == 6.0);
    CHECK(transpose(transpose(a)) == a);

    CHECK(trace(Matrix::identity(3)) == 3.0);
    CHECK_THROWS_AS(trace(a), DimensionError);

    CHECK(frobenius_norm(Matrix::identity(2)) == doctest::Approx(std::sqrt(2.0)));
    CHECK(max_abs(a) == 6.0);

    const Matrix h = hadamard(a, a);
    CHECK(h(1, 2) == 36.0);
    CHECK_THROWS_AS(hadamard(a, transpose(a)), DimensionError);
}

TEST_CASE("kron matches frozen example and block oracle") {
    const Matrix a = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    const Matrix b = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
    const Matrix expected = Matrix::from_rows({{0.0, 1.0, 0.0, 2.0},
                                               {1.0, 0.0, 2.0, 0.0},
                                               {0.0, 3.0, 0.0, 4.0},
                                               {3.0, 0.0, 4.0, 0.0}});
    CHECK(kron(a, b) == expected);

    CHECK(kron(Matrix::identity(2), Matrix::identity(3)) == Matrix::identity(6));

    Rng rng(7);
    const Matrix x = ts::random_matrix(3, 2, rng);
    const Matrix y = ts::random_matrix(2, 4, rng);
    CHECK(ts::max_abs_diff(kron(x, y), ts::kron_oracle(x, y)) == 0.0);
}

TEST_CASE("vec is column-stacking and unvec inverts it") {
    const Matrix g = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    CHECK(vec(g) == std::vector<double>{1.0, 3.0, 2.0, 4.0});

    Rng rng(3);
    const Matrix m = ts::random_matrix(4, 3, rng);
    CHECK(unvec(vec(m), 4, 3) == m);

    CHECK_THROWS_AS(unvec(std::vector<double>{1.0, 2.0}, 2, 2), DimensionError);
}

TEST_CASE("kron-vec identity holds to 1e-12 relative over random triples") {
    Rng rng(2024);
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
        const std::size_t m = 1 + rng.below(6);
        const std::size_t n = 1 + rng.below(6);
        const Matrix a = ts::random_matrix(n, n, rng);
        const Matrix b = ts::random_matrix(m, m, rng);
        const Matrix g = ts::random_matrix(m, n, rng);
        const std::vector<double> lhs = matvec(kron(a, b), vec(g));
        const std::vector<double> rhs = vec(matmul(matmul(b, g), transpose(a)));
        const double err = ts::max_abs_diff(lhs, rhs);
        worst = std::max(worst, err / std::max(frobenius_norm(g), 1e-300));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("eig_sym frozen 2x2 against characteristic polynomial") {
    // Eigenvalues of [[2,1],[1,2]] are 3 and 1 with eigenvectors
    // (1,1)/sqrt(2) and (1,-1)/sqrt(2).
    const Matrix a = Matrix::from_rows({{2.0, 1.0}, {1.0, 2.0}});
    const EigResult eig = eig_sym(a);
    const auto expected = ts::eig2_values(2.0, 1.0, 2.0);
    CHECK(eig.values[0] == doctest::Approx(expected[0]).epsilon(1e-12));
    CHECK(eig.values[1] == doctest::Approx(expected[1]).epsilon(1e-12));
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(eig.vectors(0, 0) - r) <= 1e-12);
    CHECK(std::abs(eig.vectors(1, 0) - r) <= 1e-12);
    // Sign convention: first of the tied largest-magnitude entries positive.
    CHECK(std::abs(eig.vectors(0, 1) - r) <= 1e-12);
    CHECK(std::abs(eig.vectors(1, 1) + r) <= 1e-12);
}

TEST_CASE("eig_sym handles trivial and edge inputs") {
    const EigResult one = eig_sym(Matrix::from_rows({{4.0}}));
    CHECK(one.values[0] == 4.0);
    CHECK(one.vectors(0, 0) == 1.0);

    const EigResult id = eig_sym(Matrix::identity(3));
    for (double v : id.values) CHECK(v == 1.0);
    CHECK(ts::max_abs_diff(id.vectors, Matrix::identity(3)) == 0.0);

    const EigResult zero = eig_sym(Matrix(4, 4));
    for (double v : zero.values) CHECK(v == 0.0);

    // Already-diagonal input: eigenvectors are a signed permutation of I and
    // values come back descending.
    const Matrix d = Matrix::diagonal(std::vector<double>{2.0, 7.0, -1.0});
    const EigResult de = eig_sym(d);
    CHECK(de.values == std::vector<double>{7.0, 2.0, -1.0});
    CHECK(de.vectors(1, 0) == 1.0);
    CHECK(de.vectors(0, 1) == 1.0);
    CHECK(de.vectors(2, 2) == 1.0);

    CHECK_THROWS_AS(eig_sym(Matrix(2, 3)), DimensionError);
    CHECK_THROWS_AS(eig_sym(Matrix::from_rows({{1.0, 2.0}, {0.5, 1.0}})), NumericalError);
    Matrix bad = Matrix::identity(2);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(eig_sym(bad), NumericalError);
}

TEST_CASE("eig_sym property: orthogonal, reconstructs, ordered, deterministic") {
    Rng rng(99);
    for (int c = 0; c < 100; ++c) {
        const std::size_t n = 1 + rng.below(8);
        const Matrix a = ts::random_symmetric(n, rng);
        const EigResult eig = eig_sym(a);

        const Matrix qtq = matmul(transpose(eig.vectors), eig.vectors);
        CHECK(frobenius_norm(qtq - Matrix::identity(n)) <= 1e-10);

        Matrix scaled = eig.vectors;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) scaled(i, j) *= eig.values[j];
        const Matrix recon = matmul(scaled, transpose(eig.vectors));
        CHECK(frobenius_norm(recon - a) <= 1e-9 * std::max(frobenius_norm(a), 1e-300));

        for (std::size_t i = 0; i + 1 < n; ++i) CHECK(eig.values[i] >= eig.values[i + 1]);

        for (std::size_t j = 0; j < n; ++j) {
            std::size_t arg = 0;
            double best = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (std::abs(eig.vectors(i, j)) > best) {
                    best = std::abs(eig.vectors(i, j));
                    arg = i;
                }
            }
            CHECK(eig.vectors(arg, j) >= 0.0);
        }

        const EigResult again = eig_sym(a);
        CHECK(again.values == eig.values);   // bitwise
        CHECK(again.vectors == eig.vectors); // bitwise
    }
}

TEST_CASE("mat_power_sym analytic values") {
    // diag(4, 9)^(-1/2) = diag(1/2, 1/3); generating identity: x^(-1/2).
    const Matrix d = Matrix::diagonal(std::vector<double>{4.0, 9.0});
    const Matrix r = mat_power_sym(d, -0.5);
    CHECK(std::abs(r(0, 0) - 0.5) <= 1e-14);
    CHECK(std::abs(r(1, 1) - 1.0 / 3.0) <= 1e-14);
    CHECK(std::abs(r(0, 1)) <= 1e-14);

    CHECK(ts::max_abs_diff(mat_power_sym(Matrix::identity(3), -0.5), Matrix::identity(3)) <=
          1e-14);
    CHECK(ts::max_abs_diff(mat_power_sym(Matrix::identity(3), 0.0), Matrix::identity(3)) <=
          1e-14);

    // Integer powers keep the sign of negative eigenvalues: [[0,1],[1,0]]
    // has eigenvalues +-1, its square is I and its cube is itself.
    const Matrix flip = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
    CHECK(ts::max_abs_diff(mat_power_sym(flip, 2.0), Matrix::identity(2)) <= 1e-12);
    CHECK(ts::max_abs_diff(mat_power_sym(flip, 3.0), flip) <= 1e-12);
}

TEST_CASE("mat_power_sym PSD guards and ridge floor") {
    const Matrix indef = Matrix::diagonal(std::vector<double>{1.0, -1.0});
    CHECK_THROWS_AS(mat_power_sym(indef, 0.5), NumericalError);
    CHECK_THROWS_AS(mat_power_sym(indef, -1.0), NumericalError);

    // Singular matrix with no ridge cannot be inverted...
    CHECK_THROWS_AS(mat_power_sym(Matrix(2, 2), -0.5, 0.0), NumericalError);
    // ...but an explicit ridge clamps the spectrum and keeps things finite.
    const Matrix lifted = mat_power_sym(Matrix(2, 2), -0.5, 1e-4);
    CHECK(lifted(0, 0) == doctest::Approx(1e2).epsilon(1e-10));

    // Rank-deficient PSD with the default ridge: trace-based floor applies.
    const Matrix rank1 = Matrix::from_rows({{1.0, 0.0}, {0.0, 0.0}});
    const Matrix inv_root = mat_power_sym(rank1, -0.5);
    CHECK(inv_root.is_finite());
    CHECK(inv_root(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("mat_power_sym roundtrip and kron-power identity") {
    Rng rng(4321);
    double worst_roundtrip = 0.0;
    for (int c = 0; c < 20; ++c) {
        const std::size_t n = 2 + rng.below(5);
        const Matrix a = sample_spd(n, rng, 100.0);
        const Matrix root = mat_power_sym(a, 0.5);
        worst_roundtrip = std::max(worst_roundtrip, ts::rel_fro_diff(matmul(root, root), a));
    }
    CHECK(worst_roundtrip <= 1e-8);

    // (A kron B)^p == A^p kron B^p for p in {1/2, -1/2, 2}.
    for (const double p : {0.5, -0.5, 2.0}) {
        double worst = 0.0;
        for (int c = 0; c < 30; ++c) {
            const std::size_t na = 2 + rng.below(3);
            const std::size_t nb = 2 + rng.below(3);
            const Matrix a = sample_spd(na, rng, 50.0);
            const Matrix b = sample_spd(nb, rng, 50.0);
            const Matrix lhs = mat_power_sym(kron(a, b), p);
            const Matrix rhs = kron(mat_power_sym(a, p), mat_power_sym(b, p));
            worst = std::max(worst, ts::rel_fro_diff(lhs, rhs));
        }
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("sample_spd respects the requested conditioning and seed") {
    const Matrix a = sample_spd(5, std::uint64_t{42}, 1e3);
    CHECK(frobenius_norm(a - transpose(a)) <= 1e-12 * frobenius_norm(a));
    const EigResult eig = eig_sym(a);
    CHECK(eig.values.back() > 0.0);
    CHECK(eig.values.front() / eig.values.back() <= 1e3 * (1.0 + 1e-9));
    CHECK(eig.values.back() >= 1.0 - 1e-9);

    CHECK(sample_spd(5, std::uint64_t{42}, 1e3) == a);        // same seed, same bits
    CHECK(!(sample_spd(5, std::uint64_t{43}, 1e3) == a));     // different seed differs
    CHECK_THROWS_AS(sample_spd(3, std::uint64_t{1}, 0.5), DimensionError);
}

TEST_CASE("random_orthogonal and spd_with_eigenvalues") {
    Rng rng(17);
    const Matrix q = random_orthogonal(6, rng);
    CHECK(frobenius_norm(matmul(transpose(q), q) - Matrix::identity(6)) <= 1e-12);

    const std::vector<double> lam{9.0, 3.0, 1.0};
    const Matrix a = spd_with_eigenvalues(lam, rng);
    const EigResult eig = eig_sym(a);
    CHECK(std::abs(eig.values[0] - 9.0) <= 1e-10);
    CHECK(std::abs(eig.values[1] - 3.0) <= 1e-10);
    CHECK(std::abs(eig.values[2] - 1.0) <= 1e-10);

    CHECK_THROWS_AS(spd_with_eigenvalues(std::vector<double>{1.0, -2.0}, rng), NumericalError);
}

TEST_CASE("matrix_with_singular_values reproduces the requested spectrum") {
    Rng rng(23);
    const std::vector<double> sv{7.0, 2.0, 0.5};

    for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{5, 3}, {3, 5}, {3, 3}}) {
        const Matrix g = matrix_with_singular_values(sv, rows, cols, rng);
        REQUIRE(g.rows() == rows);
        REQUIRE(g.cols() == cols);
        // Eigenvalues of G^T G are the squared singular values.
        const EigResult eig = eig_sym(matmul(transpose(g), g));
        for (std::size_t i = 0; i < sv.size(); ++i) {
            CHECK(std::abs(eig.values[i] - sv[i] * sv[i]) <= 1e-10 * sv[0] * sv[0]);
        }
    }

    CHECK_THROWS_AS(matrix_with_singular_values(sv, 2, 3, rng), DimensionError);
    CHECK_THROWS_AS(
        matrix_with_singular_values(std::vector<double>{1.0, -1.0}, 2, 3, rng), NumericalError);
}

TEST_CASE("ensure_finite flags NaN and infinity") {
    Matrix m = Matrix::identity(2);
    CHECK(m.is_finite());
    m(0, 1) = std::numeric_limits<double>::infinity();
    CHECK(!m.is_finite());
    CHECK_THROWS_AS(ensure_finite(m, "test"), NumericalError);
}
