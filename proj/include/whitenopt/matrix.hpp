#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace whitenopt {

// Dense real matrix, row-major storage. The single carrier type for
// parameters, gradients, preconditioners and eigenvector bases.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);  // zero-filled
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> entries);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool is_finite() const noexcept;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    // Bitwise equality; used by determinism and round-trip tests.
    friend bool operator==(const Matrix& a, const Matrix& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
double trace(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
Matrix symmetrized(const Matrix& a);

// Kronecker product: block (i, j) of the result is a(i, j) * b.
Matrix kron(const Matrix& a, const Matrix& b);

// Column-stacking vectorization: entry (i, j) maps to index j * rows + i.
// This is the convention under which kron(a, b) * vec(g) == vec(b g a^T).
std::vector<double> vec(const Matrix& g);
Matrix unvec(std::span<const double> v, std::size_t rows, std::size_t cols);

std::vector<double> vec_add(std::span<const double> a, std::span<const double> b);
std::vector<double> vec_sub(std::span<const double> a, std::span<const double> b);
double vec_norm(std::span<const double> v);

// Throws NumericalError naming `what` if any entry is NaN or infinite.
void ensure_finite(const Matrix& a, const std::string& what);
void ensure_finite(std::span<const double> v, const std::string& what);

std::string shape_string(const Matrix& a);

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, class Rng& rng);

}  // namespace whitenopt
