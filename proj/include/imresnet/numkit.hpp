#pragma once

// Small dense linear algebra, a reproducible RNG, and weight initializers.
// Every state, weight and Jacobian in the library lives in these types; all
// arithmetic is 64-bit.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace imresnet {

class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
    Vector(std::initializer_list<double> values) : data_(values) {}
    explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& raw() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    bool operator==(const Vector&) const = default;

private:
    std::vector<double> data_;
};

// Row-major dense matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    // Nested-list constructor; every row must have the same length.
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Vector arithmetic. Binary operations throw DimensionMismatch on size
// disagreement.
Vector operator+(const Vector& a, const Vector& b);
Vector operator-(const Vector& a, const Vector& b);
Vector operator*(double s, const Vector& v);
double dot(const Vector& a, const Vector& b);
double norm_inf(const Vector& v);
double norm2(const Vector& v);
bool all_finite(std::span<const double> values);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& m, const Vector& v);
Matrix transpose(const Matrix& m);
// m^T v without forming the transpose.
Vector transpose_times(const Matrix& m, const Vector& v);
// Induced infinity norm (maximum absolute row sum).
double norm_inf(const Matrix& m);
Matrix outer(const Vector& a, const Vector& b);

// Solves a x = rhs by LU factorization with partial pivoting. Throws
// SingularMatrix when a pivot drops below 1e-13 times the largest
// column magnitude of the original matrix.
Vector lu_solve(const Matrix& a, const Vector& rhs);

// Solves a^T x = rhs, reusing the same factorization routine.
Vector lu_solve_transposed(const Matrix& a, const Vector& rhs);

// W = a - a^T. Throws DimensionMismatch for non-square input.
Matrix skew_symmetrize(const Matrix& a);

// Reproducible generator: std::mt19937_64 (whose output sequence is fixed by
// the C++ standard) seeded with the 64-bit seed directly. Uniform doubles are
// formed from the top 53 bits of each draw, so streams are bit-identical on
// every conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    // Uniform on [0, 1).
    double uniform();
    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer on [0, n); rejection sampling, no modulo bias.
    std::size_t below(std::size_t n);

    // Fisher-Yates shuffle driven by below().
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

// fan_out x fan_in matrix with entries uniform on [-s, s],
// s = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out);

}  // namespace imresnet
