#include "imresnet/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "imresnet/errors.hpp"

namespace imresnet {

namespace {

void require_same_size(const Vector& a, const Vector& b, const char* op) {
    if (a.size() != b.size()) {
        throw DimensionMismatch(std::string(op) + ": vector sizes " + std::to_string(a.size()) +
                                " and " + std::to_string(b.size()));
    }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionMismatch(std::string(op) + ": matrix shapes differ");
    }
}

constexpr double kPivotRelTol = 1e-13;

// In-place LU with partial pivoting; row i of the factor corresponds to
// row perm[i] of the input.
struct LuFactors {
    Matrix lu;
    std::vector<std::size_t> perm;
};

LuFactors factorize(const Matrix& a) {
    if (!a.square()) {
        throw DimensionMismatch("lu_solve: matrix is " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()));
    }
    const std::size_t n = a.rows();
    std::vector<double> col_scale(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            col_scale[j] = std::max(col_scale[j], std::abs(a(i, j)));
        }
    }

    LuFactors f{a, std::vector<std::size_t>(n)};
    std::iota(f.perm.begin(), f.perm.end(), std::size_t{0});
    Matrix& lu = f.lu;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(lu(i, k)) > std::abs(lu(pivot, k))) pivot = i;
        }
        const double mag = std::abs(lu(pivot, k));
        if (col_scale[k] == 0.0 || !(mag >= kPivotRelTol * col_scale[k])) {
            throw SingularMatrix("lu_solve: pivot " + std::to_string(mag) + " in column " +
                                 std::to_string(k));
        }
        if (pivot != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(pivot, j));
            std::swap(f.perm[k], f.perm[pivot]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double m = lu(i, k) / lu(k, k);
            lu(i, k) = m;
            for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= m * lu(k, j);
        }
    }
    return f;
}

}  // namespace

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
        if (row.size() != cols_) throw DimensionMismatch("Matrix: ragged initializer");
        data_.insert(data_.end(), row.begin(), row.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Vector operator+(const Vector& a, const Vector& b) {
    require_same_size(a, b, "operator+");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vector operator-(const Vector& a, const Vector& b) {
    require_same_size(a, b, "operator-");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vector operator*(double s, const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = s * v[i];
    return out;
}

double dot(const Vector& a, const Vector& b) {
    require_same_size(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm_inf(const Vector& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator+");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.values().size(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator-");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.values().size(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
    return out;
}

Matrix operator*(double s, const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.values().size(); ++i) out.values()[i] = s * m.values()[i];
    return out;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Vector operator*(const Matrix& m, const Vector& v) {
    if (m.cols() != v.size()) throw DimensionMismatch("matvec: sizes differ");
    Vector out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) acc += m(i, j) * v[j];
        out[i] = acc;
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    }
    return out;
}

Vector transpose_times(const Matrix& m, const Vector& v) {
    if (m.rows() != v.size()) throw DimensionMismatch("transpose_times: sizes differ");
    Vector out(m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double vi = v[i];
        for (std::size_t j = 0; j < m.cols(); ++j) out[j] += m(i, j) * vi;
    }
    return out;
}

double norm_inf(const Matrix& m) {
    double best = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) row += std::abs(m(i, j));
        best = std::max(best, row);
    }
    return best;
}

Matrix outer(const Vector& a, const Vector& b) {
    Matrix out(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) out(i, j) = a[i] * b[j];
    }
    return out;
}

Vector lu_solve(const Matrix& a, const Vector& rhs) {
    if (a.rows() != rhs.size()) throw DimensionMismatch("lu_solve: rhs length differs");
    const LuFactors f = factorize(a);
    const std::size_t n = rhs.size();
    Vector x(n);
    // L y = P b
    for (std::size_t i = 0; i < n; ++i) {
        double acc = rhs[f.perm[i]];
        for (std::size_t j = 0; j < i; ++j) acc -= f.lu(i, j) * x[j];
        x[i] = acc;
    }
    // U x = y
    for (std::size_t i = n; i-- > 0;) {
        double acc = x[i];
        for (std::size_t j = i + 1; j < n; ++j) acc -= f.lu(i, j) * x[j];
        x[i] = acc / f.lu(i, i);
    }
    return x;
}

Vector lu_solve_transposed(const Matrix& a, const Vector& rhs) {
    return lu_solve(transpose(a), rhs);
}

Matrix skew_symmetrize(const Matrix& a) {
    if (!a.square()) throw DimensionMismatch("skew_symmetrize: matrix is not square");
    const std::size_t n = a.rows();
    Matrix w(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) w(i, j) = a(i, j) - a(j, i);
    }
    return w;
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::below(std::size_t n) {
    if (n == 0) throw InvalidArgument("Rng::below: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw;
    do {
        draw = engine_();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % bound);
}

Matrix glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    if (fan_in == 0 || fan_out == 0) throw InvalidArgument("glorot_uniform: zero fan");
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(fan_out, fan_in);
    for (double& x : m.values()) x = rng.uniform(-s, s);
    return m;
}

}  // namespace imresnet
