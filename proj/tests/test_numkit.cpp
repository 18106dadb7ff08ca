#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "imresnet/errors.hpp"
#include "imresnet/numkit.hpp"

using namespace imresnet;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& x : m.values()) x = rng.uniform(-1.0, 1.0);
    return m;
}

Vector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (double& x : v) x = rng.uniform(-scale, scale);
    return v;
}

double residual_inf(const Matrix& a, const Vector& x, const Vector& rhs) {
    return norm_inf(a * x - rhs);
}

}  // namespace

TEST(LuSolve, IdentityReturnsRhs) {
    const Vector x = lu_solve(Matrix::identity(3), Vector{1, 2, 3});
    EXPECT_EQ(x, (Vector{1, 2, 3}));
}

TEST(LuSolve, Diagonal) {
    const Vector x = lu_solve(Matrix{{2, 0}, {0, 4}}, Vector{2, 8});
    EXPECT_DOUBLE_EQ(x[0], 1.0);
    EXPECT_DOUBLE_EQ(x[1], 2.0);
}

TEST(LuSolve, PermutationNeedsPivoting) {
    const Vector x = lu_solve(Matrix{{0, 1}, {1, 0}}, Vector{3, 5});
    EXPECT_DOUBLE_EQ(x[0], 5.0);
    EXPECT_DOUBLE_EQ(x[1], 3.0);
}

TEST(LuSolve, SingularThrows) {
    EXPECT_THROW(lu_solve(Matrix{{1, 2}, {2, 4}}, Vector{1, 1}), SingularMatrix);
    EXPECT_THROW(lu_solve(Matrix(3, 3), Vector(3)), SingularMatrix);
    // Pivot ~1e-16 relative to the column scale.
    EXPECT_THROW(lu_solve(Matrix{{1, 1}, {1, 1 + 1e-16}}, Vector{1, 2}), SingularMatrix);
}

TEST(LuSolve, ShapeErrors) {
    EXPECT_THROW(lu_solve(Matrix(2, 3), Vector(2)), DimensionMismatch);
    EXPECT_THROW(lu_solve(Matrix::identity(2), Vector(3)), DimensionMismatch);
}

TEST(LuSolve, RandomSystemsResidualBound) {
    Rng rng(11);
    for (std::size_t n = 1; n <= 50; n += 7) {
        for (int trial = 0; trial < 5; ++trial) {
            Matrix a = random_matrix(rng, n, n);
            // Diagonal shift keeps the systems well conditioned.
            for (std::size_t i = 0; i < n; ++i) a(i, i) += static_cast<double>(n);
            const Vector rhs = random_vector(rng, n, 10.0);
            const Vector x = lu_solve(a, rhs);
            EXPECT_LE(residual_inf(a, x, rhs), 1e-10 * (1.0 + norm_inf(rhs))) << "n=" << n;
        }
    }
}

TEST(LuSolve, AgreesWithEigenPartialPivLu) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.below(10);
        const Matrix a = random_matrix(rng, n, n);
        const Vector rhs = random_vector(rng, n);
        Eigen::MatrixXd ea(n, n);
        Eigen::VectorXd eb(n);
        for (std::size_t i = 0; i < n; ++i) {
            eb(i) = rhs[i];
            for (std::size_t j = 0; j < n; ++j) ea(i, j) = a(i, j);
        }
        const Eigen::VectorXd ex = ea.partialPivLu().solve(eb);
        const Vector x = lu_solve(a, rhs);
        const double cond = ea.norm() * ea.inverse().norm();
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(x[i], ex(i), 1e-12 * cond * (1 + ex.norm()));
    }
}

TEST(LuSolve, TransposedSolve) {
    const Matrix a{{2, 1}, {0, 3}};
    const Vector x = lu_solve_transposed(a, Vector{4, 7});
    // a^T = [[2,0],[1,3]] -> x0 = 2, x1 = (7 - 2) / 3
    EXPECT_DOUBLE_EQ(x[0], 2.0);
    EXPECT_NEAR(x[1], 5.0 / 3.0, 1e-15);
}

TEST(SkewSymmetrize, HandExample) {
    EXPECT_EQ(skew_symmetrize(Matrix{{1, 2}, {3, 4}}), (Matrix{{0, -1}, {1, 0}}));
}

TEST(SkewSymmetrize, SymmetricGivesZero) {
    EXPECT_EQ(skew_symmetrize(Matrix{{1, 5}, {5, 2}}), Matrix(2, 2));
}

TEST(SkewSymmetrize, SkewInputDoubles) {
    const Matrix a{{0, 3, -1}, {-3, 0, 2}, {1, -2, 0}};
    EXPECT_EQ(skew_symmetrize(a), 2.0 * a);
}

TEST(SkewSymmetrize, NonSquareThrows) {
    EXPECT_THROW(skew_symmetrize(Matrix(2, 3)), DimensionMismatch);
}

TEST(SkewSymmetrize, QuadraticFormVanishes) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(8);
        const Matrix w = skew_symmetrize(random_matrix(rng, n, n));
        EXPECT_EQ(w + transpose(w), Matrix(n, n));
        const Vector v = random_vector(rng, n, 5.0);
        const double q = dot(v, w * v);
        double wnorm = 0.0;
        for (double x : w.values()) wnorm += x * x;
        EXPECT_LE(std::abs(q), 1e-12 * dot(v, v) * std::sqrt(wnorm) + 1e-300);
    }
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DifferentSeedsDiffer) {
    Rng a(1);
    Rng b(2);
    EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(Rng, MatchesStandardMersenneTwister) {
    // The 10000th output of a default-seeded mt19937_64 is fixed by the standard.
    Rng rng(5489);
    std::uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) v = rng.next_u64();
    EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, UniformInUnitInterval) {
    Rng rng(9);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Rng, BelowCoversRange) {
    Rng rng(4);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) ++hits[rng.below(7)];
    for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Glorot, UnitBoundForThreeByThree) {
    Rng rng(1);
    const Matrix m = glorot_uniform(rng, 3, 3);
    for (double x : m.values()) {
        EXPECT_GE(x, -1.0);
        EXPECT_LE(x, 1.0);
    }
}

TEST(Glorot, ShapeIsFanOutByFanIn) {
    Rng rng(1);
    const Matrix m = glorot_uniform(rng, 2, 5);
    EXPECT_EQ(m.rows(), 5u);
    EXPECT_EQ(m.cols(), 2u);
}

TEST(Glorot, Deterministic) {
    Rng a(77);
    Rng b(77);
    EXPECT_EQ(glorot_uniform(a, 4, 6), glorot_uniform(b, 4, 6));
}

TEST(Glorot, EmpiricalMeanWithinThreeSigma) {
    // 5x5 matrices, 10^4 samples in total (400 matrices).
    Rng rng(2024);
    const double s = std::sqrt(6.0 / 10.0);
    double sum = 0.0;
    std::size_t count = 0;
    while (count < 10000) {
        const Matrix m = glorot_uniform(rng, 5, 5);
        for (double x : m.values()) {
            EXPECT_LE(std::abs(x), s);
            sum += x;
            ++count;
        }
    }
    const double sigma_mean = s / std::sqrt(3.0 * 1e4);
    EXPECT_LE(std::abs(sum / static_cast<double>(count)), 3.0 * sigma_mean);
}

TEST(Glorot, ZeroFanRejected) {
    Rng rng(0);
    EXPECT_THROW(glorot_uniform(rng, 0, 3), InvalidArgument);
}

TEST(Matrix, RaggedInitializerRejected) {
    EXPECT_THROW((Matrix{{1, 2}, {3}}), DimensionMismatch);
}

TEST(Matrix, ProductsAndNorms) {
    const Matrix a{{1, -2}, {3, 4}};
    EXPECT_EQ(a * (Vector{1, 1}), (Vector{-1, 7}));
    EXPECT_EQ(transpose_times(a, Vector{1, 1}), (Vector{4, 2}));
    EXPECT_DOUBLE_EQ(norm_inf(a), 7.0);
    EXPECT_EQ(a * Matrix::identity(2), a);
    EXPECT_THROW(a * (Vector{1, 2, 3}), DimensionMismatch);
}
