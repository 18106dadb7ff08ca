#pragma once

// Implicit residual block
//
//   y = x + h [ (1 - theta) F(x) + theta F(y) ],   F(v) = act(W v + b),
//
// with W = a (raw) or W = a - a^T (skew-symmetric). theta = 0 is the explicit
// ResNet step, theta = 1/2 the trapezoidal rule, theta = 1 backward Euler.
//
// The forward pass solves the nonlinear equation; the backward pass never
// differentiates through the solver. It needs one transposed linear solve
// with (I - h theta dF/dy) per layer.

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "imresnet/numkit.hpp"

namespace imresnet {

enum class ActivationKind { Identity, ReLU, Tanh, Sigmoid };

std::string_view activation_name(ActivationKind kind);
std::optional<ActivationKind> parse_activation(std::string_view name);

double activate(ActivationKind kind, double u);
double activate_derivative(ActivationKind kind, double u);

enum class WeightMode { Raw, SkewSymmetric };

std::string_view weight_mode_name(WeightMode mode);
std::optional<WeightMode> parse_weight_mode(std::string_view name);

struct BlockParams {
    Matrix a;  // stored (pre-skew) weight, n x n
    Vector b;  // bias, length n
    WeightMode mode = WeightMode::Raw;

    std::size_t width() const noexcept { return b.size(); }
    // W = a, or a - a^T in skew mode.
    Matrix effective_weight() const;
    // Throws DimensionMismatch unless a is n x n with n = b.size() >= 1.
    void validate() const;

    bool operator==(const BlockParams&) const = default;
};

struct ImplicitBlockConfig {
    double theta = 0.5;
    double h = 1.0;
    ActivationKind activation = ActivationKind::Tanh;
    double solver_tol = 1e-10;
    std::size_t solver_max_iter = 100;
    // Drops the theta * dF(y)/dW term from the parameter gradient. Only for
    // comparison runs: the resulting gradient is wrong whenever theta > 0.
    bool paper_param_grad = false;

    // Throws InvalidArgument on theta outside [0, 1], h <= 0, tol <= 0.
    void validate() const;
};

struct TapeEntry {
    Vector x;
    Vector y;
    Matrix jx;  // dF/dv at x
    Matrix jy;  // dF/dv at y
    // Activation slopes sigma'(Wv + b) at x and y; backward recomputes them when empty.
    Vector sx;
    Vector sy;
};

enum class SolvePhase { Explicit, FixedPoint, Descent };

struct SolveStats {
    SolvePhase phase = SolvePhase::Explicit;
    std::size_t iterations = 0;  // fixed-point plus descent iterations
    double residual = 0.0;       // final ||r(y)||_inf
    bool guess_singular = false; // linearized guess fell back to y0 = x
    // ||y_{k+1} - y_k||_inf for every fixed-point update.
    std::vector<double> step_norms;
};

struct ForwardResult {
    Vector y;
    TapeEntry tape;
    SolveStats stats;
};

struct BlockGradients {
    Vector grad_x;
    Matrix grad_a;  // with respect to the stored weight a
    Vector grad_b;
};

// F(v) = act(W v + b).
Vector block_fn(const BlockParams& params, ActivationKind act, const Vector& v);

// dF/dv = diag(act'(W v + b)) W.
Matrix block_jacobian_x(const BlockParams& params, ActivationKind act, const Vector& v);

// r(y) = y - x - h (1 - theta) F(x) - h theta F(y).
Vector block_residual(const ImplicitBlockConfig& cfg, const BlockParams& params, const Vector& x,
                      const Vector& y);

// Solves the block equation for y. Strategy: linearized closed-form guess,
// then fixed-point iteration, then backtracking descent on 0.5 ||r||^2 if the
// fixed-point phase did not reach solver_tol. Throws SolverDiverged.
// With record_tape false the returned tape is left empty.
ForwardResult forward(const ImplicitBlockConfig& cfg, const BlockParams& params, const Vector& x,
                      bool record_tape = true);

// Tape for a known (x, y) pair, e.g. one reconstructed on the reversible path.
TapeEntry make_tape(const ImplicitBlockConfig& cfg, const BlockParams& params, Vector x, Vector y);

BlockGradients backward(const ImplicitBlockConfig& cfg, const BlockParams& params,
                        const TapeEntry& tape, const Vector& grad_y);

// Inverts the block: finds x with x = y - h (1 - theta) F(x) - h theta F(y)
// by fixed-point iteration from x0 = y - h F(y). Throws SolverDiverged.
Vector reconstruct_input(const ImplicitBlockConfig& cfg, const BlockParams& params, const Vector& y);

}  // namespace imresnet
