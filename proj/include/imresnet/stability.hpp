#pragma once

// Linear stability laboratory for the oscillator y' = -omega^2 z, z' = y.
// Four one-step schemes are provided both as explicit per-step updates and as
// their 2x2 iteration matrices, together with eigenvalue analysis.

#include <array>
#include <complex>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "imresnet/numkit.hpp"

namespace imresnet::stability {

enum class SchemeKind { ForwardEuler, BackwardEuler, Trapezoidal, Verlet };

inline constexpr std::array<SchemeKind, 4> kAllSchemes = {
    SchemeKind::ForwardEuler, SchemeKind::BackwardEuler, SchemeKind::Trapezoidal,
    SchemeKind::Verlet};

// "forward-euler", "backward-euler", "trapezoidal", "verlet".
std::string_view scheme_name(SchemeKind scheme);
std::optional<SchemeKind> parse_scheme(std::string_view name);

struct TestSystem {
    explicit TestSystem(double omega);
    double omega;
};

struct State {
    double y = 0.0;
    double z = 0.0;
};

struct SpectralReport {
    double h_omega = 0.0;
    std::array<std::complex<double>, 2> eigenvalues{};
    double spectral_radius = 0.0;
};

struct Trajectory {
    std::vector<State> states;
    double h = 0.0;
    std::size_t steps = 0;
    // Set when some |state| exceeded the overflow bound. The trajectory is
    // then truncated after the first offending state and steps is reduced
    // to match, so states.size() == steps + 1 always holds.
    bool divergent = false;
    std::optional<std::size_t> diverged_at;
};

inline constexpr double kOverflowBound = 1e12;

// One step of the scheme for an arbitrary real h (negative h steps
// backwards in time). Implicit schemes use the exact 2x2 closed-form solve.
State advance(SchemeKind scheme, double omega, double h, State s);

// Exact one-step map (y_n, z_n) = M (y_{n-1}, z_{n-1}). h >= 0, omega > 0.
Matrix iteration_matrix(SchemeKind scheme, double h, double omega);

// Eigenvalues of the iteration matrix for any (h, omega) with product h_omega.
SpectralReport spectral_report(SchemeKind scheme, double h_omega);

// Eigenvalues of a real 2x2 matrix from its characteristic polynomial.
std::array<std::complex<double>, 2> eigenvalues_2x2(const Matrix& m);

Trajectory integrate(SchemeKind scheme, const TestSystem& sys, double y0, double z0, double h,
                     std::size_t steps);

// y^2 + omega^2 z^2, the quadratic invariant of the exact flow.
double energy(const TestSystem& sys, double y, double z);

}  // namespace imresnet::stability
