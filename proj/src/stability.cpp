#include "imresnet/stability.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "imresnet/errors.hpp"

namespace imresnet::stability {

namespace {

Matrix inverse_2x2(const Matrix& m) {
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    if (det == 0.0) throw SingularMatrix("inverse_2x2: zero determinant");
    return Matrix{{m(1, 1) / det, -m(0, 1) / det}, {-m(1, 0) / det, m(0, 0) / det}};
}

// Generator of the flow: d/dt (y, z) = M (y, z).
Matrix generator(double omega) { return Matrix{{0.0, -omega * omega}, {1.0, 0.0}}; }

void require_step(double h, double omega) {
    if (!(h >= 0.0) || !std::isfinite(h)) throw InvalidArgument("step size must be >= 0");
    if (!(omega > 0.0) || !std::isfinite(omega)) throw InvalidArgument("omega must be > 0");
}

}  // namespace

std::string_view scheme_name(SchemeKind scheme) {
    switch (scheme) {
        case SchemeKind::ForwardEuler: return "forward-euler";
        case SchemeKind::BackwardEuler: return "backward-euler";
        case SchemeKind::Trapezoidal: return "trapezoidal";
        case SchemeKind::Verlet: return "verlet";
    }
    return "unknown";
}

std::optional<SchemeKind> parse_scheme(std::string_view name) {
    for (SchemeKind s : kAllSchemes) {
        if (scheme_name(s) == name) return s;
    }
    return std::nullopt;
}

TestSystem::TestSystem(double w) : omega(w) {
    if (!(w > 0.0) || !std::isfinite(w)) throw InvalidArgument("TestSystem: omega must be > 0");
}

State advance(SchemeKind scheme, double omega, double h, State s) {
    const double w2 = omega * omega;
    switch (scheme) {
        case SchemeKind::ForwardEuler:
            return {s.y - h * w2 * s.z, s.z + h * s.y};
        case SchemeKind::BackwardEuler: {
            // z_n = z + h y_n, y_n = y - h w^2 z_n
            const double z = (s.z + h * s.y) / (1.0 + h * h * w2);
            return {s.y - h * w2 * z, z};
        }
        case SchemeKind::Trapezoidal: {
            const double q = 0.25 * h * h * w2;
            const double z = ((1.0 - q) * s.z + h * s.y) / (1.0 + q);
            return {s.y - 0.5 * h * w2 * (s.z + z), z};
        }
        case SchemeKind::Verlet: {
            const double y_half = s.y - 0.5 * h * w2 * s.z;
            const double z = s.z + h * y_half;
            return {y_half - 0.5 * h * w2 * z, z};
        }
    }
    return s;
}

Matrix iteration_matrix(SchemeKind scheme, double h, double omega) {
    require_step(h, omega);
    const double w2 = omega * omega;
    switch (scheme) {
        case SchemeKind::ForwardEuler:
            return Matrix{{1.0, -h * w2}, {h, 1.0}};
        case SchemeKind::BackwardEuler:
            return inverse_2x2(Matrix{{1.0, h * w2}, {-h, 1.0}});
        case SchemeKind::Trapezoidal: {
            const Matrix half = (0.5 * h) * generator(omega);
            const Matrix eye = Matrix::identity(2);
            return inverse_2x2(eye - half) * (eye + half);
        }
        case SchemeKind::Verlet: {
            const Matrix kick{{1.0, -0.5 * h * w2}, {0.0, 1.0}};
            const Matrix drift{{1.0, 0.0}, {h, 1.0}};
            return kick * drift * kick;
        }
    }
    return Matrix::identity(2);
}

std::array<std::complex<double>, 2> eigenvalues_2x2(const Matrix& m) {
    if (m.rows() != 2 || m.cols() != 2) throw DimensionMismatch("eigenvalues_2x2: need 2x2");
    const double half_tr = 0.5 * (m(0, 0) + m(1, 1));
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double disc = half_tr * half_tr - det;
    if (disc >= 0.0) {
        // Avoid cancellation in the smaller root.
        const double root = std::sqrt(disc);
        const double big = half_tr >= 0.0 ? half_tr + root : half_tr - root;
        const double small = big != 0.0 ? det / big : 0.0;
        return {std::complex<double>(big, 0.0), std::complex<double>(small, 0.0)};
    }
    const double im = std::sqrt(-disc);
    return {std::complex<double>(half_tr, im), std::complex<double>(half_tr, -im)};
}

SpectralReport spectral_report(SchemeKind scheme, double h_omega) {
    if (!(h_omega >= 0.0) || !std::isfinite(h_omega)) {
        throw InvalidArgument("spectral_report: h*omega must be >= 0");
    }
    // The spectrum depends on h and omega only through their product.
    const Matrix m = iteration_matrix(scheme, h_omega, 1.0);
    SpectralReport report;
    report.h_omega = h_omega;
    report.eigenvalues = eigenvalues_2x2(m);
    report.spectral_radius =
        std::max(std::abs(report.eigenvalues[0]), std::abs(report.eigenvalues[1]));
    return report;
}

Trajectory integrate(SchemeKind scheme, const TestSystem& sys, double y0, double z0, double h,
                     std::size_t steps) {
    if (steps < 1) throw InvalidArgument("integrate: steps must be >= 1");
    require_step(h, sys.omega);
    Trajectory traj;
    traj.h = h;
    traj.steps = steps;
    traj.states.reserve(steps + 1);
    State s{y0, z0};
    traj.states.push_back(s);
    for (std::size_t k = 1; k <= steps; ++k) {
        s = advance(scheme, sys.omega, h, s);
        traj.states.push_back(s);
        const bool bad = !std::isfinite(s.y) || !std::isfinite(s.z) ||
                         std::abs(s.y) > kOverflowBound || std::abs(s.z) > kOverflowBound;
        if (bad) {
            traj.divergent = true;
            traj.diverged_at = k;
            traj.steps = k;
            break;
        }
    }
    return traj;
}

double energy(const TestSystem& sys, double y, double z) {
    return y * y + sys.omega * sys.omega * z * z;
}

}  // namespace imresnet::stability
