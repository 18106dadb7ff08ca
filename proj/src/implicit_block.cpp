#include "imresnet/implicit_block.hpp"

#include <cmath>
#include <string>

#include "imresnet/errors.hpp"

namespace imresnet {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 40;

Vector apply_activation(ActivationKind act, Vector pre) {
    for (double& u : pre) u = activate(act, u);
    return pre;
}

Vector activation_slopes(ActivationKind act, const Vector& pre) {
    Vector out(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) out[i] = activate_derivative(act, pre[i]);
    return out;
}

Vector pre_activation(const Matrix& w, const Vector& b, const Vector& v) {
    Vector u = w * v;
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += b[i];
    return u;
}

Matrix scale_rows(const Vector& d, const Matrix& w) {
    Matrix out = w;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) *= d[i];
    }
    return out;
}

// Activation value and derivative from a single evaluation.
void activate_with_slope(ActivationKind act, double u, double& value, double& slope) {
    switch (act) {
        case ActivationKind::Identity: value = u; slope = 1.0; return;
        case ActivationKind::ReLU:
            value = u > 0.0 ? u : 0.0;
            slope = u > 0.0 ? 1.0 : 0.0;
            return;
        case ActivationKind::Tanh:
            value = std::tanh(u);
            slope = 1.0 - value * value;
            return;
        case ActivationKind::Sigmoid:
            value = 1.0 / (1.0 + std::exp(-u));
            slope = value * (1.0 - value);
            return;
    }
    value = u;
    slope = 1.0;
}

// Operator view of one block with W formed once.
struct BlockOp {
    const ImplicitBlockConfig& cfg;
    const Matrix w;
    const Vector& b;

    BlockOp(const ImplicitBlockConfig& c, const BlockParams& p)
        : cfg(c), w(p.effective_weight()), b(p.b) {}

    Vector f(const Vector& v) const { return apply_activation(cfg.activation, pre_activation(w, b, v)); }

    Matrix jacobian(const Vector& v) const {
        return scale_rows(activation_slopes(cfg.activation, pre_activation(w, b, v)), w);
    }

    // F(v) into fv and sigma'(Wv + b) into slope.
    void eval(const Vector& v, Vector& fv, Vector& slope) const {
        const std::size_t n = v.size();
        if (fv.size() != n) fv = Vector(n);
        if (slope.size() != n) slope = Vector(n);
        for (std::size_t i = 0; i < n; ++i) {
            double u = 0.0;
            for (std::size_t j = 0; j < n; ++j) u += w(i, j) * v[j];
            u += b[i];
            activate_with_slope(cfg.activation, u, fv[i], slope[i]);
        }
    }

    // I - s J
    static Matrix shifted(const Matrix& j, double s) {
        Matrix m = (-s) * j;
        for (std::size_t i = 0; i < m.rows(); ++i) m(i, i) += 1.0;
        return m;
    }
};

void check_dims(const BlockParams& params, const Vector& v, const char* where) {
    params.validate();
    if (v.size() != params.width()) {
        throw DimensionMismatch(std::string(where) + ": state has length " + std::to_string(v.size()) +
                                ", block width is " + std::to_string(params.width()));
    }
}

double half_sq(const Vector& r) { return 0.5 * dot(r, r); }

}  // namespace

std::string_view activation_name(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::Identity: return "identity";
        case ActivationKind::ReLU: return "relu";
        case ActivationKind::Tanh: return "tanh";
        case ActivationKind::Sigmoid: return "sigmoid";
    }
    return "unknown";
}

std::optional<ActivationKind> parse_activation(std::string_view name) {
    for (auto k : {ActivationKind::Identity, ActivationKind::ReLU, ActivationKind::Tanh,
                   ActivationKind::Sigmoid}) {
        if (activation_name(k) == name) return k;
    }
    return std::nullopt;
}

double activate(ActivationKind kind, double u) {
    switch (kind) {
        case ActivationKind::Identity: return u;
        case ActivationKind::ReLU: return u > 0.0 ? u : 0.0;
        case ActivationKind::Tanh: return std::tanh(u);
        case ActivationKind::Sigmoid: return 1.0 / (1.0 + std::exp(-u));
    }
    return u;
}

double activate_derivative(ActivationKind kind, double u) {
    switch (kind) {
        case ActivationKind::Identity: return 1.0;
        // Subgradient 0 at the kink.
        case ActivationKind::ReLU: return u > 0.0 ? 1.0 : 0.0;
        case ActivationKind::Tanh: {
            const double t = std::tanh(u);
            return 1.0 - t * t;
        }
        case ActivationKind::Sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-u));
            return s * (1.0 - s);
        }
    }
    return 1.0;
}

std::string_view weight_mode_name(WeightMode mode) {
    return mode == WeightMode::Raw ? "raw" : "skew";
}

std::optional<WeightMode> parse_weight_mode(std::string_view name) {
    if (name == "raw") return WeightMode::Raw;
    if (name == "skew") return WeightMode::SkewSymmetric;
    return std::nullopt;
}

Matrix BlockParams::effective_weight() const {
    return mode == WeightMode::SkewSymmetric ? skew_symmetrize(a) : a;
}

void BlockParams::validate() const {
    if (b.empty()) throw DimensionMismatch("BlockParams: width must be >= 1");
    if (a.rows() != b.size() || a.cols() != b.size()) {
        throw DimensionMismatch("BlockParams: weight must be " + std::to_string(b.size()) + "x" +
                                std::to_string(b.size()));
    }
}

void ImplicitBlockConfig::validate() const {
    if (!(theta >= 0.0 && theta <= 1.0)) throw InvalidArgument("theta must lie in [0, 1]");
    if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("h must be > 0");
    if (!(solver_tol > 0.0)) throw InvalidArgument("solver_tol must be > 0");
}

Vector block_fn(const BlockParams& params, ActivationKind act, const Vector& v) {
    check_dims(params, v, "block_fn");
    return apply_activation(act, pre_activation(params.effective_weight(), params.b, v));
}

Matrix block_jacobian_x(const BlockParams& params, ActivationKind act, const Vector& v) {
    check_dims(params, v, "block_jacobian_x");
    const Matrix w = params.effective_weight();
    return scale_rows(activation_slopes(act, pre_activation(w, params.b, v)), w);
}

Vector block_residual(const ImplicitBlockConfig& cfg, const BlockParams& params, const Vector& x,
                      const Vector& y) {
    check_dims(params, x, "block_residual");
    check_dims(params, y, "block_residual");
    const BlockOp op(cfg, params);
    const Vector fx = op.f(x);
    const Vector fy = op.f(y);
    Vector r(x.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = y[i] - x[i] - cfg.h * (1.0 - cfg.theta) * fx[i] - cfg.h * cfg.theta * fy[i];
    }
    return r;
}

ForwardResult forward(const ImplicitBlockConfig& cfg, const BlockParams& params, const Vector& x,
                      bool record_tape) {
    cfg.validate();
    check_dims(params, x, "forward");
    const BlockOp op(cfg, params);
    const std::size_t n = x.size();
    const double h = cfg.h;
    const double theta = cfg.theta;
    Vector fx;
    Vector sx;
    op.eval(x, fx, sx);
    Matrix jx = scale_rows(sx, op.w);

    ForwardResult out;
    SolveStats& stats = out.stats;
    Vector fy;
    Vector sy;

    auto finish = [&](Vector y) {
        if (!record_tape) {
            out.y = std::move(y);
            return;
        }
        if (sy.size() != n) op.eval(y, fy, sy);
        out.tape.jx = std::move(jx);
        out.tape.jy = scale_rows(sy, op.w);
        out.tape.sx = std::move(sx);
        out.tape.sy = std::move(sy);
        out.tape.x = x;
        out.tape.y = y;
        out.y = std::move(y);
    };

    if (theta == 0.0) {
        Vector y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + h * fx[i];
        finish(std::move(y));
        return out;
    }

    // Constant part of the fixed-point map: x + h (1 - theta) F(x).
    Vector base(n);
    for (std::size_t i = 0; i < n; ++i) base[i] = x[i] + h * (1.0 - theta) * fx[i];

    // y = G(y) = base + h theta F(y); r(y) = y - G(y).
    auto residual_of = [&](const Vector& y, const Vector& f, Vector& r) {
        if (r.size() != n) r = Vector(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - base[i] - h * theta * f[i];
    };

    // Linearizing F(y) about x gives y0 = x + h (I - theta h dF/dx)^{-1} F(x).
    Vector y(n);
    try {
        const Vector delta = lu_solve(BlockOp::shifted(jx, theta * h), fx);
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + h * delta[i];
    } catch (const SingularMatrix&) {
        stats.guess_singular = true;
        y = x;
    }

    stats.phase = SolvePhase::FixedPoint;
    Vector best = y;
    double best_res = INFINITY;
    bool converged = false;
    Vector r(n);
    for (std::size_t k = 0;; ++k) {
        op.eval(y, fy, sy);
        residual_of(y, fy, r);
        const double res = norm_inf(r);
        if (!std::isfinite(res)) break;
        if (res < best_res) {
            best_res = res;
            best = y;
        }
        if (res <= cfg.solver_tol) {
            converged = true;
            break;
        }
        if (k == cfg.solver_max_iter) break;
        // y_{k+1} = G(y_k) = y_k - r(y_k)
        for (std::size_t i = 0; i < n; ++i) y[i] -= r[i];
        stats.step_norms.push_back(res);
        ++stats.iterations;
    }

    if (!converged) {
        stats.phase = SolvePhase::Descent;
        y = best;
        op.eval(y, fy, sy);
        residual_of(y, fy, r);
        double phi = half_sq(r);
        Vector f_trial;
        Vector s_trial;
        Vector r_trial;
        for (std::size_t k = 0; k < cfg.solver_max_iter && norm_inf(r) > cfg.solver_tol; ++k) {
            // Gradient of 0.5 ||r||^2 is (I - h theta dF/dy)^T r.
            const Vector d = transpose_times(BlockOp::shifted(scale_rows(sy, op.w), h * theta), r);
            const double slope = dot(d, d);
            if (slope == 0.0) break;
            double step = 1.0;
            bool accepted = false;
            for (int halving = 0; halving <= kMaxHalvings; ++halving, step *= 0.5) {
                Vector trial = y - step * d;
                op.eval(trial, f_trial, s_trial);
                residual_of(trial, f_trial, r_trial);
                const double phi_trial = half_sq(r_trial);
                if (std::isfinite(phi_trial) && phi_trial <= phi - kArmijo * step * slope) {
                    y = std::move(trial);
                    std::swap(r, r_trial);
                    std::swap(fy, f_trial);
                    std::swap(sy, s_trial);
                    phi = phi_trial;
                    accepted = true;
                    break;
                }
            }
            ++stats.iterations;
            if (!accepted) break;
        }
        best_res = norm_inf(r);
        if (!(best_res <= cfg.solver_tol)) {
            throw SolverDiverged("implicit block: residual " + std::to_string(best_res) +
                                     " above tolerance after fixed-point and descent phases",
                                 best_res);
        }
    }

    stats.residual = best_res;
    finish(std::move(y));
    return out;
}

TapeEntry make_tape(const ImplicitBlockConfig& cfg, const BlockParams& params, Vector x, Vector y) {
    check_dims(params, x, "make_tape");
    check_dims(params, y, "make_tape");
    const BlockOp op(cfg, params);
    TapeEntry tape;
    Vector f;
    op.eval(x, f, tape.sx);
    op.eval(y, f, tape.sy);
    tape.jx = scale_rows(tape.sx, op.w);
    tape.jy = scale_rows(tape.sy, op.w);
    tape.x = std::move(x);
    tape.y = std::move(y);
    return tape;
}

BlockGradients backward(const ImplicitBlockConfig& cfg, const BlockParams& params,
                        const TapeEntry& tape, const Vector& grad_y) {
    cfg.validate();
    check_dims(params, tape.x, "backward");
    check_dims(params, grad_y, "backward");
    const std::size_t n = grad_y.size();
    const double h = cfg.h;
    const double theta = cfg.theta;

    // w = (I - h theta dF/dy)^{-T} grad_y
    const Vector adj = theta == 0.0
                           ? grad_y
                           : lu_solve_transposed(BlockOp::shifted(tape.jy, h * theta), grad_y);

    BlockGradients g;
    g.grad_x = adj;
    const Vector jt = transpose_times(tape.jx, adj);
    for (std::size_t i = 0; i < n; ++i) g.grad_x[i] += h * (1.0 - theta) * jt[i];

    Vector slope_x = tape.sx;
    Vector slope_y = tape.sy;
    if (slope_x.size() != n || slope_y.size() != n) {
        const Matrix w = params.effective_weight();
        slope_x = activation_slopes(cfg.activation, pre_activation(w, params.b, tape.x));
        slope_y = activation_slopes(cfg.activation, pre_activation(w, params.b, tape.y));
    }
    const double y_weight = cfg.paper_param_grad ? 0.0 : h * theta;
    Vector coef_x(n);
    Vector coef_y(n);
    for (std::size_t i = 0; i < n; ++i) {
        coef_x[i] = h * (1.0 - theta) * slope_x[i] * adj[i];
        coef_y[i] = y_weight * slope_y[i] * adj[i];
    }

    Matrix grad_w(n, n);
    g.grad_b = Vector(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            grad_w(i, j) = coef_x[i] * tape.x[j] + coef_y[i] * tape.y[j];
        }
        g.grad_b[i] = coef_x[i] + coef_y[i];
    }
    // W = a - a^T  =>  dL/da = dL/dW - (dL/dW)^T
    g.grad_a = params.mode == WeightMode::SkewSymmetric ? skew_symmetrize(grad_w) : grad_w;
    return g;
}

Vector reconstruct_input(const ImplicitBlockConfig& cfg, const BlockParams& params, const Vector& y) {
    cfg.validate();
    check_dims(params, y, "reconstruct_input");
    const BlockOp op(cfg, params);
    const std::size_t n = y.size();
    const double h = cfg.h;
    const double theta = cfg.theta;
    const Vector fy = op.f(y);

    // x = c - h (1 - theta) F(x), c = y - h theta F(y)
    Vector c(n);
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) {
        c[i] = y[i] - h * theta * fy[i];
        x[i] = y[i] - h * fy[i];
    }
    if (theta == 1.0) return x;

    double res = INFINITY;
    for (std::size_t k = 0;; ++k) {
        const Vector fx = op.f(x);
        Vector next(n);
        for (std::size_t i = 0; i < n; ++i) next[i] = c[i] - h * (1.0 - theta) * fx[i];
        res = norm_inf(x - next);
        if (!std::isfinite(res)) break;
        if (res <= cfg.solver_tol) return x;
        if (k == cfg.solver_max_iter) break;
        x = std::move(next);
    }
    throw SolverDiverged("reconstruct_input: residual " + std::to_string(res) + " above tolerance",
                         res);
}

}  // namespace imresnet
