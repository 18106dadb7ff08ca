#include "imresnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imresnet/errors.hpp"

namespace imresnet {

namespace {

constexpr double kProbClamp = 1e-12;
constexpr std::uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;

void append(std::vector<double>& dst, std::span<const double> src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

std::size_t take(std::span<double> dst, std::span<const double> src, std::size_t at) {
    if (at + dst.size() > src.size()) throw DimensionMismatch("unflatten: too few values");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(at), dst.size(), dst.begin());
    return at + dst.size();
}

Affine zero_affine_like(const Affine& a) { return Affine{Matrix(a.w.rows(), a.w.cols()), Vector(a.b.size())}; }

// dL/d(pre-activation of the output layer) from dL/dout.
Vector through_output_activation(ActivationKind act, const Vector& pre, const Vector& grad_out) {
    Vector g(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) g[i] = grad_out[i] * activate_derivative(act, pre[i]);
    return g;
}

void accumulate_affine(Affine& grad, const Vector& delta, const Vector& input) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
        for (std::size_t j = 0; j < input.size(); ++j) grad.w(i, j) += delta[i] * input[j];
        grad.b[i] += delta[i];
    }
}

Vector output_pre_activation(const Model& m, const Vector& hidden) { return m.proj.apply(hidden); }

Vector activate_all(ActivationKind act, Vector v) {
    for (double& u : v) u = activate(act, u);
    return v;
}

ForwardResult block_forward(const ImplicitBlockConfig& cfg, const BlockParams& p, const Vector& x,
                            std::size_t layer, bool record_tape = true) {
    try {
        return forward(cfg, p, x, record_tape);
    } catch (const SolverDiverged& e) {
        throw SolverDiverged("layer " + std::to_string(layer) + ": " + e.what(), e.residual(),
                             static_cast<int>(layer));
    }
}

}  // namespace

ImplicitBlockConfig ModelSpec::block_config() const {
    ImplicitBlockConfig cfg;
    cfg.theta = theta;
    cfg.h = step();
    cfg.activation = activation;
    cfg.solver_tol = solver_tol;
    cfg.solver_max_iter = solver_max_iter;
    cfg.paper_param_grad = paper_param_grad;
    return cfg;
}

void ModelSpec::validate() const {
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
        throw InvalidArgument("ModelSpec: dimensions must be >= 1");
    }
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("ModelSpec: horizon must be > 0");
    if (!(reg_coeff >= 0.0)) throw InvalidArgument("ModelSpec: reg_coeff must be >= 0");
    block_config().validate();
}

Vector Affine::apply(const Vector& x) const {
    Vector y = w * x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
    return y;
}

Model Model::init(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    Model m;
    m.spec = spec;
    m.lift = Affine{glorot_uniform(rng, spec.input_dim, spec.hidden_dim), Vector(spec.hidden_dim)};
    for (std::size_t k = 0; k < spec.depth; ++k) {
        m.blocks.push_back(BlockParams{glorot_uniform(rng, spec.hidden_dim, spec.hidden_dim),
                                       Vector(spec.hidden_dim), spec.weight_mode});
    }
    m.proj = Affine{glorot_uniform(rng, spec.hidden_dim, spec.output_dim), Vector(spec.output_dim)};
    return m;
}

void Model::validate() const {
    spec.validate();
    const auto n = spec.hidden_dim;
    if (lift.w.rows() != n || lift.w.cols() != spec.input_dim || lift.b.size() != n) {
        throw DimensionMismatch("Model: lift shape");
    }
    if (proj.w.rows() != spec.output_dim || proj.w.cols() != n || proj.b.size() != spec.output_dim) {
        throw DimensionMismatch("Model: proj shape");
    }
    if (blocks.size() != spec.depth) throw DimensionMismatch("Model: block count != depth");
    for (const auto& b : blocks) {
        b.validate();
        if (b.width() != n) throw DimensionMismatch("Model: block width");
        if (b.mode != spec.weight_mode) throw InvalidArgument("Model: block weight mode");
    }
}

ModelGradients ModelGradients::zeros_like(const Model& m) {
    ModelGradients g;
    g.lift = zero_affine_like(m.lift);
    g.proj = zero_affine_like(m.proj);
    for (const auto& b : m.blocks) {
        g.block_a.emplace_back(b.a.rows(), b.a.cols());
        g.block_b.emplace_back(b.b.size());
    }
    return g;
}

std::vector<double> flatten(const Model& m) {
    std::vector<double> out;
    out.reserve(param_count(m, false));
    append(out, m.lift.w.values());
    append(out, m.lift.b.values());
    for (const auto& b : m.blocks) {
        append(out, b.a.values());
        append(out, b.b.values());
    }
    append(out, m.proj.w.values());
    append(out, m.proj.b.values());
    return out;
}

std::vector<double> flatten(const ModelGradients& g) {
    std::vector<double> out;
    append(out, g.lift.w.values());
    append(out, g.lift.b.values());
    for (std::size_t k = 0; k < g.block_a.size(); ++k) {
        append(out, g.block_a[k].values());
        append(out, g.block_b[k].values());
    }
    append(out, g.proj.w.values());
    append(out, g.proj.b.values());
    return out;
}

void unflatten(Model& m, std::span<const double> values) {
    std::size_t at = 0;
    at = take(m.lift.w.values(), values, at);
    at = take(m.lift.b.values(), values, at);
    for (auto& b : m.blocks) {
        at = take(b.a.values(), values, at);
        at = take(b.b.values(), values, at);
    }
    at = take(m.proj.w.values(), values, at);
    at = take(m.proj.b.values(), values, at);
    if (at != values.size()) throw DimensionMismatch("unflatten: too many values");
}

namespace {

struct Segment {
    std::string name;
    std::size_t rows;
    std::size_t cols;  // 0 for vectors
    bool block_weight;
};

std::vector<Segment> segments(const Model& m) {
    std::vector<Segment> s;
    s.push_back({"lift.w", m.lift.w.rows(), m.lift.w.cols(), false});
    s.push_back({"lift.b", m.lift.b.size(), 0, false});
    for (std::size_t k = 0; k < m.blocks.size(); ++k) {
        const auto n = m.blocks[k].width();
        s.push_back({"block[" + std::to_string(k) + "].a", n, n, true});
        s.push_back({"block[" + std::to_string(k) + "].b", n, 0, false});
    }
    s.push_back({"proj.w", m.proj.w.rows(), m.proj.w.cols(), false});
    s.push_back({"proj.b", m.proj.b.size(), 0, false});
    return s;
}

}  // namespace

std::string parameter_name(const Model& m, std::size_t index) {
    std::size_t offset = index;
    for (const auto& seg : segments(m)) {
        const std::size_t len = seg.cols ? seg.rows * seg.cols : seg.rows;
        if (offset < len) {
            if (seg.cols) {
                return seg.name + "(" + std::to_string(offset / seg.cols) + "," +
                       std::to_string(offset % seg.cols) + ")";
            }
            return seg.name + "(" + std::to_string(offset) + ")";
        }
        offset -= len;
    }
    return "input(" + std::to_string(offset) + ")";
}

bool is_block_weight(const Model& m, std::size_t index) {
    std::size_t offset = index;
    for (const auto& seg : segments(m)) {
        const std::size_t len = seg.cols ? seg.rows * seg.cols : seg.rows;
        if (offset < len) return seg.block_weight;
        offset -= len;
    }
    return false;
}

std::size_t block_param_count(std::size_t hidden_dim, std::size_t depth) {
    return depth * (hidden_dim * hidden_dim + hidden_dim);
}

std::size_t param_count(const Model& m, bool blocks_only) {
    const auto& s = m.spec;
    std::size_t count = block_param_count(s.hidden_dim, s.depth);
    if (!blocks_only) {
        count += s.hidden_dim * s.input_dim + s.hidden_dim;
        count += s.output_dim * s.hidden_dim + s.output_dim;
    }
    return count;
}

ModelOutput model_forward(const Model& m, const Vector& x) {
    if (x.size() != m.spec.input_dim) throw DimensionMismatch("model_forward: input length");
    const ImplicitBlockConfig cfg = m.spec.block_config();
    ModelOutput result;
    result.tapes.reserve(m.blocks.size());
    Vector state = m.lift.apply(x);
    for (std::size_t k = 0; k < m.blocks.size(); ++k) {
        ForwardResult fr = block_forward(cfg, m.blocks[k], state, k);
        state = std::move(fr.y);
        result.tapes.push_back(std::move(fr.tape));
    }
    result.out = activate_all(m.spec.output_activation, output_pre_activation(m, state));
    return result;
}

Vector model_predict(const Model& m, const Vector& x) {
    if (x.size() != m.spec.input_dim) throw DimensionMismatch("model_predict: input length");
    const ImplicitBlockConfig cfg = m.spec.block_config();
    Vector state = m.lift.apply(x);
    for (std::size_t k = 0; k < m.blocks.size(); ++k) state = block_forward(cfg, m.blocks[k], state, k, false).y;
    return activate_all(m.spec.output_activation, output_pre_activation(m, state));
}

RegularizerResult regularizer(const Model& m) {
    RegularizerResult r;
    const std::size_t depth = m.blocks.size();
    for (const auto& b : m.blocks) {
        r.grad_a.emplace_back(b.a.rows(), b.a.cols());
        r.grad_b.emplace_back(b.b.size());
    }
    if (depth == 0) return r;
    const double scale = m.spec.reg_coeff / static_cast<double>(depth);
    for (std::size_t k = 1; k < depth; ++k) {
        const auto& cur = m.blocks[k];
        const auto& prev = m.blocks[k - 1];
        auto pair_term = [&](std::span<const double> c, std::span<const double> p, std::span<double> gc,
                             std::span<double> gp) {
            for (std::size_t i = 0; i < c.size(); ++i) {
                const double d = c[i] - p[i];
                r.value += scale * d * d;
                gc[i] += 2.0 * scale * d;
                gp[i] -= 2.0 * scale * d;
            }
        };
        pair_term(cur.a.values(), prev.a.values(), r.grad_a[k].values(), r.grad_a[k - 1].values());
        pair_term(cur.b.values(), prev.b.values(), r.grad_b[k].values(), r.grad_b[k - 1].values());
    }
    return r;
}

std::string_view loss_name(LossKind kind) {
    return kind == LossKind::SquaredError ? "squared_error" : "binary_cross_entropy";
}

std::optional<LossKind> parse_loss(std::string_view name) {
    if (name == "squared_error") return LossKind::SquaredError;
    if (name == "binary_cross_entropy") return LossKind::BinaryCrossEntropy;
    return std::nullopt;
}

double sample_loss(LossKind kind, const Vector& out, const Vector& target, Vector* grad_out) {
    if (out.size() != target.size()) throw DimensionMismatch("sample_loss: output/target length");
    double loss = 0.0;
    if (grad_out) *grad_out = Vector(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (kind == LossKind::SquaredError) {
            const double d = out[i] - target[i];
            loss += 0.5 * d * d;
            if (grad_out) (*grad_out)[i] = d;
        } else {
            const double p = std::clamp(out[i], kProbClamp, 1.0 - kProbClamp);
            const double y = target[i];
            loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
            if (grad_out) (*grad_out)[i] = -y / p + (1.0 - y) / (1.0 - p);
        }
    }
    return loss;
}

LossAndGrad loss_and_grad(const Model& m, const LabeledSet& data, std::span<const std::size_t> batch,
                          const TrainConfig& cfg) {
    if (batch.empty()) throw InvalidArgument("loss_and_grad: empty batch");
    const ImplicitBlockConfig bcfg = m.spec.block_config();
    const std::size_t depth = m.blocks.size();

    LossAndGrad res;
    res.grads = ModelGradients::zeros_like(m);
    res.grad_input = Vector(m.spec.input_dim);

    for (std::size_t idx : batch) {
        const Vector& x = data.inputs.at(idx);
        const Vector& target = data.targets.at(idx);
        if (x.size() != m.spec.input_dim) throw DimensionMismatch("loss_and_grad: input length");

        // Forward. The cached path keeps one tape per block; the reversible
        // path keeps only the running state.
        std::vector<TapeEntry> tapes;
        Vector state = m.lift.apply(x);
        std::size_t retained = 1;
        if (cfg.reversible) {
            for (std::size_t k = 0; k < depth; ++k) state = block_forward(bcfg, m.blocks[k], state, k, false).y;
        } else {
            tapes.reserve(depth);
            for (std::size_t k = 0; k < depth; ++k) {
                ForwardResult fr = block_forward(bcfg, m.blocks[k], state, k);
                state = fr.y;
                tapes.push_back(std::move(fr.tape));
                retained = std::max(retained, 2 * tapes.size() + 1);
            }
        }
        const Vector pre = output_pre_activation(m, state);
        const Vector out = activate_all(m.spec.output_activation, pre);
        Vector grad_out;
        res.data_loss += sample_loss(cfg.loss, out, target, &grad_out);

        // Backward through proj.
        const Vector delta_out = through_output_activation(m.spec.output_activation, pre, grad_out);
        accumulate_affine(res.grads.proj, delta_out, state);
        Vector g = transpose_times(m.proj.w, delta_out);

        // Backward through the blocks.
        for (std::size_t k = depth; k-- > 0;) {
            BlockGradients bg;
            if (cfg.reversible) {
                Vector input;
                try {
                    input = reconstruct_input(bcfg, m.blocks[k], state);
                } catch (const SolverDiverged& e) {
                    throw SolverDiverged("layer " + std::to_string(k) + ": " + e.what(), e.residual(),
                                         static_cast<int>(k));
                }
                // Held at once: the output, its reconstructed input, the
                // adjoint vector.
                retained = std::max<std::size_t>(retained, 3);
                const TapeEntry tape = make_tape(bcfg, m.blocks[k], input, state);
                bg = backward(bcfg, m.blocks[k], tape, g);
                state = std::move(input);
            } else {
                bg = backward(bcfg, m.blocks[k], tapes[k], g);
            }
            g = std::move(bg.grad_x);
            for (std::size_t i = 0; i < bg.grad_a.values().size(); ++i) {
                res.grads.block_a[k].values()[i] += bg.grad_a.values()[i];
            }
            for (std::size_t i = 0; i < bg.grad_b.size(); ++i) res.grads.block_b[k][i] += bg.grad_b[i];
        }

        // Backward through lift.
        accumulate_affine(res.grads.lift, g, x);
        const Vector gx = transpose_times(m.lift.w, g);
        for (std::size_t i = 0; i < gx.size(); ++i) res.grad_input[i] += gx[i];
        res.peak_retained_states = std::max(res.peak_retained_states, retained);
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    res.data_loss *= inv;
    auto scale_all = [inv](std::span<double> v) {
        for (double& x : v) x *= inv;
    };
    scale_all(res.grads.lift.w.values());
    scale_all(res.grads.lift.b.values());
    scale_all(res.grads.proj.w.values());
    scale_all(res.grads.proj.b.values());
    scale_all(res.grad_input.values());
    for (std::size_t k = 0; k < depth; ++k) {
        scale_all(res.grads.block_a[k].values());
        scale_all(res.grads.block_b[k].values());
    }

    const RegularizerResult reg = regularizer(m);
    res.reg = reg.value;
    for (std::size_t k = 0; k < depth; ++k) {
        for (std::size_t i = 0; i < reg.grad_a[k].values().size(); ++i) {
            res.grads.block_a[k].values()[i] += reg.grad_a[k].values()[i];
        }
        for (std::size_t i = 0; i < reg.grad_b[k].size(); ++i) res.grads.block_b[k][i] += reg.grad_b[k][i];
    }
    res.loss = res.data_loss + res.reg;
    if (!std::isfinite(res.loss)) throw NonFiniteLoss("loss is not finite");
    return res;
}

Evaluation evaluate(const Model& m, const LabeledSet& data, LossKind loss) {
    if (data.size() == 0) throw InvalidArgument("evaluate: empty set");
    Evaluation ev;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Vector out = model_predict(m, data.inputs[i]);
        ev.loss += sample_loss(loss, out, data.targets[i], nullptr);
        if (data.kind == SetKind::Binary) {
            const double predicted = out[0] >= 0.5 ? 1.0 : 0.0;
            if (predicted == data.targets[i][0]) ++correct;
        }
    }
    ev.loss /= static_cast<double>(data.size());
    if (data.kind == SetKind::Binary) {
        ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    }
    if (!std::isfinite(ev.loss)) throw NonFiniteLoss("evaluation loss is not finite");
    return ev;
}

TrainRecord train(Model& m, const LabeledSet& train_set, const LabeledSet& val_set,
                  const TrainConfig& cfg) {
    if (train_set.size() == 0 || val_set.size() == 0) throw InvalidArgument("train: empty dataset");
    if (cfg.batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
    m.validate();

    TrainRecord record;
    auto snapshot = [&]() {
        EpochRecord e;
        e.train_loss = evaluate(m, train_set, cfg.loss).loss;
        const Evaluation v = evaluate(m, val_set, cfg.loss);
        e.val_loss = v.loss;
        e.val_accuracy = v.accuracy;
        return e;
    };

    Rng rng(cfg.seed ^ kShuffleStream);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    try {
        record.initial = snapshot();
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            rng.shuffle(order);
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t len = std::min(cfg.batch_size, order.size() - start);
                const std::span<const std::size_t> batch(order.data() + start, len);
                const LossAndGrad lg = loss_and_grad(m, train_set, batch, cfg);
                std::vector<double> params = flatten(m);
                const std::vector<double> grads = flatten(lg.grads);
                for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * grads[i];
                if (!all_finite(params)) throw NonFiniteLoss("parameters became non-finite");
                unflatten(m, params);
            }
            record.epochs.push_back(snapshot());
        }
    } catch (const NonFiniteLoss& e) {
        record.diverged = true;
        record.divergence_reason = e.what();
    } catch (const SolverDiverged& e) {
        record.diverged = true;
        record.divergence_reason = e.what();
    } catch (const SingularMatrix& e) {
        record.diverged = true;
        record.divergence_reason = e.what();
    }
    return record;
}

GradcheckReport gradcheck(const Model& m, const Vector& x, const Vector& target, LossKind loss,
                          double tol) {
    LabeledSet one;
    one.inputs.push_back(x);
    one.targets.push_back(target);
    TrainConfig cfg;
    cfg.loss = loss;
    const std::size_t only[] = {0};
    const LossAndGrad lg = loss_and_grad(m, one, only, cfg);

    std::vector<double> analytic = flatten(lg.grads);
    const std::size_t n_params = analytic.size();
    append(analytic, lg.grad_input.values());

    auto objective = [&](const Model& model, const Vector& input) {
        return sample_loss(loss, model_predict(model, input), target, nullptr) + regularizer(model).value;
    };

    GradcheckReport report;
    Model probe = m;
    std::vector<double> params = flatten(m);
    Vector input = x;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        double numeric;
        if (i < n_params) {
            const double saved = params[i];
            params[i] = saved + kGradcheckStep;
            unflatten(probe, params);
            const double up = objective(probe, input);
            params[i] = saved - kGradcheckStep;
            unflatten(probe, params);
            const double down = objective(probe, input);
            params[i] = saved;
            numeric = (up - down) / (2.0 * kGradcheckStep);
        } else {
            if (i == n_params) unflatten(probe, params);
            const std::size_t j = i - n_params;
            const double saved = input[j];
            input[j] = saved + kGradcheckStep;
            const double up = objective(probe, input);
            input[j] = saved - kGradcheckStep;
            const double down = objective(probe, input);
            input[j] = saved;
            numeric = (up - down) / (2.0 * kGradcheckStep);
        }
        const double rel = std::abs(analytic[i] - numeric) / (1.0 + std::abs(numeric));
        ++report.checked;
        if (i < n_params && is_block_weight(m, i)) {
            report.max_rel_error_block_weights = std::max(report.max_rel_error_block_weights, rel);
        }
        if (rel > report.max_rel_error || report.checked == 1) {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.worst_name = parameter_name(m, i);
            report.worst_analytic = analytic[i];
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_rel_error <= tol;
    return report;
}

}  // namespace imresnet
