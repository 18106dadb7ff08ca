#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "imresnet/datasets.hpp"
#include "imresnet/errors.hpp"
#include "imresnet/network.hpp"

using namespace imresnet;

namespace {

ModelSpec small_spec(std::size_t width, std::size_t depth, double theta) {
    ModelSpec s;
    s.input_dim = 2;
    s.hidden_dim = width;
    s.output_dim = 1;
    s.depth = depth;
    s.theta = theta;
    s.activation = ActivationKind::Tanh;
    s.weight_mode = WeightMode::Raw;
    return s;
}

// Random biases so the model is not positively homogeneous in x.
Model random_model(const ModelSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    Model m = Model::init(spec, rng);
    for (auto& blk : m.blocks) {
        for (double& v : blk.b) v = rng.uniform(-0.5, 0.5);
    }
    for (double& v : m.lift.b) v = rng.uniform(-0.5, 0.5);
    for (double& v : m.proj.b) v = rng.uniform(-0.5, 0.5);
    return m;
}

LabeledSet random_set(std::size_t n, std::size_t in_dim, std::uint64_t seed) {
    Rng rng(seed);
    LabeledSet s;
    for (std::size_t i = 0; i < n; ++i) {
        Vector x(in_dim);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        s.inputs.push_back(x);
        s.targets.push_back(Vector{rng.uniform(-1.0, 1.0)});
    }
    return s;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(ParamCount, ExampleArchitectures) {
    EXPECT_EQ(block_param_count(5, 100), 3000u);
    EXPECT_EQ(block_param_count(5, 10), 300u);
    EXPECT_EQ(block_param_count(6, 25), 1050u);
}

TEST(ParamCount, ModelCountsBlocksAndAffineMaps) {
    ModelSpec s;
    s.depth = 100;
    Rng rng(0);
    const Model m = Model::init(s, rng);
    EXPECT_EQ(param_count(m, true), 3000u);
    // lift 1->5 and proj 5->1 with biases
    EXPECT_EQ(param_count(m, false), 3000u + 10u + 6u);
    EXPECT_EQ(flatten(m).size(), param_count(m, false));
}

TEST(ModelSpec, StepAndValidation) {
    ModelSpec s;
    EXPECT_DOUBLE_EQ(s.step(), 0.1);
    s.depth = 100;
    EXPECT_NEAR(s.step() * 100, s.horizon, 1e-12);
    s.hidden_dim = 0;
    EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(Init, GlorotMatricesZeroBiases) {
    ModelSpec s;
    Rng rng(3);
    const Model m = Model::init(s, rng);
    EXPECT_EQ(m.blocks.size(), 10u);
    EXPECT_EQ(m.lift.b, Vector(5));
    EXPECT_EQ(m.proj.b, Vector(1));
    const double bound = std::sqrt(6.0 / 10.0);
    for (const auto& blk : m.blocks) {
        EXPECT_EQ(blk.b, Vector(5));
        for (double v : blk.a.values()) EXPECT_LE(std::abs(v), bound);
    }
}

TEST(Flatten, RoundTripAndNames) {
    const Model m = random_model(small_spec(3, 2, 0.5), 1);
    Model copy = m;
    std::vector<double> p = flatten(m);
    for (double& v : p) v += 1.0;
    unflatten(copy, p);
    EXPECT_EQ(flatten(copy), p);
    EXPECT_EQ(parameter_name(m, 0), "lift.w(0,0)");
    // lift: 3x2 + 3, then block 0's a starts at 9.
    EXPECT_EQ(parameter_name(m, 9), "block[0].a(0,0)");
    EXPECT_TRUE(is_block_weight(m, 9));
    EXPECT_FALSE(is_block_weight(m, 9 + 9));  // block[0].b(0)
    EXPECT_EQ(parameter_name(m, p.size()), "input(0)");
}

TEST(ModelForward, DepthZeroIsAffineComposition) {
    ModelSpec s = small_spec(3, 0, 0.5);
    s.output_activation = ActivationKind::Sigmoid;
    const Model m = random_model(s, 4);
    const Vector x{0.3, -0.7};
    const Vector z = m.proj.apply(m.lift.apply(x));
    const ModelOutput out = model_forward(m, x);
    EXPECT_TRUE(out.tapes.empty());
    EXPECT_DOUBLE_EQ(out.out[0], activate(ActivationKind::Sigmoid, z[0]));
}

TEST(ModelForward, ZeroBlocksAreIdentityMaps) {
    ModelSpec s = small_spec(4, 3, 0.5);
    s.activation = ActivationKind::Identity;
    Model m = random_model(s, 5);
    for (auto& blk : m.blocks) {
        blk.a = Matrix(4, 4);
        blk.b = Vector(4);
    }
    const Vector x{1.5, 0.25};
    EXPECT_EQ(model_forward(m, x).out, m.proj.apply(m.lift.apply(x)));
    EXPECT_EQ(model_predict(m, x), m.proj.apply(m.lift.apply(x)));
}

TEST(ModelForward, RejectsWrongInputLength) {
    const Model m = random_model(small_spec(3, 1, 0.5), 0);
    EXPECT_THROW(model_forward(m, Vector{1.0}), DimensionMismatch);
}

TEST(ModelForward, SolverFailureCarriesLayerIndex) {
    ModelSpec s = small_spec(1, 3, 1.0);
    s.input_dim = 1;
    s.activation = ActivationKind::Identity;
    s.solver_max_iter = 5;
    Model m = random_model(s, 0);
    m.lift = Affine{Matrix{{1.0}}, Vector{0.0}};
    m.blocks[0].a = Matrix{{0.1}};
    m.blocks[1].a = Matrix{{3.0}};  // y = x + y: no solution
    m.blocks[2].a = Matrix{{0.1}};
    for (auto& blk : m.blocks) blk.b = Vector{0.5};
    try {
        model_forward(m, Vector{1.0});
        FAIL() << "expected SolverDiverged";
    } catch (const SolverDiverged& e) {
        EXPECT_EQ(e.layer(), 1);
    }
}

namespace {

Model scalar_chain() {
    ModelSpec s;
    s.input_dim = 1;
    s.hidden_dim = 1;
    s.output_dim = 1;
    s.depth = 1;
    s.theta = 0.5;
    s.activation = ActivationKind::Identity;
    s.weight_mode = WeightMode::Raw;
    Model m;
    m.spec = s;
    m.lift = Affine{Matrix{{1.0}}, Vector{0.0}};
    m.blocks = {BlockParams{Matrix{{0.5}}, Vector{0.0}, WeightMode::Raw}};
    m.proj = Affine{Matrix{{1.0}}, Vector{0.0}};
    return m;
}

}  // namespace

TEST(ModelForward, ScalarChain) {
    const Model m = scalar_chain();
    EXPECT_NEAR(model_forward(m, Vector{1.0}).out[0], 5.0 / 3.0, 1e-12);

    // Target one below the output makes d(loss)/d(out) = 1.
    LabeledSet one;
    one.inputs = {Vector{1.0}};
    one.targets = {Vector{5.0 / 3.0 - 1.0}};
    const std::size_t idx[] = {0};
    const LossAndGrad lg = loss_and_grad(m, one, idx, TrainConfig{});
    EXPECT_NEAR(lg.grad_input[0], 5.0 / 3.0, 1e-12);
    EXPECT_NEAR(lg.grads.block_a[0](0, 0), 16.0 / 9.0, 1e-12);
}

TEST(Regularizer, IdenticalLayersGiveZero) {
    Model m = random_model(small_spec(3, 4, 0.5), 2);
    for (auto& blk : m.blocks) blk = m.blocks[0];
    const RegularizerResult r = regularizer(m);
    EXPECT_EQ(r.value, 0.0);
    for (const auto& g : r.grad_a) EXPECT_EQ(g, Matrix(3, 3));
    for (const auto& g : r.grad_b) EXPECT_EQ(g, Vector(3));
}

TEST(Regularizer, TwoLayerExample) {
    Model m = random_model(small_spec(3, 2, 0.5), 2);
    m.blocks[0].a = Matrix(3, 3);
    m.blocks[0].b = Vector(3);
    for (double& v : m.blocks[1].a.values()) v = 1.0;
    m.blocks[1].b = Vector{1.0, 1.0, 1.0};
    // 12 entries, (0.1 / 2) * 12
    EXPECT_NEAR(regularizer(m).value, 0.6, 1e-15);
}

TEST(Regularizer, GradientMatchesFiniteDifferences) {
    ModelSpec s = small_spec(3, 5, 0.5);
    s.weight_mode = WeightMode::SkewSymmetric;
    const Model m = random_model(s, 8);
    const RegularizerResult r = regularizer(m);
    const double step = 1e-6;
    for (std::size_t k = 0; k < m.blocks.size(); ++k) {
        for (std::size_t i = 0; i < 9; ++i) {
            Model up = m;
            Model down = m;
            up.blocks[k].a.values()[i] += step;
            down.blocks[k].a.values()[i] -= step;
            const double fd = (regularizer(up).value - regularizer(down).value) / (2 * step);
            EXPECT_LE(rel_diff(r.grad_a[k].values()[i], fd), 1e-6);
        }
        for (std::size_t i = 0; i < 3; ++i) {
            Model up = m;
            Model down = m;
            up.blocks[k].b[i] += step;
            down.blocks[k].b[i] -= step;
            const double fd = (regularizer(up).value - regularizer(down).value) / (2 * step);
            EXPECT_LE(rel_diff(r.grad_b[k][i], fd), 1e-6);
        }
    }
}

TEST(Regularizer, InvariantUnderCommonShift) {
    const Model m = random_model(small_spec(4, 6, 0.5), 9);
    Rng rng(1);
    Matrix da(4, 4);
    for (double& v : da.values()) v = rng.uniform(-3.0, 3.0);
    Model shifted = m;
    for (auto& blk : shifted.blocks) {
        blk.a = blk.a + da;
        blk.b = blk.b + Vector{1.0, -2.0, 0.5, 4.0};
    }
    EXPECT_NEAR(regularizer(shifted).value, regularizer(m).value, 1e-12);
}

TEST(Loss, SquaredErrorAndCrossEntropy) {
    Vector g;
    EXPECT_EQ(sample_loss(LossKind::SquaredError, Vector{0.3, 2.0}, Vector{0.3, 2.0}, &g), 0.0);
    EXPECT_EQ(g, Vector(2));
    EXPECT_DOUBLE_EQ(sample_loss(LossKind::SquaredError, Vector{1.0, 0.0}, Vector{0.0, 2.0}, nullptr), 2.5);
    EXPECT_NEAR(sample_loss(LossKind::BinaryCrossEntropy, Vector{0.5}, Vector{1.0}, nullptr), std::log(2.0), 1e-15);
    EXPECT_NEAR(sample_loss(LossKind::BinaryCrossEntropy, Vector{0.5}, Vector{1.0}, nullptr), 0.693147, 1e-6);
    // Clamped away from log(0).
    EXPECT_TRUE(std::isfinite(sample_loss(LossKind::BinaryCrossEntropy, Vector{0.0}, Vector{1.0}, nullptr)));
    EXPECT_EQ(parse_loss(loss_name(LossKind::BinaryCrossEntropy)), LossKind::BinaryCrossEntropy);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
    for (LossKind kind : {LossKind::SquaredError, LossKind::BinaryCrossEntropy}) {
        for (double p : {0.2, 0.55, 0.9}) {
            for (double y : {0.0, 1.0}) {
                Vector g;
                sample_loss(kind, Vector{p}, Vector{y}, &g);
                const double step = 1e-7;
                const double fd = (sample_loss(kind, Vector{p + step}, Vector{y}, nullptr) -
                                   sample_loss(kind, Vector{p - step}, Vector{y}, nullptr)) /
                                  (2 * step);
                EXPECT_NEAR(g[0], fd, 1e-6);
            }
        }
    }
}

TEST(LossAndGrad, FullModelMatchesFiniteDifferences) {
    for (double theta : {0.0, 0.5, 1.0}) {
        ModelSpec s = small_spec(3, 2, theta);
        s.solver_tol = 1e-13;
        s.solver_max_iter = 500;
        const Model m = random_model(s, 21);
        const LabeledSet data = random_set(3, 2, 4);
        const std::size_t batch[] = {0, 1, 2};
        TrainConfig cfg;
        const LossAndGrad lg = loss_and_grad(m, data, batch, cfg);
        const std::vector<double> analytic = flatten(lg.grads);

        auto total = [&](const Model& probe) {
            double sum = 0.0;
            for (std::size_t i : batch) {
                sum += sample_loss(cfg.loss, model_predict(probe, data.inputs[i]), data.targets[i], nullptr);
            }
            return sum / 3.0 + regularizer(probe).value;
        };
        std::vector<double> p = flatten(m);
        Model probe = m;
        const double step = 1e-6;
        double worst = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p[i];
            p[i] = saved + step;
            unflatten(probe, p);
            const double up = total(probe);
            p[i] = saved - step;
            unflatten(probe, p);
            const double down = total(probe);
            p[i] = saved;
            const double fd = (up - down) / (2 * step);
            worst = std::max(worst, std::abs(analytic[i] - fd) / (1.0 + std::abs(fd)));
        }
        EXPECT_LE(worst, 1e-5) << "theta=" << theta;
        EXPECT_NEAR(lg.loss, total(m), 1e-14);
    }
}

TEST(LossAndGrad, ReversibleMatchesCached) {
    ModelSpec s = small_spec(5, 10, 0.5);
    s.weight_mode = WeightMode::SkewSymmetric;
    const Model m = random_model(s, 33);
    const LabeledSet data = random_set(12, 2, 7);
    std::vector<std::size_t> batch(12);
    std::iota(batch.begin(), batch.end(), std::size_t{0});
    TrainConfig cached;
    TrainConfig rev;
    rev.reversible = true;
    const LossAndGrad a = loss_and_grad(m, data, batch, cached);
    const LossAndGrad b = loss_and_grad(m, data, batch, rev);
    const auto ga = flatten(a.grads);
    const auto gb = flatten(b.grads);
    for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_LE(rel_diff(gb[i], ga[i]), 1e-6) << parameter_name(m, i);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.peak_retained_states, 21u);
    EXPECT_EQ(b.peak_retained_states, 3u);
}

TEST(LossAndGrad, EmptyBatchRejected) {
    const Model m = random_model(small_spec(3, 1, 0.5), 0);
    const LabeledSet data = random_set(2, 2, 0);
    EXPECT_THROW(loss_and_grad(m, data, std::span<const std::size_t>{}, TrainConfig{}), InvalidArgument);
}

TEST(SkewMode, EffectiveWeightsHaveZeroQuadraticForm) {
    ModelSpec s;
    Rng rng(17);
    const Model m = Model::init(s, rng);
    for (const auto& blk : m.blocks) {
        const Matrix w = blk.effective_weight();
        for (int t = 0; t < 20; ++t) {
            Vector v(5);
            for (double& x : v) x = rng.uniform(-10.0, 10.0);
            EXPECT_LE(std::abs(dot(v, w * v)), 1e-12 * dot(v, v));
        }
    }
}

TEST(Train, ZeroLearningRateLeavesModelUnchanged) {
    ModelSpec s = small_spec(3, 2, 0.5);
    const Model m0 = random_model(s, 1);
    Model m = m0;
    const LabeledSet data = random_set(10, 2, 1);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    const TrainRecord r = train(m, data, data, cfg);
    EXPECT_EQ(m, m0);
    ASSERT_EQ(r.epochs.size(), 3u);
    for (const auto& e : r.epochs) EXPECT_EQ(e.train_loss, r.initial.train_loss);
}

TEST(Train, SingleFullBatchStepIsScaledGradient) {
    ModelSpec s = small_spec(3, 2, 0.5);
    const Model m0 = random_model(s, 2);
    Model m = m0;
    const LabeledSet data = random_set(6, 2, 3);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 6;
    cfg.epochs = 1;
    train(m, data, data, cfg);
    std::vector<std::size_t> all(6);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const LossAndGrad lg = loss_and_grad(m0, data, all, cfg);
    const auto p0 = flatten(m0);
    const auto p1 = flatten(m);
    const auto g = flatten(lg.grads);
    // The shuffle only changes the summation order of the batch.
    for (std::size_t i = 0; i < p0.size(); ++i) EXPECT_NEAR(p1[i], p0[i] - 0.05 * g[i], 1e-14);
}

TEST(Train, DeterministicPerSeed) {
    ModelSpec s = small_spec(3, 3, 0.5);
    const LabeledSet data = random_set(20, 2, 5);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 42;
    Model a = random_model(s, 7);
    Model b = random_model(s, 7);
    const TrainRecord ra = train(a, data, data, cfg);
    const TrainRecord rb = train(b, data, data, cfg);
    ASSERT_EQ(ra.epochs.size(), rb.epochs.size());
    for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
        EXPECT_EQ(ra.epochs[i].train_loss, rb.epochs[i].train_loss);
        EXPECT_EQ(ra.epochs[i].val_loss, rb.epochs[i].val_loss);
    }
    EXPECT_EQ(a, b);

    Model c = random_model(s, 7);
    cfg.seed = 43;
    train(c, data, data, cfg);
    EXPECT_NE(flatten(a), flatten(c));
}

TEST(Train, HugeLearningRateIsReportedAsDivergence) {
    ModelSpec s = small_spec(3, 2, 0.5);
    Model m = random_model(s, 1);
    const LabeledSet data = random_set(8, 2, 2);
    TrainConfig cfg;
    cfg.learning_rate = 1e200;
    cfg.epochs = 5;
    const TrainRecord r = train(m, data, data, cfg);
    EXPECT_TRUE(r.diverged);
    EXPECT_FALSE(r.divergence_reason.empty());
    EXPECT_LT(r.epochs.size(), 5u);
}

TEST(Train, BinarySetsReportAccuracy) {
    ModelSpec s = small_spec(3, 2, 0.5);
    s.output_activation = ActivationKind::Sigmoid;
    Model m = random_model(s, 1);
    const SplitSets d = make_spirals(40);
    TrainConfig cfg;
    cfg.loss = LossKind::BinaryCrossEntropy;
    cfg.epochs = 1;
    const TrainRecord r = train(m, d.train, d.val, cfg);
    ASSERT_TRUE(r.epochs[0].val_accuracy.has_value());
    EXPECT_GE(*r.epochs[0].val_accuracy, 0.0);
    EXPECT_LE(*r.epochs[0].val_accuracy, 1.0);
}

TEST(Train, ExampleOneLossDecreasesEarly) {
    // Median over 5 seeds of the first 5 epochs' training loss.
    std::vector<std::vector<double>> curves;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const SplitSets d = make_regression(seed);
        ModelSpec s;
        Rng rng(seed);
        Model m = Model::init(s, rng);
        TrainConfig cfg;
        cfg.epochs = 5;
        cfg.seed = seed;
        const TrainRecord r = train(m, d.train, d.val, cfg);
        ASSERT_FALSE(r.diverged);
        std::vector<double> c{r.initial.train_loss};
        for (const auto& e : r.epochs) c.push_back(e.train_loss);
        curves.push_back(c);
    }
    double prev = INFINITY;
    for (std::size_t e = 0; e <= 5; ++e) {
        std::vector<double> at;
        for (const auto& c : curves) at.push_back(c[e]);
        std::sort(at.begin(), at.end());
        EXPECT_LT(at[2], prev) << "epoch " << e;
        prev = at[2];
    }
}

TEST(Gradcheck, RandomImplicitModelPasses) {
    ModelSpec s = small_spec(3, 2, 0.5);
    s.solver_tol = 1e-13;
    s.solver_max_iter = 500;
    const Model m = random_model(s, 12);
    const GradcheckReport r = gradcheck(m, Vector{0.4, -0.6}, Vector{2.0}, LossKind::SquaredError, 1e-5);
    EXPECT_TRUE(r.passed) << r.worst_name << " " << r.max_rel_error;
    EXPECT_EQ(r.checked, param_count(m, false) + 2);
}

TEST(Gradcheck, ZeroWeightIdentityModelIsExact) {
    ModelSpec s = small_spec(3, 2, 0.5);
    s.activation = ActivationKind::Identity;
    Model m = random_model(s, 3);
    for (auto& blk : m.blocks) {
        blk.a = Matrix(3, 3);
        blk.b = Vector(3);
    }
    const GradcheckReport r = gradcheck(m, Vector{0.1, 0.2}, Vector{1.0}, LossKind::SquaredError, 1e-9);
    EXPECT_LE(r.max_rel_error, 1e-9);
}

TEST(Gradcheck, ReducedParameterGradientFailsOnBlockWeights) {
    ModelSpec s = small_spec(3, 2, 0.5);
    s.solver_tol = 1e-13;
    s.solver_max_iter = 500;
    s.paper_param_grad = true;
    s.horizon = 2.0;
    Model m = random_model(s, 12);
    const GradcheckReport r = gradcheck(m, Vector{0.4, -0.6}, Vector{4.0}, LossKind::SquaredError, 1e-5);
    EXPECT_FALSE(r.passed);
    EXPECT_GT(r.max_rel_error_block_weights, 0.1);
    EXPECT_NE(r.worst_name.find("block["), std::string::npos);
}

TEST(Checkpoint, RoundTripIsExact) {
    ModelSpec s = small_spec(4, 3, 0.5);
    s.output_activation = ActivationKind::Sigmoid;
    s.weight_mode = WeightMode::SkewSymmetric;
    const Model m = random_model(s, 99);
    const Model back = checkpoint_from_string(checkpoint_to_string(m));
    EXPECT_EQ(back, m);

    const auto path = std::filesystem::temp_directory_path() / "imresnet_ckpt_test.json";
    save_checkpoint(m, path);
    EXPECT_EQ(load_checkpoint(path), m);
    std::filesystem::remove(path);
}

TEST(Checkpoint, MalformedInputRejected) {
    EXPECT_THROW(checkpoint_from_string("{not json"), ParseError);
    EXPECT_THROW(checkpoint_from_string(R"({"format":"other","version":1})"), ParseError);
    EXPECT_THROW(load_checkpoint("/nonexistent/dir/ckpt.json"), IoError);
}
