#pragma once

// A stack of implicit residual blocks between trainable affine input and
// output maps, with the layer-smoothness regularizer, plain mini-batch
// gradient descent and a finite-difference gradient checker.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "imresnet/datasets.hpp"
#include "imresnet/implicit_block.hpp"
#include "imresnet/numkit.hpp"

namespace imresnet {

struct ModelSpec {
    std::size_t input_dim = 1;
    std::size_t hidden_dim = 5;
    std::size_t output_dim = 1;
    std::size_t depth = 10;
    double theta = 0.5;
    double horizon = 1.0;  // h = horizon / depth
    ActivationKind activation = ActivationKind::ReLU;
    ActivationKind output_activation = ActivationKind::Identity;
    WeightMode weight_mode = WeightMode::SkewSymmetric;
    double reg_coeff = 0.1;
    double solver_tol = 1e-10;
    std::size_t solver_max_iter = 100;
    bool paper_param_grad = false;

    double step() const { return depth == 0 ? horizon : horizon / static_cast<double>(depth); }
    ImplicitBlockConfig block_config() const;
    void validate() const;

    bool operator==(const ModelSpec&) const = default;
};

struct Affine {
    Matrix w;
    Vector b;

    Vector apply(const Vector& x) const;
    bool operator==(const Affine&) const = default;
};

struct Model {
    ModelSpec spec;
    Affine lift;
    std::vector<BlockParams> blocks;
    Affine proj;

    // Glorot-uniform matrices, zero biases.
    static Model init(const ModelSpec& spec, Rng& rng);
    void validate() const;

    bool operator==(const Model&) const = default;
};

// Same layout as Model's trainable parameters.
struct ModelGradients {
    Affine lift;
    std::vector<Matrix> block_a;
    std::vector<Vector> block_b;
    Affine proj;

    static ModelGradients zeros_like(const Model& m);
};

// Flat parameter order: lift.w, lift.b, then for each block a and b, then
// proj.w, proj.b. Matrices are row-major.
std::vector<double> flatten(const Model& m);
std::vector<double> flatten(const ModelGradients& g);
void unflatten(Model& m, std::span<const double> values);
// Human-readable name of flat coordinate i, e.g. "block[2].a(0,1)".
std::string parameter_name(const Model& m, std::size_t index);
// True if flat coordinate i belongs to some block's stored weight a.
bool is_block_weight(const Model& m, std::size_t index);

std::size_t param_count(const Model& m, bool blocks_only);
std::size_t block_param_count(std::size_t hidden_dim, std::size_t depth);

struct ModelOutput {
    Vector out;
    std::vector<TapeEntry> tapes;
};

// out = output_activation(proj(block_L(... block_1(lift(x))))). Solver
// failures are rethrown as SolverDiverged carrying the 0-based layer index.
ModelOutput model_forward(const Model& m, const Vector& x);
// Same output, no tapes retained.
Vector model_predict(const Model& m, const Vector& x);

struct RegularizerResult {
    double value = 0.0;
    std::vector<Matrix> grad_a;
    std::vector<Vector> grad_b;
};

// (reg_coeff / L) sum_{k>=2} ||w_k - w_{k-1}||^2 with w_k = (a_k, b_k).
RegularizerResult regularizer(const Model& m);

enum class LossKind { SquaredError, BinaryCrossEntropy };

std::string_view loss_name(LossKind kind);
std::optional<LossKind> parse_loss(std::string_view name);

// Per-sample loss and its gradient with respect to the model output.
double sample_loss(LossKind kind, const Vector& out, const Vector& target, Vector* grad_out);

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t batch_size = 4;
    std::size_t epochs = 500;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::SquaredError;
    bool reversible = false;
};

struct LossAndGrad {
    double loss = 0.0;       // data_loss + regularizer
    double data_loss = 0.0;  // mean per-sample loss
    double reg = 0.0;
    ModelGradients grads;
    Vector grad_input;  // mean of d(sample loss)/dx over the batch
    // Largest number of hidden-state vectors held at once during the pass.
    std::size_t peak_retained_states = 0;
};

// Mean per-sample loss over the batch plus the regularizer. With
// cfg.reversible, hidden states are recovered layer by layer with
// reconstruct_input instead of being cached. Throws NonFiniteLoss.
LossAndGrad loss_and_grad(const Model& m, const LabeledSet& data, std::span<const std::size_t> batch,
                          const TrainConfig& cfg);

struct Evaluation {
    double loss = 0.0;
    std::optional<double> accuracy;  // Binary sets only, threshold 0.5
};

Evaluation evaluate(const Model& m, const LabeledSet& data, LossKind loss);

struct EpochRecord {
    double train_loss = 0.0;
    double val_loss = 0.0;
    std::optional<double> val_accuracy;
};

struct TrainRecord {
    EpochRecord initial;  // before any update
    std::vector<EpochRecord> epochs;
    bool diverged = false;
    std::string divergence_reason;
};

// Plain gradient descent, one step per batch; batches come from a seeded
// Fisher-Yates shuffle each epoch with the last short batch kept. The loss
// columns are data losses over the full sets after each epoch.
TrainRecord train(Model& m, const LabeledSet& train_set, const LabeledSet& val_set,
                  const TrainConfig& cfg);

struct GradcheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::string worst_name;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    double max_rel_error_block_weights = 0.0;
    std::size_t checked = 0;
    bool passed = false;
};

inline constexpr double kGradcheckStep = 1e-6;

// Central differences (step 1e-6) over every parameter and every input
// coordinate of a single-sample loss. Relative error uses 1 + |numeric| as
// denominator.
GradcheckReport gradcheck(const Model& m, const Vector& x, const Vector& target, LossKind loss,
                          double tol);

// Versioned JSON checkpoint; doubles round-trip exactly.
std::string checkpoint_to_string(const Model& m);
Model checkpoint_from_string(const std::string& text);
void save_checkpoint(const Model& m, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace imresnet
