#pragma once

// Command implementations behind the `imresnet` executable. Each command
// returns its process exit code:
//   0 success, 1 I/O or parse failure, 2 invalid flags or config,
//   3 gradient check failed, 4 training diverged.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "imresnet/datasets.hpp"
#include "imresnet/network.hpp"
#include "imresnet/stability.hpp"

namespace imresnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitGradcheck = 3;
inline constexpr int kExitDiverged = 4;

// Full CLI entry point (argv[0] is the program name).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct StabilityOptions {
    std::vector<stability::SchemeKind> schemes{stability::kAllSchemes.begin(), stability::kAllSchemes.end()};
    double omega = 50.0;
    double h = 0.01;
    std::size_t steps = 2000;
    double y0 = 0.0;
    double z0 = 0.02;
    std::filesystem::path out_dir = ".";
    bool svg = false;
};

inline constexpr std::size_t kSpectraSamples = 301;
inline constexpr double kSpectraMax = 3.0;

int cmd_stability(const StabilityOptions& opts, std::ostream& log);

struct GradcheckOptions {
    std::uint64_t seed = 0;
    double theta = 0.5;
    std::size_t depth = 2;
    std::size_t width = 3;
    bool paper_param_grad = false;
    double tol = 1e-5;
};

struct GradcheckCase {
    Model model;
    Vector x;
    Vector target;
};

// Random tanh model (raw weights, rescaled so h*theta*||W||_inf <= 0.5,
// h = 1) with a far-off squared-error target so gradients are O(1).
GradcheckCase make_gradcheck_case(const GradcheckOptions& opts);

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& log);

struct DataConfig {
    std::string name = "regression";  // "regression" | "spirals"
    std::uint64_t seed = 0;
    std::size_t n_train = 100;
    std::size_t n_val = 200;
    std::size_t n_total = 513;
};

struct OutputConfig {
    std::filesystem::path directory = "out";
    bool svg = false;
    std::size_t grid = 101;  // prediction grid points per axis
};

struct ExperimentConfig {
    ModelSpec model;
    TrainConfig train;
    DataConfig data;
    OutputConfig output;
};

// Strict JSON reader: unknown keys and wrongly typed values throw
// InvalidArgument; malformed JSON throws ParseError. input_dim/output_dim
// default to the dataset's dimensions.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

SplitSets make_dataset(const DataConfig& data);

struct TrainOutcome {
    int exit_code = 0;
    TrainRecord record;
    std::size_t block_params = 0;
    std::size_t total_params = 0;
};

TrainOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log);
int cmd_train(const std::filesystem::path& config_path, const std::optional<std::filesystem::path>& out_override,
              std::ostream& log);

int cmd_dataset(const std::string& name, const std::filesystem::path& out_dir, std::uint64_t seed,
                std::ostream& log);

}  // namespace imresnet::cli
