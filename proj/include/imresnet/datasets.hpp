#pragma once

// Deterministic generators for the regression and two-spiral benchmarks,
// plus a CSV reader/writer that round-trips doubles exactly.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "imresnet/numkit.hpp"

namespace imresnet {

enum class SetKind { Regression, Binary };

struct LabeledSet {
    std::vector<Vector> inputs;
    std::vector<Vector> targets;
    SetKind kind = SetKind::Regression;

    std::size_t size() const noexcept { return inputs.size(); }
    std::size_t input_dim() const { return inputs.empty() ? 0 : inputs.front().size(); }
    std::size_t target_dim() const { return targets.empty() ? 0 : targets.front().size(); }
    // Throws InvalidArgument on length mismatch, ragged rows or non-binary
    // targets in a Binary set.
    void validate() const;

    bool operator==(const LabeledSet&) const = default;
};

struct SplitSets {
    LabeledSet train;
    LabeledSet val;
};

// sin(2 pi x) exp(-x^2 / 2)
double regression_target(double x);

// Train inputs uniform on [-1, 1] drawn from seed; validation inputs on the
// equispaced grid -1 + 2k / (n_val - 1).
SplitSets make_regression(std::uint64_t seed, std::size_t n_train = 100, std::size_t n_val = 200);

struct SpiralPoint {
    double x0;
    double x1;
    int label;
};

// Point j of spiral `label` (0 or 1) out of `count` points on that spiral.
SpiralPoint spiral_point(int label, std::size_t j, std::size_t count);

// All points in generation order: spiral 0 (ceil(n/2) points) followed by
// spiral 1 (floor(n/2) points).
std::vector<SpiralPoint> spiral_points(std::size_t n_total);

// Even positions of spiral_points() form the training set, odd positions the
// validation set, so each spiral loses every other point to validation.
SplitSets make_spirals(std::size_t n_total = 513);

// Header x0,..,x{d-1},y0,..; values printed with 17 significant digits.
void to_csv(const LabeledSet& set, const std::filesystem::path& path);
// Targets that are all 0/1 mark the set Binary. Throws IoError / ParseError.
LabeledSet from_csv(const std::filesystem::path& path);

}  // namespace imresnet
