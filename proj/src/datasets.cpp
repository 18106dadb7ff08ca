#include "imresnet/datasets.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "imresnet/errors.hpp"

namespace imresnet {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& field, std::size_t line_no) {
    if (field.empty()) throw ParseError("empty field", line_no);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size() || errno == ERANGE) {
        throw ParseError("malformed number '" + field + "'", line_no);
    }
    return v;
}

}  // namespace

void LabeledSet::validate() const {
    if (inputs.size() != targets.size()) throw InvalidArgument("LabeledSet: length mismatch");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].size() != input_dim() || targets[i].size() != target_dim()) {
            throw InvalidArgument("LabeledSet: ragged row " + std::to_string(i));
        }
        if (kind == SetKind::Binary) {
            for (double t : targets[i]) {
                if (t != 0.0 && t != 1.0) throw InvalidArgument("LabeledSet: non-binary target");
            }
        }
    }
}

double regression_target(double x) {
    return std::sin(2.0 * std::numbers::pi * x) * std::exp(-0.5 * x * x);
}

SplitSets make_regression(std::uint64_t seed, std::size_t n_train, std::size_t n_val) {
    if (n_train < 1 || n_val < 1) throw InvalidArgument("make_regression: counts must be >= 1");
    SplitSets out;
    out.train.kind = SetKind::Regression;
    out.val.kind = SetKind::Regression;
    Rng rng(seed);
    for (std::size_t i = 0; i < n_train; ++i) {
        const double x = rng.uniform(-1.0, 1.0);
        out.train.inputs.push_back(Vector{x});
        out.train.targets.push_back(Vector{regression_target(x)});
    }
    for (std::size_t k = 0; k < n_val; ++k) {
        const double x = n_val == 1 ? 0.0
                                    : -1.0 + 2.0 * static_cast<double>(k) /
                                                 static_cast<double>(n_val - 1);
        out.val.inputs.push_back(Vector{x});
        out.val.targets.push_back(Vector{regression_target(x)});
    }
    return out;
}

SpiralPoint spiral_point(int label, std::size_t j, std::size_t count) {
    // 1.5 turns, radius 0.2 -> 1.0, spiral 1 rotated by pi.
    const double t = count > 1 ? static_cast<double>(j) / static_cast<double>(count - 1) : 0.0;
    const double phi = 3.0 * std::numbers::pi * t + label * std::numbers::pi;
    const double r = 0.2 + 0.8 * t;
    return {r * std::cos(phi), r * std::sin(phi), label};
}

std::vector<SpiralPoint> spiral_points(std::size_t n_total) {
    if (n_total < 4) throw InvalidArgument("make_spirals: n_total must be >= 4 (InvalidCount)");
    const std::size_t n0 = (n_total + 1) / 2;
    const std::size_t n1 = n_total / 2;
    std::vector<SpiralPoint> pts;
    pts.reserve(n_total);
    for (std::size_t j = 0; j < n0; ++j) pts.push_back(spiral_point(0, j, n0));
    for (std::size_t j = 0; j < n1; ++j) pts.push_back(spiral_point(1, j, n1));
    return pts;
}

SplitSets make_spirals(std::size_t n_total) {
    const auto pts = spiral_points(n_total);
    SplitSets out;
    out.train.kind = SetKind::Binary;
    out.val.kind = SetKind::Binary;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        LabeledSet& dst = k % 2 == 0 ? out.train : out.val;
        dst.inputs.push_back(Vector{pts[k].x0, pts[k].x1});
        dst.targets.push_back(Vector{static_cast<double>(pts[k].label)});
    }
    return out;
}

void to_csv(const LabeledSet& set, const std::filesystem::path& path) {
    set.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const std::size_t dx = set.input_dim();
    const std::size_t dy = set.target_dim();
    std::string header;
    for (std::size_t i = 0; i < dx; ++i) header += (i ? ",x" : "x") + std::to_string(i);
    for (std::size_t i = 0; i < dy; ++i) header += ",y" + std::to_string(i);
    out << header << '\n';
    for (std::size_t r = 0; r < set.size(); ++r) {
        std::string line;
        for (std::size_t i = 0; i < dx; ++i) line += (i ? "," : "") + format_double(set.inputs[r][i]);
        for (std::size_t i = 0; i < dy; ++i) line += "," + format_double(set.targets[r][i]);
        out << line << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

LabeledSet from_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.empty()) throw ParseError("missing header", 1);
    if (line.back() == '\r') line.pop_back();

    const auto header = split_commas(line);
    std::size_t dx = 0;
    std::size_t dy = 0;
    for (const auto& name : header) {
        if (name == "x" + std::to_string(dx) && dy == 0) {
            ++dx;
        } else if (name == "y" + std::to_string(dy)) {
            ++dy;
        } else {
            throw ParseError("unexpected column '" + name + "'", 1);
        }
    }
    if (dx == 0 || dy == 0) throw ParseError("header needs x and y columns", 1);

    LabeledSet set;
    bool binary = true;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_commas(line);
        if (fields.size() != dx + dy) {
            throw ParseError("expected " + std::to_string(dx + dy) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        Vector x(dx);
        Vector y(dy);
        for (std::size_t i = 0; i < dx; ++i) x[i] = parse_double(fields[i], line_no);
        for (std::size_t i = 0; i < dy; ++i) {
            y[i] = parse_double(fields[dx + i], line_no);
            binary = binary && (y[i] == 0.0 || y[i] == 1.0);
        }
        set.inputs.push_back(std::move(x));
        set.targets.push_back(std::move(y));
    }
    if (set.size() == 0) throw ParseError("no data rows", line_no);
    set.kind = binary ? SetKind::Binary : SetKind::Regression;
    return set;
}

}  // namespace imresnet
