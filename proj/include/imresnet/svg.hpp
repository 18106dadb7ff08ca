#pragma once

// Minimal SVG line/scatter plots for quick inspection of CSV outputs.

#include <filesystem>
#include <string>
#include <vector>

namespace imresnet::svg {

struct Series {
    std::string label;
    std::vector<double> xs;
    std::vector<double> ys;
    std::string color = "#1f77b4";
    bool scatter = false;
};

struct PlotOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    int width = 640;
    int height = 480;
};

// Non-finite points (and non-positive ones on a log axis) are skipped.
std::string render(const std::vector<Series>& series, const PlotOptions& opts);
void write(const std::filesystem::path& path, const std::vector<Series>& series, const PlotOptions& opts);

}  // namespace imresnet::svg
