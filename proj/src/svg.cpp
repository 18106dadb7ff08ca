#include "imresnet/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "imresnet/errors.hpp"

namespace imresnet::svg {

namespace {

constexpr int kMargin = 50;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render(const std::vector<Series>& series, const PlotOptions& opts) {
    auto ty = [&](double y) { return opts.log_y ? std::log10(y) : y; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!opts.log_y || y > 0.0);
    };

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.xs.size(), s.ys.size()); ++i) {
            if (!usable(s.xs[i], s.ys[i])) continue;
            xmin = std::min(xmin, s.xs[i]);
            xmax = std::max(xmax, s.xs[i]);
            ymin = std::min(ymin, ty(s.ys[i]));
            ymax = std::max(ymax, ty(s.ys[i]));
        }
    }
    if (!(xmin <= xmax)) xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;

    const double pw = opts.width - 2.0 * kMargin;
    const double ph = opts.height - 2.0 * kMargin;
    auto px = [&](double x) { return kMargin + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return kMargin + ph - (ty(y) - ymin) / (ymax - ymin) * ph; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\""
        << opts.height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << num(pw) << "\" height=\""
        << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<text x=\"" << opts.width / 2 << "\" y=\"25\" text-anchor=\"middle\" font-size=\"16\">"
        << escape(opts.title) << "</text>\n";
    out << "<text x=\"" << opts.width / 2 << "\" y=\"" << opts.height - 10
        << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(opts.x_label) << "</text>\n";
    out << "<text x=\"12\" y=\"" << opts.height / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 "
        << opts.height / 2 << ")\" text-anchor=\"middle\">" << escape(opts.y_label)
        << (opts.log_y ? " (log10)" : "") << "</text>\n";
    out << "<text x=\"" << kMargin << "\" y=\"" << opts.height - kMargin + 15 << "\" font-size=\"10\">"
        << num(xmin) << "</text>\n";
    out << "<text x=\"" << opts.width - kMargin << "\" y=\"" << opts.height - kMargin + 15
        << "\" font-size=\"10\" text-anchor=\"end\">" << num(xmax) << "</text>\n";
    out << "<text x=\"" << kMargin - 4 << "\" y=\"" << opts.height - kMargin
        << "\" font-size=\"10\" text-anchor=\"end\">" << num(ymin) << "</text>\n";
    out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin + 10
        << "\" font-size=\"10\" text-anchor=\"end\">" << num(ymax) << "</text>\n";

    int legend_y = kMargin + 15;
    for (const auto& s : series) {
        if (s.scatter) {
            for (std::size_t i = 0; i < std::min(s.xs.size(), s.ys.size()); ++i) {
                if (!usable(s.xs[i], s.ys[i])) continue;
                out << "<circle cx=\"" << num(px(s.xs[i])) << "\" cy=\"" << num(py(s.ys[i]))
                    << "\" r=\"2\" fill=\"" << s.color << "\"/>\n";
            }
        } else {
            out << "<polyline fill=\"none\" stroke-width=\"1\" stroke=\"" << s.color << "\" points=\"";
            for (std::size_t i = 0; i < std::min(s.xs.size(), s.ys.size()); ++i) {
                if (!usable(s.xs[i], s.ys[i])) continue;
                out << num(px(s.xs[i])) << ',' << num(py(s.ys[i])) << ' ';
            }
            out << "\"/>\n";
        }
        if (!s.label.empty()) {
            out << "<text x=\"" << opts.width - kMargin - 5 << "\" y=\"" << legend_y
                << "\" font-size=\"11\" text-anchor=\"end\" fill=\"" << s.color << "\">" << escape(s.label)
                << "</text>\n";
            legend_y += 14;
        }
    }
    out << "</svg>\n";
    return out.str();
}

void write(const std::filesystem::path& path, const std::vector<Series>& series, const PlotOptions& opts) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << render(series, opts);
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace imresnet::svg
