#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace carebandit::svg {

inline constexpr int kWidth = 960;
inline constexpr int kHeight = 540;

inline const std::array<const char*, 12>& palette() {
    static const std::array<const char*, 12> colors = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                                       "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};
    return colors;
}

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    // Optional shaded band; empty when absent.
    std::vector<double> lower;
    std::vector<double> upper;
};

struct Panel {
    std::string title;
    std::vector<Series> series;
};

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

/// Rounds a span up to a 1/2/5 x 10^k tick step.
inline double nice_step(double span, int ticks) {
    if (!(span > 0.0)) return 1.0;
    const double raw = span / ticks;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) return m * mag;
    return 10.0 * mag;
}

/// Renders panels on a fixed 960x540 canvas with linear axes. Series colours
/// follow the global series order across panels. Lines are thinned to at
/// most `max_points` vertices by a fixed stride.
inline std::string render(const std::string& title, const std::vector<Panel>& panels, int columns = 1,
                          std::size_t max_points = 500) {
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) + "\" height=\"" +
           std::to_string(kHeight) + "\" viewBox=\"0 0 " + std::to_string(kWidth) + " " + std::to_string(kHeight) +
           "\">\n";
    out += "<rect x=\"0\" y=\"0\" width=\"960\" height=\"540\" fill=\"#ffffff\"/>\n";
    out += "<text x=\"480\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
           escape(title) + "</text>\n";

    columns = std::max(1, columns);
    const int rows = static_cast<int>((panels.size() + static_cast<std::size_t>(columns) - 1) / static_cast<std::size_t>(columns));
    const double cell_w = static_cast<double>(kWidth) / columns;
    const double cell_h = (kHeight - 34.0) / std::max(1, rows);
    std::size_t color_index = 0;

    for (std::size_t p = 0; p < panels.size(); ++p) {
        const auto& panel = panels[p];
        const double ox = static_cast<double>(p % static_cast<std::size_t>(columns)) * cell_w;
        const double oy = 34.0 + static_cast<double>(p / static_cast<std::size_t>(columns)) * cell_h;
        const double left = ox + 56.0, right = ox + cell_w - 16.0;
        const double top = oy + 22.0, bottom = oy + cell_h - 36.0;

        double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
        bool first = true;
        for (const auto& s : panel.series)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                const double hi = s.upper.empty() ? s.y[i] : std::max(s.y[i], s.upper[i]);
                const double lo = s.lower.empty() ? s.y[i] : std::min(s.y[i], s.lower[i]);
                if (first) {
                    x_min = x_max = s.x[i];
                    y_min = lo;
                    y_max = hi;
                    first = false;
                }
                x_min = std::min(x_min, s.x[i]);
                x_max = std::max(x_max, s.x[i]);
                y_min = std::min(y_min, lo);
                y_max = std::max(y_max, hi);
            }
        y_min = std::min(y_min, 0.0);
        const double y_step = nice_step(y_max - y_min, 5);
        y_max = std::max(y_min + y_step, std::ceil(y_max / y_step) * y_step);
        if (x_max <= x_min) x_max = x_min + 1.0;
        auto sx = [&](double x) { return left + (x - x_min) / (x_max - x_min) * (right - left); };
        auto sy = [&](double y) { return bottom - (y - y_min) / (y_max - y_min) * (bottom - top); };

        out += "<g class=\"panel\">\n";
        out += "<text x=\"" + num((left + right) / 2) + "\" y=\"" + num(oy + 14.0) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + escape(panel.title) + "</text>\n";
        out += "<line x1=\"" + num(left) + "\" y1=\"" + num(bottom) + "\" x2=\"" + num(right) + "\" y2=\"" + num(bottom) +
               "\" stroke=\"#000000\"/>\n";
        out += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(bottom) +
               "\" stroke=\"#000000\"/>\n";
        for (double y = y_min; y <= y_max + 1e-9; y += y_step) {
            out += "<text x=\"" + num(left - 4) + "\" y=\"" + num(sy(y) + 4) +
                   "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + num(y) + "</text>\n";
        }
        const double x_step = nice_step(x_max - x_min, 5);
        for (double x = std::ceil(x_min / x_step) * x_step; x <= x_max + 1e-9; x += x_step) {
            out += "<text x=\"" + num(sx(x)) + "\" y=\"" + num(bottom + 14) +
                   "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" + num(x) + "</text>\n";
        }
        out += "<text x=\"" + num((left + right) / 2) + "\" y=\"" + num(bottom + 28) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">step</text>\n";

        double legend_y = top + 10.0;
        for (const auto& s : panel.series) {
            const std::string color = palette()[color_index++ % palette().size()];
            const std::size_t n = s.x.size();
            const std::size_t stride = std::max<std::size_t>(1, (n + max_points - 1) / max_points);
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
            if (n > 0 && idx.back() != n - 1) idx.push_back(n - 1);

            if (!s.lower.empty() && !s.upper.empty()) {
                out += "<polygon class=\"band\" fill=\"" + color + "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
                for (auto i : idx) out += num(sx(s.x[i])) + "," + num(sy(s.upper[i])) + " ";
                for (auto it = idx.rbegin(); it != idx.rend(); ++it) out += num(sx(s.x[*it])) + "," + num(sy(s.lower[*it])) + " ";
                out += "\"/>\n";
            }
            out += "<polyline class=\"series\" data-label=\"" + escape(s.label) + "\" fill=\"none\" stroke=\"" + color +
                   "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t k = 0; k < idx.size(); ++k) {
                if (k) out += ' ';
                out += num(sx(s.x[idx[k]])) + "," + num(sy(s.y[idx[k]]));
            }
            out += "\"/>\n";

            out += "<g class=\"legend\"><line x1=\"" + num(left + 8) + "\" y1=\"" + num(legend_y) + "\" x2=\"" +
                   num(left + 26) + "\" y2=\"" + num(legend_y) + "\" stroke=\"" + color +
                   "\" stroke-width=\"2\"/><text x=\"" + num(left + 30) + "\" y=\"" + num(legend_y + 4) +
                   "\" font-family=\"sans-serif\" font-size=\"10\">" + escape(s.label) + "</text></g>\n";
            legend_y += 13.0;
        }
        out += "</g>\n";
    }
    out += "</svg>\n";
    return out;
}

}  // namespace carebandit::svg
