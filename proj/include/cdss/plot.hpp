#pragma once

// Static SVG line charts for series, distance traces and predictions.

#include "cdss/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace cdss::plot {

struct Line {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    double width = 1.0;
    bool dashed = false;
};

struct Marker {
    double x = 0.0;
    std::string color = "#000000";
    bool dashed = false;
};

struct Panel {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Line> lines;
    std::vector<Marker> markers;  // vertical lines across the panel
};

inline const std::vector<std::string>& palette() {
    static const std::vector<std::string> p{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return p;
}

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
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

/// Round step (1, 2 or 5 times a power of ten) giving about `n` ticks.
inline double nice_step(double span, int n) {
    if (!(span > 0.0)) return 1.0;
    const double raw = span / n;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * mag;
}

}  // namespace detail

/// Renders panels stacked vertically into one SVG document.
inline std::string render(const std::vector<Panel>& panels, int width = 960, int panel_height = 260) {
    const double left = 70, right = 150, top = 30, bottom = 45;
    const int height = panel_height * static_cast<int>(panels.size());
    std::string svg = concat("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"", width, "\" height=\"", height,
                             "\" viewBox=\"0 0 ", width, " ", height, "\" font-family=\"sans-serif\" font-size=\"11\">\n",
                             "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const Panel& panel = panels[p];
        const double y0 = static_cast<double>(p) * panel_height;
        const double pw = width - left - right, ph = panel_height - top - bottom;
        double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
        for (const auto& l : panel.lines) {
            for (double v : l.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
            for (double v : l.y)
                if (std::isfinite(v)) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
        }
        for (const auto& m : panel.markers) xmin = std::min(xmin, m.x), xmax = std::max(xmax, m.x);
        if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
        if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
        if (xmax <= xmin) xmax = xmin + 1;
        if (ymax <= ymin) ymin -= 0.5, ymax += 0.5;
        const double pad = 0.05 * (ymax - ymin);
        ymin -= pad;
        ymax += pad;
        auto sx = [&](double v) { return left + (v - xmin) / (xmax - xmin) * pw; };
        auto sy = [&](double v) { return y0 + top + (1.0 - (v - ymin) / (ymax - ymin)) * ph; };

        svg += concat("<text x=\"", detail::num(left), "\" y=\"", detail::num(y0 + 18), "\" font-size=\"13\">",
                      detail::escape(panel.title), "</text>\n");
        svg += concat("<rect x=\"", detail::num(left), "\" y=\"", detail::num(y0 + top), "\" width=\"", detail::num(pw),
                      "\" height=\"", detail::num(ph), "\" fill=\"none\" stroke=\"#444\"/>\n");
        const double xs = detail::nice_step(xmax - xmin, 8), ys = detail::nice_step(ymax - ymin, 5);
        for (double v = std::ceil(xmin / xs) * xs; v <= xmax + 1e-9 * xs; v += xs)
            svg += concat("<line x1=\"", detail::num(sx(v)), "\" y1=\"", detail::num(y0 + top + ph), "\" x2=\"",
                          detail::num(sx(v)), "\" y2=\"", detail::num(y0 + top + ph + 4), "\" stroke=\"#444\"/>",
                          "<text x=\"", detail::num(sx(v)), "\" y=\"", detail::num(y0 + top + ph + 16),
                          "\" text-anchor=\"middle\">", detail::tick(v), "</text>\n");
        for (double v = std::ceil(ymin / ys) * ys; v <= ymax + 1e-9 * ys; v += ys)
            svg += concat("<line x1=\"", detail::num(left - 4), "\" y1=\"", detail::num(sy(v)), "\" x2=\"",
                          detail::num(left), "\" y2=\"", detail::num(sy(v)), "\" stroke=\"#444\"/>", "<text x=\"",
                          detail::num(left - 6), "\" y=\"", detail::num(sy(v) + 4), "\" text-anchor=\"end\">",
                          detail::tick(std::abs(v) < 1e-12 * ys ? 0.0 : v), "</text>\n");
        svg += concat("<text x=\"", detail::num(left + pw / 2), "\" y=\"", detail::num(y0 + panel_height - 8),
                      "\" text-anchor=\"middle\">", detail::escape(panel.x_label), "</text>\n");
        svg += concat("<text transform=\"translate(14,", detail::num(y0 + top + ph / 2),
                      ") rotate(-90)\" text-anchor=\"middle\">", detail::escape(panel.y_label), "</text>\n");
        for (const auto& l : panel.lines) {
            std::string pts;
            for (std::size_t i = 0; i < l.x.size() && i < l.y.size(); ++i) {
                if (!std::isfinite(l.y[i])) continue;
                if (!pts.empty()) pts += ' ';
                pts += detail::num(sx(l.x[i])) + "," + detail::num(sy(l.y[i]));
            }
            svg += concat("<polyline fill=\"none\" stroke=\"", l.color, "\" stroke-width=\"", detail::num(l.width), "\"",
                          l.dashed ? " stroke-dasharray=\"5,3\"" : "", " points=\"", pts, "\"/>\n");
        }
        for (const auto& m : panel.markers)
            svg += concat("<line x1=\"", detail::num(sx(m.x)), "\" y1=\"", detail::num(y0 + top), "\" x2=\"",
                          detail::num(sx(m.x)), "\" y2=\"", detail::num(y0 + top + ph), "\" stroke=\"", m.color,
                          "\" stroke-width=\"1.5\"", m.dashed ? " stroke-dasharray=\"6,4\"" : "", "/>\n");
        double ly = y0 + top + 10;
        for (const auto& l : panel.lines) {
            if (l.label.empty()) continue;
            svg += concat("<line x1=\"", detail::num(left + pw + 10), "\" y1=\"", detail::num(ly), "\" x2=\"",
                          detail::num(left + pw + 30), "\" y2=\"", detail::num(ly), "\" stroke=\"", l.color,
                          "\" stroke-width=\"2\"", l.dashed ? " stroke-dasharray=\"5,3\"" : "", "/>", "<text x=\"",
                          detail::num(left + pw + 34), "\" y=\"", detail::num(ly + 4), "\">", detail::escape(l.label),
                          "</text>\n");
            ly += 15;
        }
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace cdss::plot
