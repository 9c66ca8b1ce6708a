#pragma once

// Minimal SVG charts: one or more series on linear or log10 axes.

#include <optional>
#include <string>
#include <vector>

namespace manid {

struct SvgSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool lines = true;
    bool points = true;
};

struct SvgMarker {
    double x = 0.0;  // vertical dashed line at x
    std::string label;
};

struct SvgChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    double width = 640.0;
    double height = 420.0;
    std::vector<SvgSeries> series;
    std::vector<SvgMarker> markers;
};

/// Non-positive values are dropped on a log axis.
std::string render_svg(const SvgChart& chart);

}  // namespace manid
