#include "manid/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace manid {

namespace {

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    std::ostringstream o;
    o.precision(4);
    o << v;
    return o.str();
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    }
};

}  // namespace

std::string render_svg(const SvgChart& chart) {
    const double left = 70, right = 20, top = 40, bottom = 55;
    const double pw = chart.width - left - right, ph = chart.height - top - bottom;
    auto ty = [&](double y) { return chart.log_y ? std::log10(y) : y; };
    auto usable = [&](double y) { return std::isfinite(y) && (!chart.log_y || y > 0.0); };

    Range rx, ry;
    for (const auto& s : chart.series)
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            if (usable(s.y[i]) && std::isfinite(s.x[i])) {
                rx.add(s.x[i]);
                ry.add(ty(s.y[i]));
            }
    for (const auto& m : chart.markers) rx.add(m.x);
    rx.finish();
    ry.finish();
    if (chart.log_y) ry.lo = std::floor(ry.lo), ry.hi = std::ceil(ry.hi);
    auto px = [&](double x) { return left + (x - rx.lo) / (rx.hi - rx.lo) * pw; };
    auto py = [&](double y) { return top + (1.0 - (ty(y) - ry.lo) / (ry.hi - ry.lo)) * ph; };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << chart.width << "\" height=\"" << chart.height
      << "\" viewBox=\"0 0 " << chart.width << ' ' << chart.height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << chart.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(chart.title)
      << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

    // y ticks: decades on a log axis, five steps otherwise
    std::vector<double> yt;
    if (chart.log_y) {
        const int step = std::max(1, static_cast<int>(std::ceil((ry.hi - ry.lo) / 8.0)));
        for (int e = static_cast<int>(ry.lo); e <= static_cast<int>(ry.hi); e += step) yt.push_back(std::pow(10.0, e));
    } else {
        for (int i = 0; i <= 5; ++i) yt.push_back(ry.lo + (ry.hi - ry.lo) * i / 5.0);
    }
    for (double v : yt) {
        const double y = py(v);
        o << "<line x1=\"" << left - 4 << "\" y1=\"" << y << "\" x2=\"" << left << "\" y2=\"" << y << "\" stroke=\"black\"/>";
        o << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
    }
    for (int i = 0; i <= 5; ++i) {
        const double v = rx.lo + (rx.hi - rx.lo) * i / 5.0, x = px(v);
        o << "<line x1=\"" << x << "\" y1=\"" << top + ph << "\" x2=\"" << x << "\" y2=\"" << top + ph + 4
          << "\" stroke=\"black\"/>";
        o << "<text x=\"" << x << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << num(v) << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << chart.height - 12 << "\" text-anchor=\"middle\">"
      << escape(chart.x_label) << "</text>\n";
    o << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << top + ph / 2
      << ")\">" << escape(chart.y_label) << "</text>\n";

    for (const auto& m : chart.markers) {
        const double x = px(m.x);
        o << "<line class=\"marker\" x1=\"" << x << "\" y1=\"" << top << "\" x2=\"" << x << "\" y2=\"" << top + ph
          << "\" stroke=\"#d62728\" stroke-dasharray=\"5,4\"/>";
        o << "<text x=\"" << x + 4 << "\" y=\"" << top + 12 << "\" fill=\"#d62728\">" << escape(m.label) << "</text>\n";
    }

    double legend_y = top + 14;
    for (const auto& s : chart.series) {
        std::ostringstream path;
        bool first = true;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!usable(s.y[i])) continue;
            path << (first ? "M" : " L") << px(s.x[i]) << ',' << py(s.y[i]);
            first = false;
        }
        if (s.lines && !first)
            o << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"/>\n";
        if (s.points)
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
                if (usable(s.y[i]))
                    o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << s.color
                      << "\"/>\n";
        if (!s.label.empty()) {
            o << "<rect x=\"" << left + pw - 130 << "\" y=\"" << legend_y - 8 << "\" width=\"10\" height=\"10\" fill=\""
              << s.color << "\"/><text x=\"" << left + pw - 115 << "\" y=\"" << legend_y + 1 << "\">" << escape(s.label)
              << "</text>\n";
            legend_y += 16;
        }
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace manid
