#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace grouptraj {

// Dependency-free SVG line plotting. Output is plain text with fixed two
// decimal viewport coordinates, so renders are diffable in tests.

class SvgPlot {
public:
    SvgPlot(double width = 640.0, double height = 480.0, double margin = 40.0)
        : width_(width), height_(height), margin_(margin) {}

    void polyline(const std::vector<std::pair<double, double>>& points, const std::string& color,
                  double stroke_width = 1.0, const std::string& dash = "", double opacity = 1.0) {
        if (points.size() < 2) return;
        for (const auto& [x, y] : points) grow_bbox(x, y);
        lines_.push_back({points, color, stroke_width, dash, opacity});
    }

    void circle(double x, double y, double r, const std::string& color) {
        grow_bbox(x, y);
        circles_.push_back({x, y, r, color});
    }

    void text(double x, double y, const std::string& content) {
        grow_bbox(x, y);
        texts_.push_back({x, y, content});
    }

    std::string render() const {
        double min_x = min_x_, max_x = max_x_, min_y = min_y_, max_y = max_y_;
        if (!(min_x < max_x)) {
            min_x -= 1.0;
            max_x += 1.0;
        }
        if (!(min_y < max_y)) {
            min_y -= 1.0;
            max_y += 1.0;
        }
        const double sx = (width_ - 2 * margin_) / (max_x - min_x);
        const double sy = (height_ - 2 * margin_) / (max_y - min_y);
        auto vx = [&](double x) { return margin_ + (x - min_x) * sx; };
        auto vy = [&](double y) { return height_ - margin_ - (y - min_y) * sy; };

        std::string out;
        out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width_) +
               "\" height=\"" + fmt(height_) + "\" viewBox=\"0 0 " + fmt(width_) + " " +
               fmt(height_) + "\">\n";
        out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        for (const auto& l : lines_) {
            out += "<polyline fill=\"none\" stroke=\"" + l.color + "\" stroke-width=\"" +
                   fmt(l.stroke_width) + "\"";
            if (!l.dash.empty()) out += " stroke-dasharray=\"" + l.dash + "\"";
            if (l.opacity < 1.0) out += " stroke-opacity=\"" + fmt(l.opacity) + "\"";
            out += " points=\"";
            for (std::size_t i = 0; i < l.points.size(); ++i) {
                if (i) out += ' ';
                out += fmt(vx(l.points[i].first)) + "," + fmt(vy(l.points[i].second));
            }
            out += "\"/>\n";
        }
        for (const auto& c : circles_) {
            out += "<circle cx=\"" + fmt(vx(c.x)) + "\" cy=\"" + fmt(vy(c.y)) + "\" r=\"" +
                   fmt(c.r) + "\" fill=\"" + c.color + "\"/>\n";
        }
        for (const auto& t : texts_) {
            out += "<text x=\"" + fmt(vx(t.x)) + "\" y=\"" + fmt(vy(t.y)) +
                   "\" font-size=\"12\" font-family=\"sans-serif\">" + t.content + "</text>\n";
        }
        out += "</svg>\n";
        return out;
    }

private:
    struct Line {
        std::vector<std::pair<double, double>> points;
        std::string color;
        double stroke_width;
        std::string dash;
        double opacity;
    };
    struct Circle {
        double x, y, r;
        std::string color;
    };
    struct Text {
        double x, y;
        std::string content;
    };

    static std::string fmt(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return buf;
    }

    void grow_bbox(double x, double y) {
        min_x_ = std::min(min_x_, x);
        max_x_ = std::max(max_x_, x);
        min_y_ = std::min(min_y_, y);
        max_y_ = std::max(max_y_, y);
    }

    double width_, height_, margin_;
    double min_x_ = std::numeric_limits<double>::infinity();
    double max_x_ = -std::numeric_limits<double>::infinity();
    double min_y_ = std::numeric_limits<double>::infinity();
    double max_y_ = -std::numeric_limits<double>::infinity();
    std::vector<Line> lines_;
    std::vector<Circle> circles_;
    std::vector<Text> texts_;
};

inline const std::vector<std::string>& plot_palette() {
    static const std::vector<std::string> palette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                     "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
    return palette;
}

}  // namespace grouptraj
