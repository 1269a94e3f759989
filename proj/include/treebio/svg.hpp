#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace treebio {

// ---------------------------------------------------------------------------
// Minimal standalone SVG charts: line/marker series, shaded bands, and a
// data table embedded as an XML comment so figures stay diffable. Output is
// deterministic (fixed-precision coordinates, no timestamps).
// ---------------------------------------------------------------------------

enum class Marker { circle, square, diamond, triangle, star };

class SvgChart {
public:
    SvgChart(std::string title, std::string x_label, std::string y_label)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    /// Plot x on a log10 axis (values must be positive).
    void set_log_x(bool log_x) { log_x_ = log_x; }

    void add_series(std::string name, std::vector<std::pair<double, double>> points,
                    std::string color, Marker marker, bool draw_line = true) {
        for (auto [x, y] : points) extend_range(x, y);
        series_.push_back({std::move(name), std::move(points), std::move(color), marker,
                           draw_line});
    }

    /// Shaded vertical band through (x, low, high) triples.
    void add_band(std::vector<std::array<double, 3>> points, std::string color) {
        for (auto [x, lo, hi] : points) {
            extend_range(x, lo);
            extend_range(x, hi);
        }
        bands_.push_back({std::move(points), std::move(color)});
    }

    void add_hline(double y, std::string color) {
        extend_range_y(y);
        hlines_.push_back({y, std::move(color)});
    }

    /// CSV-style table embedded as a comment at the top of the file.
    void set_data_table(std::string table) { data_table_ = std::move(table); }

    std::string render(int width = 720, int height = 460) const {
        const double ml = 70, mr = 20, mt = 40, mb = 55;
        const double pw = width - ml - mr, ph = height - mt - mb;

        double x_lo = x_min_, x_hi = x_max_, y_lo = y_min_, y_hi = y_max_;
        if (!(x_hi > x_lo)) { x_lo -= 0.5; x_hi += 0.5; }
        if (!(y_hi > y_lo)) { y_lo -= 0.5; y_hi += 0.5; }
        if (log_x_) { x_lo = std::log10(x_lo); x_hi = std::log10(x_hi); }
        // pad the y range a little so extreme points stay off the frame
        const double y_pad = 0.05 * (y_hi - y_lo);
        y_lo -= y_pad;
        y_hi += y_pad;

        auto px = [&](double x) {
            if (log_x_) x = std::log10(x);
            return ml + (x - x_lo) / (x_hi - x_lo) * pw;
        };
        auto py = [&](double y) { return mt + (y_hi - y) / (y_hi - y_lo) * ph; };

        std::string out;
        out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
               "\" height=\"" + std::to_string(height) + "\" font-family=\"sans-serif\">\n";
        if (!data_table_.empty()) {
            std::string safe = data_table_;
            // "--" may not appear inside an XML comment
            std::size_t pos;
            while ((pos = safe.find("--")) != std::string::npos) safe.replace(pos, 2, "- -");
            out += "<!-- data\n" + safe + "-->\n";
        }
        out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
               std::to_string(height) + "\" fill=\"white\"/>\n";
        out += text(ml + pw / 2, mt - 14, title_, 15, "middle");

        // frame and ticks
        out += "<rect x=\"" + num(ml) + "\" y=\"" + num(mt) + "\" width=\"" + num(pw) +
               "\" height=\"" + num(ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";
        const int n_ticks = 5;
        for (int t = 0; t <= n_ticks; ++t) {
            const double fx = x_lo + (x_hi - x_lo) * t / n_ticks;
            const double vx = log_x_ ? std::pow(10.0, fx) : fx;
            const double sx = ml + pw * t / n_ticks;
            out += "<line x1=\"" + num(sx) + "\" y1=\"" + num(mt + ph) + "\" x2=\"" + num(sx) +
                   "\" y2=\"" + num(mt + ph + 5) + "\" stroke=\"#444\"/>\n";
            out += text(sx, mt + ph + 18, label(vx), 11, "middle");

            const double fy = y_lo + (y_hi - y_lo) * t / n_ticks;
            const double sy = mt + ph - ph * t / n_ticks;
            out += "<line x1=\"" + num(ml - 5) + "\" y1=\"" + num(sy) + "\" x2=\"" + num(ml) +
                   "\" y2=\"" + num(sy) + "\" stroke=\"#444\"/>\n";
            out += text(ml - 8, sy + 4, label(fy), 11, "end");
        }
        out += text(ml + pw / 2, static_cast<double>(height) - 12, x_label_, 13, "middle");
        out += "<text x=\"16\" y=\"" + num(mt + ph / 2) + "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
               num(mt + ph / 2) + ")\">" + escape(y_label_) + "</text>\n";

        for (const auto& band : bands_) {
            if (band.points.empty()) continue;
            std::string path = "M";
            for (const auto& p : band.points)
                path += " " + num(px(p[0])) + " " + num(py(p[1]));
            for (auto it = band.points.rbegin(); it != band.points.rend(); ++it)
                path += " L " + num(px((*it)[0])) + " " + num(py((*it)[2]));
            path += " Z";
            out += "<path d=\"" + path + "\" fill=\"" + band.color +
                   "\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
        }
        for (const auto& line : hlines_) {
            out += "<line x1=\"" + num(ml) + "\" y1=\"" + num(py(line.y)) + "\" x2=\"" +
                   num(ml + pw) + "\" y2=\"" + num(py(line.y)) + "\" stroke=\"" + line.color +
                   "\" stroke-dasharray=\"4 3\"/>\n";
        }
        for (const auto& s : series_) {
            if (s.draw_line && s.points.size() > 1) {
                std::string pts;
                for (auto [x, y] : s.points)
                    pts += num(px(x)) + "," + num(py(y)) + " ";
                out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + s.color +
                       "\" stroke-width=\"1.5\"/>\n";
            }
            for (auto [x, y] : s.points) out += marker_svg(s.marker, px(x), py(y), s.color);
        }

        // legend
        double ly = mt + 14;
        for (const auto& s : series_) {
            if (s.name.empty()) continue;
            out += marker_svg(s.marker, ml + pw - 120, ly - 4, s.color);
            out += text(ml + pw - 110, ly, s.name, 12, "start");
            ly += 16;
        }
        out += "</svg>\n";
        return out;
    }

private:
    struct Series {
        std::string name;
        std::vector<std::pair<double, double>> points;
        std::string color;
        Marker marker;
        bool draw_line;
    };
    struct Band {
        std::vector<std::array<double, 3>> points;
        std::string color;
    };
    struct HLine {
        double y;
        std::string color;
    };

    static std::string num(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return buf;
    }

    static std::string label(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4g", v);
        return buf;
    }

    static std::string escape(const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '<') out += "&lt;";
            else if (c == '>') out += "&gt;";
            else if (c == '&') out += "&amp;";
            else out.push_back(c);
        }
        return out;
    }

    static std::string text(double x, double y, const std::string& content, int size,
                            const char* anchor) {
        return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" +
               std::to_string(size) + "\" text-anchor=\"" + anchor + "\">" + escape(content) +
               "</text>\n";
    }

    static std::string marker_svg(Marker m, double x, double y, const std::string& color) {
        const double r = 3.5;
        switch (m) {
            case Marker::circle:
                return "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) +
                       "\" fill=\"" + color + "\"/>\n";
            case Marker::square:
                return "<rect x=\"" + num(x - r) + "\" y=\"" + num(y - r) + "\" width=\"" +
                       num(2 * r) + "\" height=\"" + num(2 * r) + "\" fill=\"" + color + "\"/>\n";
            case Marker::diamond:
                return polygon({{x, y - r * 1.3}, {x + r * 1.3, y}, {x, y + r * 1.3},
                                {x - r * 1.3, y}},
                               color);
            case Marker::triangle:
                return polygon({{x, y - r * 1.3}, {x + r * 1.2, y + r}, {x - r * 1.2, y + r}},
                               color);
            case Marker::star: {
                std::vector<std::pair<double, double>> pts;
                for (int i = 0; i < 10; ++i) {
                    const double rad = (i % 2 == 0) ? r * 1.6 : r * 0.7;
                    const double ang = -M_PI / 2 + i * M_PI / 5;
                    pts.emplace_back(x + rad * std::cos(ang), y + rad * std::sin(ang));
                }
                return polygon(pts, color);
            }
        }
        return {};
    }

    static std::string polygon(const std::vector<std::pair<double, double>>& pts,
                               const std::string& color) {
        std::string out = "<polygon points=\"";
        for (auto [x, y] : pts) out += num(x) + "," + num(y) + " ";
        out += "\" fill=\"" + color + "\"/>\n";
        return out;
    }

    void extend_range(double x, double y) {
        x_min_ = std::min(x_min_, x);
        x_max_ = std::max(x_max_, x);
        extend_range_y(y);
    }
    void extend_range_y(double y) {
        y_min_ = std::min(y_min_, y);
        y_max_ = std::max(y_max_, y);
    }

    std::string title_, x_label_, y_label_;
    bool log_x_ = false;
    std::vector<Series> series_;
    std::vector<Band> bands_;
    std::vector<HLine> hlines_;
    std::string data_table_;
    double x_min_ = std::numeric_limits<double>::infinity();
    double x_max_ = -std::numeric_limits<double>::infinity();
    double y_min_ = std::numeric_limits<double>::infinity();
    double y_max_ = -std::numeric_limits<double>::infinity();
};

}  // namespace treebio
