#pragma once

// Minimal SVG rendering for modal maps and feature-space partition maps.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <string>
#include <vector>

#include "modalml/cart.hpp"
#include "modalml/error.hpp"

namespace modalml::svg {

/// Group colors: the first five follow the 3-bus legend roles (VSC currents,
/// VSC controllers, SG mechanics, SG exciter, SG currents).
inline const std::array<const char*, 10> palette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline const char* group_color(std::size_t g) { return palette[g % palette.size()]; }

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

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

/// Roughly n evenly spaced round tick values covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi, int n = 6) {
    if (!(hi > lo)) return {lo};
    const double raw = (hi - lo) / n;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step)
        out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    return out;
}

class Plot {
public:
    Plot(double x0, double x1, double y0, double y1, std::string title, std::string xlabel, std::string ylabel,
         double width = 720, double height = 540, double right_margin = 190)
        : x0_(x0), x1_(x1), y0_(y0), y1_(y1), w_(width), h_(height), right_(right_margin) {
        if (!(x1_ > x0_)) x1_ = x0_ + 1.0;
        if (!(y1_ > y0_)) y1_ = y0_ + 1.0;
        body_ += "<text x=\"" + num(w_ / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" + escape(title) +
                 "</text>\n";
        body_ += "<text x=\"" + num(left_ + pw() / 2) + "\" y=\"" + num(h_ - 12) +
                 "\" text-anchor=\"middle\" font-size=\"13\">" + escape(xlabel) + "</text>\n";
        body_ += "<text x=\"16\" y=\"" + num(top_ + ph() / 2) + "\" text-anchor=\"middle\" font-size=\"13\" " +
                 "transform=\"rotate(-90 16 " + num(top_ + ph() / 2) + ")\">" + escape(ylabel) + "</text>\n";
    }

    double px(double x) const { return left_ + (x - x0_) / (x1_ - x0_) * pw(); }
    double py(double y) const { return top_ + ph() - (y - y0_) / (y1_ - y0_) * ph(); }
    double pw() const { return w_ - left_ - right_; }
    double ph() const { return h_ - top_ - bottom_; }
    double legend_x() const { return w_ - right_ + 16; }

    void raw(const std::string& s) { body_ += s; }

    std::string finish() const {
        std::string axes = "<rect x=\"" + num(left_) + "\" y=\"" + num(top_) + "\" width=\"" + num(pw()) +
                           "\" height=\"" + num(ph()) + "\" fill=\"none\" stroke=\"#000\"/>\n";
        for (double t : nice_ticks(x0_, x1_)) {
            axes += "<line x1=\"" + num(px(t)) + "\" y1=\"" + num(top_ + ph()) + "\" x2=\"" + num(px(t)) + "\" y2=\"" +
                    num(top_ + ph() + 5) + "\" stroke=\"#000\"/>\n";
            axes += "<text x=\"" + num(px(t)) + "\" y=\"" + num(top_ + ph() + 18) +
                    "\" text-anchor=\"middle\" font-size=\"11\">" + label(t) + "</text>\n";
        }
        for (double t : nice_ticks(y0_, y1_)) {
            axes += "<line x1=\"" + num(left_ - 5) + "\" y1=\"" + num(py(t)) + "\" x2=\"" + num(left_) + "\" y2=\"" +
                    num(py(t)) + "\" stroke=\"#000\"/>\n";
            axes += "<text x=\"" + num(left_ - 8) + "\" y=\"" + num(py(t) + 4) +
                    "\" text-anchor=\"end\" font-size=\"11\">" + label(t) + "</text>\n";
        }
        return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
               num(w_) + "\" height=\"" + num(h_) + "\" viewBox=\"0 0 " + num(w_) + " " + num(h_) +
               "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n" + body_ +
               axes + "</svg>\n";
    }

private:
    double x0_, x1_, y0_, y1_, w_, h_, right_;
    double left_ = 70, top_ = 40, bottom_ = 50;
    std::string body_;
};

struct PoleMarker {
    std::complex<double> pole;
    std::size_t group;  ///< leading participating group (color)
    bool exact;         ///< cross when exact, circle when predicted
};

inline std::string cross(double x, double y, const char* color) {
    const double r = 4.0;
    return "<path class=\"exact\" d=\"M" + num(x - r) + " " + num(y - r) + "L" + num(x + r) + " " + num(y + r) + "M" +
           num(x - r) + " " + num(y + r) + "L" + num(x + r) + " " + num(y - r) + "\" stroke=\"" + color +
           "\" stroke-width=\"1.5\" fill=\"none\"/>\n";
}

inline std::string circle(double x, double y, const char* color) {
    return "<circle class=\"predicted\" cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"4.5\" stroke=\"" + color +
           "\" stroke-width=\"1.3\" fill=\"none\"/>\n";
}

/// Complex-plane scatter: one marker element per pole, crosses for exact and
/// circles for predicted poles, colored by participating group.
inline std::string modal_map(const std::vector<PoleMarker>& markers, const std::vector<std::string>& groups,
                             const std::string& title) {
    double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    bool first = true;
    for (const auto& m : markers) {
        if (!std::isfinite(m.pole.real()) || !std::isfinite(m.pole.imag())) continue;
        if (first) {
            x0 = x1 = m.pole.real();
            y0 = y1 = m.pole.imag();
            first = false;
        }
        x0 = std::min(x0, m.pole.real());
        x1 = std::max(x1, m.pole.real());
        y0 = std::min(y0, m.pole.imag());
        y1 = std::max(y1, m.pole.imag());
    }
    x1 = std::max(x1, 0.0);
    const double dx = 0.05 * std::max(x1 - x0, 1.0), dy = 0.05 * std::max(y1 - y0, 1.0);
    Plot plot(x0 - dx, x1 + dx, y0 - dy, y1 + dy, title, "Re(lambda) [1/s]", "Im(lambda) [rad/s]");
    for (const auto& m : markers) {
        const double x = plot.px(m.pole.real()), y = plot.py(m.pole.imag());
        plot.raw(m.exact ? cross(x, y, group_color(m.group)) : circle(x, y, group_color(m.group)));
    }
    double ly = 60;
    for (std::size_t g = 0; g < groups.size(); ++g, ly += 20) {
        plot.raw("<rect x=\"" + num(plot.legend_x()) + "\" y=\"" + num(ly - 9) + "\" width=\"12\" height=\"12\" fill=\"" +
                 group_color(g) + "\"/>\n");
        plot.raw("<text x=\"" + num(plot.legend_x() + 18) + "\" y=\"" + num(ly + 1) + "\" font-size=\"12\">" +
                 escape(groups[g]) + "</text>\n");
    }
    ly += 10;
    plot.raw("<text x=\"" + num(plot.legend_x()) + "\" y=\"" + num(ly) + "\" font-size=\"12\">x exact</text>\n");
    plot.raw("<text x=\"" + num(plot.legend_x()) + "\" y=\"" + num(ly + 18) + "\" font-size=\"12\">o predicted</text>\n");
    return plot.finish();
}

/// Viridis-like color ramp for t in [0, 1].
inline std::string ramp(double t) {
    static const double stops[5][3] = {
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * 4.0;
    const int i = std::min(3, int(t));
    const double w = t - i;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", int(std::lround(stops[i][0] + w * (stops[i + 1][0] - stops[i][0]))),
                  int(std::lround(stops[i][1] + w * (stops[i + 1][1] - stops[i][1]))),
                  int(std::lround(stops[i][2] + w * (stops[i + 1][2] - stops[i][2]))));
    return buf;
}

/// Feature-space partition: one filled rectangle per region, with a color bar.
inline std::string partition_map(const std::vector<cart::Region>& regions, const std::string& xlabel,
                                 const std::string& ylabel, const std::string& title) {
    if (regions.empty()) throw DomainError("partition_map: no regions");
    double x0 = regions[0].rect.x0, x1 = regions[0].rect.x1, y0 = regions[0].rect.y0, y1 = regions[0].rect.y1;
    double v0 = regions[0].value, v1 = v0;
    for (const auto& r : regions) {
        x0 = std::min(x0, r.rect.x0);
        x1 = std::max(x1, r.rect.x1);
        y0 = std::min(y0, r.rect.y0);
        y1 = std::max(y1, r.rect.y1);
        v0 = std::min(v0, r.value);
        v1 = std::max(v1, r.value);
    }
    Plot plot(x0, x1, y0, y1, title, xlabel, ylabel, 720, 540, 150);
    const double span = v1 > v0 ? v1 - v0 : 1.0;
    for (const auto& r : regions) {
        const double px0 = plot.px(r.rect.x0), px1 = plot.px(r.rect.x1);
        const double py0 = plot.py(r.rect.y1), py1 = plot.py(r.rect.y0);
        plot.raw("<rect class=\"region\" x=\"" + num(px0) + "\" y=\"" + num(py0) + "\" width=\"" + num(px1 - px0) +
                 "\" height=\"" + num(py1 - py0) + "\" fill=\"" + ramp((r.value - v0) / span) +
                 "\" stroke=\"#fff\" stroke-width=\"0.4\"><title>" + label(r.value) + "</title></rect>\n");
    }
    const double bx = plot.legend_x(), by = 60, bh = 300;
    for (int s = 0; s < 50; ++s)
        plot.raw("<rect x=\"" + num(bx) + "\" y=\"" + num(by + bh * (49 - s) / 50.0) + "\" width=\"18\" height=\"" +
                 num(bh / 50.0 + 0.5) + "\" fill=\"" + ramp(s / 49.0) + "\"/>\n");
    plot.raw("<text x=\"" + num(bx + 24) + "\" y=\"" + num(by + 8) + "\" font-size=\"11\">" + label(v1) + "</text>\n");
    plot.raw("<text x=\"" + num(bx + 24) + "\" y=\"" + num(by + bh) + "\" font-size=\"11\">" + label(v0) + "</text>\n");
    return plot.finish();
}

} // namespace modalml::svg
