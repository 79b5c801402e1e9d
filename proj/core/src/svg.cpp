#include "rffkit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "rffkit/common.hpp"

namespace rffkit {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kMargin = 56;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!(hi > lo)) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double m = 0.05 * (hi - lo);
        lo -= m;
        hi += m;
    }
    double to_px(double v, double px_lo, double px_hi) const {
        return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo);
    }
};

std::ofstream open_svg(const std::string& path, const std::string& title) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"15\">" << title << "</text>\n";
    return f;
}

void draw_axes(std::ofstream& f, const std::string& x_label, const std::string& y_label,
               const Range& xr, const Range& yr) {
    f << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kWidth - 2 * kMargin
      << "\" height=\"" << kHeight - 2 * kMargin
      << "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                  "font-size=\"12\">%s</text>\n",
                  kWidth / 2, kHeight - 12, x_label.c_str());
    f << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"14\" y=\"%d\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                  "font-size=\"12\" transform=\"rotate(-90 14 %d)\">%s</text>\n",
                  kHeight / 2, kHeight / 2, y_label.c_str());
    f << buf;
    // Corner tick labels are enough for a reference figure.
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"10\">%.3g</text>\n",
                  kMargin, kHeight - kMargin + 14, xr.lo);
    f << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" text-anchor=\"end\" font-family=\"sans-serif\" "
                  "font-size=\"10\">%.3g</text>\n",
                  kWidth - kMargin, kHeight - kMargin + 14, xr.hi);
    f << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" text-anchor=\"end\" font-family=\"sans-serif\" "
                  "font-size=\"10\">%.3g</text>\n",
                  kMargin - 4, kHeight - kMargin, yr.lo);
    f << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" text-anchor=\"end\" font-family=\"sans-serif\" "
                  "font-size=\"10\">%.3g</text>\n",
                  kMargin - 4, kMargin + 10, yr.hi);
    f << buf;
}

}  // namespace

void svg_scatter(const std::string& path, const Tensor& points_2d, const std::vector<int>& labels,
                 const std::string& title) {
    if (points_2d.rank() != 2 || points_2d.dim(1) < 2)
        throw ValidationError("scatter needs n x 2 points");
    Range xr, yr;
    const std::size_t n = points_2d.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
        xr.add(points_2d.at2(i, 0));
        yr.add(points_2d.at2(i, 1));
    }
    xr.pad();
    yr.pad();
    auto f = open_svg(path, title);
    draw_axes(f, "component 1", "component 2", xr, yr);
    for (std::size_t i = 0; i < n; ++i) {
        const int lbl = i < labels.size() ? labels[i] : 0;
        const char* color = kPalette[static_cast<std::size_t>(std::max(0, lbl)) % kPaletteSize];
        char buf[160];
        std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"%s\" "
                                        "fill-opacity=\"0.7\"/>\n",
                      xr.to_px(points_2d.at2(i, 0), kMargin, kWidth - kMargin),
                      yr.to_px(points_2d.at2(i, 1), kHeight - kMargin, kMargin), color);
        f << buf;
    }
    f << "</svg>\n";
}

void svg_lines(const std::string& path, const std::vector<LineSeries>& series,
               const std::string& title, const std::string& x_label, const std::string& y_label) {
    if (series.empty()) throw ValidationError("no series to plot");
    Range xr, yr;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw ValidationError("series length mismatch");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xr.add(s.x[i]);
            yr.add(s.y[i]);
        }
    }
    xr.pad();
    yr.pad();
    auto f = open_svg(path, title);
    draw_axes(f, x_label, y_label, xr, yr);
    for (std::size_t si = 0; si < series.size(); ++si) {
        const char* color = kPalette[si % kPaletteSize];
        f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[si].x.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ",
                          xr.to_px(series[si].x[i], kMargin, kWidth - kMargin),
                          yr.to_px(series[si].y[i], kHeight - kMargin, kMargin));
            f << buf;
        }
        f << "\"/>\n";
        char buf[192];
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%d\" y=\"%zu\" font-family=\"sans-serif\" font-size=\"11\" "
                      "fill=\"%s\">%s</text>\n",
                      kWidth - kMargin - 120, kMargin + 16 + 14 * si, color,
                      series[si].name.c_str());
        f << buf;
    }
    f << "</svg>\n";
}

void svg_heatmap(const std::string& path, const std::vector<std::vector<std::size_t>>& matrix,
                 const std::string& title) {
    if (matrix.empty()) throw ValidationError("empty heatmap");
    const std::size_t rows = matrix.size();
    const std::size_t cols = matrix[0].size();
    std::size_t mx = 1;
    for (const auto& row : matrix)
        for (auto v : row) mx = std::max(mx, v);
    auto f = open_svg(path, title);
    const double cell_w = static_cast<double>(kWidth - 2 * kMargin) / static_cast<double>(cols);
    const double cell_h = static_cast<double>(kHeight - 2 * kMargin) / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double frac = static_cast<double>(matrix[r][c]) / static_cast<double>(mx);
            const int shade = static_cast<int>(255.0 * (1.0 - frac));
            char buf[256];
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" "
                          "fill=\"rgb(%d,%d,255)\" stroke=\"#ccc\"/>\n",
                          kMargin + cell_w * static_cast<double>(c),
                          kMargin + cell_h * static_cast<double>(r), cell_w, cell_h, shade, shade);
            f << buf;
            std::snprintf(buf, sizeof(buf),
                          "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\" "
                          "font-family=\"sans-serif\" font-size=\"11\" fill=\"%s\">%zu</text>\n",
                          kMargin + cell_w * (static_cast<double>(c) + 0.5),
                          kMargin + cell_h * (static_cast<double>(r) + 0.5) + 4.0,
                          frac > 0.6 ? "#fff" : "#000", matrix[r][c]);
            f << buf;
        }
    }
    f << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">prediction</text>\n"
      << "<text x=\"14\" y=\"" << kHeight / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 14 " << kHeight / 2 << ")\">truth</text>\n</svg>\n";
}

void svg_histogram_pair(const std::string& path, const std::vector<double>& first,
                        const std::string& first_name, const std::vector<double>& second,
                        const std::string& second_name, const std::string& title,
                        std::size_t bins) {
    if (first.empty() && second.empty()) throw ValidationError("empty histogram input");
    Range vr;
    for (double v : first) vr.add(v);
    for (double v : second) vr.add(v);
    vr.pad();
    std::vector<std::size_t> h1(bins, 0), h2(bins, 0);
    auto fill = [&](const std::vector<double>& vals, std::vector<std::size_t>& h) {
        for (double v : vals) {
            auto b = static_cast<std::size_t>((v - vr.lo) / (vr.hi - vr.lo) *
                                              static_cast<double>(bins));
            h[std::min(b, bins - 1)] += 1;
        }
    };
    fill(first, h1);
    fill(second, h2);
    std::size_t mx = 1;
    for (std::size_t b = 0; b < bins; ++b) mx = std::max({mx, h1[b], h2[b]});

    Range yr;
    yr.add(0.0);
    yr.add(static_cast<double>(mx));
    yr.pad();
    auto f = open_svg(path, title);
    draw_axes(f, "distance", "count", vr, yr);
    const double bw = static_cast<double>(kWidth - 2 * kMargin) / static_cast<double>(bins);
    auto draw = [&](const std::vector<std::size_t>& h, const char* color) {
        for (std::size_t b = 0; b < bins; ++b) {
            if (h[b] == 0) continue;
            const double top = yr.to_px(static_cast<double>(h[b]), kHeight - kMargin, kMargin);
            char buf[192];
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"%s\" "
                          "fill-opacity=\"0.45\"/>\n",
                          kMargin + bw * static_cast<double>(b), top, bw,
                          static_cast<double>(kHeight - kMargin) - top, color);
            f << buf;
        }
    };
    draw(h1, "#d62728");
    draw(h2, "#1f77b4");
    char buf[192];
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\" "
                  "fill=\"#d62728\">%s</text>\n",
                  kWidth - kMargin - 120, kMargin + 16, first_name.c_str());
    f << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\" "
                  "fill=\"#1f77b4\">%s</text>\n",
                  kWidth - kMargin - 120, kMargin + 30, second_name.c_str());
    f << buf;
    f << "</svg>\n";
}

}  // namespace rffkit
