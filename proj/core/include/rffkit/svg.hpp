#pragma once

#include <string>
#include <vector>

#include "rffkit/tensor.hpp"

namespace rffkit {

// Self-contained SVG figures; CSV stays the source of truth for every plot.

// 2-D scatter, one color per class label.
void svg_scatter(const std::string& path, const Tensor& points_2d,
                 const std::vector<int>& labels, const std::string& title);

// One or more line series over shared x values.
struct LineSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};
void svg_lines(const std::string& path, const std::vector<LineSeries>& series,
               const std::string& title, const std::string& x_label, const std::string& y_label);

// Row-major count matrix as a heatmap (rows = truth).
void svg_heatmap(const std::string& path, const std::vector<std::vector<std::size_t>>& matrix,
                 const std::string& title);

// Two overlaid value distributions binned over a shared range.
void svg_histogram_pair(const std::string& path, const std::vector<double>& first,
                        const std::string& first_name, const std::vector<double>& second,
                        const std::string& second_name, const std::string& title,
                        std::size_t bins = 40);

}  // namespace rffkit
