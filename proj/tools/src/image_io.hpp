#pragma once

#include <string>
#include <vector>

#include "igan/tensor.hpp"

namespace igan {

// Tiles N images (NHWC, [-1,1], 1 or 3 channels) into a grid and writes a
// binary PPM. cols <= 0 picks the closest square layout.
void write_image_grid(const std::string& path, const Tensor<float>& images, long cols = 0);

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

// Standalone SVG line chart with axes, ticks and a legend.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  long column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

}  // namespace igan
