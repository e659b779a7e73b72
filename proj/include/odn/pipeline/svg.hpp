#pragma once

#include <span>
#include <string>
#include <vector>

namespace odn::svg {

struct Series {
  std::string label;
  std::vector<double> y;
  std::string color;
  bool dashed = false;
};

struct LinePanel {
  std::string title;
  std::vector<double> x;
  std::vector<Series> series;
};

/// Panels laid out left to right, one shared legend.
std::string line_panels(const std::string& title, const std::string& x_label, std::span<const LinePanel> panels);

struct HeatPanel {
  std::string title;
  std::vector<double> values;  // row-major, NaN draws nothing
  std::size_t rows = 0, cols = 0;
  double lo = 0.0, hi = 1.0;
};

/// Grid of heatmaps, `columns` per row, each with its own colour range.
std::string heatmap_grid(const std::string& title, std::span<const HeatPanel> panels, std::size_t columns);

/// Equal-width bins between min and max of the finite values.
std::string histogram(const std::string& title, const std::string& x_label, std::span<const double> values,
                      std::size_t bins = 20);

std::string escape(const std::string& text);

}  // namespace odn::svg
