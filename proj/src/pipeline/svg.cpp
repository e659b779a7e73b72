#include "odn/pipeline/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace odn::svg {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string header(double w, double h) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         num(w) + "\" height=\"" + num(h) + "\" viewBox=\"0 0 " + num(w) + " " + num(h) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 11) {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\" font-size=\"" +
         std::to_string(size) + "\">" + escape(s) + "</text>\n";
}

std::pair<double, double> finite_range(std::span<const double> v) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double x : v) {
    if (!std::isfinite(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi == lo) {
    const double pad = lo == 0.0 ? 1.0 : std::fabs(lo) * 0.05;
    return {lo - pad, hi + pad};
  }
  return {lo, hi};
}

// viridis-like ramp through five anchors
std::string colour(double t) {
  static const double anchors[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(anchors[i][0] + f * (anchors[i + 1][0] - anchors[i][0])),
                static_cast<int>(anchors[i][1] + f * (anchors[i + 1][1] - anchors[i][1])),
                static_cast<int>(anchors[i][2] + f * (anchors[i + 1][2] - anchors[i][2])));
  return buf;
}

}  // namespace

std::string escape(const std::string& s) {
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

std::string line_panels(const std::string& title, const std::string& x_label, std::span<const LinePanel> panels) {
  const double pw = 220, ph = 170, ml = 50, mt = 40, gap = 30;
  const double W = ml + panels.size() * (pw + gap) + 10, H = mt + ph + 70;
  std::string s = header(W, H);
  s += text(W / 2, 18, title, "middle", 14);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const LinePanel& panel = panels[p];
    const double x0 = ml + p * (pw + gap), y0 = mt;
    std::vector<double> ys;
    for (const Series& se : panel.series) ys.insert(ys.end(), se.y.begin(), se.y.end());
    const auto [ylo, yhi] = finite_range(ys);
    const auto [xlo, xhi] = finite_range(panel.x);
    auto X = [&](double v) { return x0 + (v - xlo) / (xhi - xlo) * pw; };
    auto Y = [&](double v) { return y0 + ph - (v - ylo) / (yhi - ylo) * ph; };
    s += "<rect x=\"" + num(x0) + "\" y=\"" + num(y0) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";
    s += text(x0 + pw / 2, y0 - 6, panel.title);
    s += text(x0 - 4, y0 + 4, tick(yhi), "end", 9) + text(x0 - 4, y0 + ph, tick(ylo), "end", 9);
    s += text(x0, y0 + ph + 12, tick(xlo), "start", 9) + text(x0 + pw, y0 + ph + 12, tick(xhi), "end", 9);
    s += text(x0 + pw / 2, y0 + ph + 26, x_label, "middle", 10);
    for (const Series& se : panel.series) {
      s += "<polyline fill=\"none\" stroke=\"" + se.color + "\" stroke-width=\"1.5\"" +
           (se.dashed ? " stroke-dasharray=\"5,3\"" : "") + " points=\"";
      for (std::size_t i = 0; i < se.y.size() && i < panel.x.size(); ++i) {
        if (!std::isfinite(se.y[i])) continue;
        s += num(X(panel.x[i])) + "," + num(Y(se.y[i])) + " ";
      }
      s += "\"/>\n";
    }
  }
  if (!panels.empty()) {
    double lx = ml;
    for (const Series& se : panels.front().series) {
      s += "<line x1=\"" + num(lx) + "\" y1=\"" + num(H - 14) + "\" x2=\"" + num(lx + 20) + "\" y2=\"" + num(H - 14) +
           "\" stroke=\"" + se.color + "\" stroke-width=\"2\"" + (se.dashed ? " stroke-dasharray=\"5,3\"" : "") + "/>\n";
      s += text(lx + 24, H - 10, se.label, "start");
      lx += 120;
    }
  }
  return s + "</svg>\n";
}

std::string heatmap_grid(const std::string& title, std::span<const HeatPanel> panels, std::size_t columns) {
  const double cell = 2.5, pad = 36, top = 40;
  std::size_t max_rows = 0, max_cols = 0;
  for (const HeatPanel& p : panels) {
    max_rows = std::max(max_rows, p.rows);
    max_cols = std::max(max_cols, p.cols);
  }
  const double pw = max_cols * cell, ph = max_rows * cell;
  const std::size_t grid_rows = (panels.size() + columns - 1) / std::max<std::size_t>(columns, 1);
  const double W = pad + columns * (pw + pad), H = top + grid_rows * (ph + pad + 14) + 10;
  std::string s = header(W, H);
  s += text(W / 2, 18, title, "middle", 14);
  for (std::size_t k = 0; k < panels.size(); ++k) {
    const HeatPanel& p = panels[k];
    const double x0 = pad + (k % columns) * (pw + pad), y0 = top + (k / columns) * (ph + pad + 14);
    s += text(x0 + pw / 2, y0 - 4, p.title, "middle", 10);
    const double span = p.hi > p.lo ? p.hi - p.lo : 1.0;
    for (std::size_t r = 0; r < p.rows; ++r) {
      for (std::size_t c = 0; c < p.cols; ++c) {
        const double v = p.values[r * p.cols + c];
        if (!std::isfinite(v)) continue;
        // row 0 is the build plate, drawn at the bottom
        s += "<rect x=\"" + num(x0 + c * cell) + "\" y=\"" + num(y0 + (p.rows - 1 - r) * cell) + "\" width=\"" +
             num(cell + 0.05) + "\" height=\"" + num(cell + 0.05) + "\" fill=\"" + colour((v - p.lo) / span) + "\"/>\n";
      }
    }
    s += "<rect x=\"" + num(x0) + "\" y=\"" + num(y0) + "\" width=\"" + num(p.cols * cell) + "\" height=\"" +
         num(p.rows * cell) + "\" fill=\"none\" stroke=\"#888\"/>\n";
    s += text(x0, y0 + ph + 11, tick(p.lo), "start", 9) + text(x0 + pw, y0 + ph + 11, tick(p.hi), "end", 9);
  }
  return s + "</svg>\n";
}

std::string histogram(const std::string& title, const std::string& x_label, std::span<const double> values,
                      std::size_t bins) {
  const double pw = 420, ph = 220, ml = 50, mt = 36;
  const double W = ml + pw + 20, H = mt + ph + 50;
  bins = std::max<std::size_t>(bins, 1);
  auto [lo, hi] = finite_range(values);
  std::vector<std::size_t> count(bins, 0);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    ++count[std::min(b, bins - 1)];
  }
  const std::size_t peak = std::max<std::size_t>(1, *std::max_element(count.begin(), count.end()));
  std::string s = header(W, H);
  s += text(W / 2, 18, title, "middle", 14);
  const double bw = pw / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double h = ph * static_cast<double>(count[b]) / static_cast<double>(peak);
    s += "<rect x=\"" + num(ml + b * bw) + "\" y=\"" + num(mt + ph - h) + "\" width=\"" + num(bw - 1) +
         "\" height=\"" + num(h) + "\" fill=\"#4a78b5\"/>\n";
  }
  s += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt + ph) + "\" x2=\"" + num(ml + pw) + "\" y2=\"" + num(mt + ph) +
       "\" stroke=\"#444\"/>\n";
  s += text(ml - 4, mt + 4, std::to_string(peak), "end", 9) + text(ml - 4, mt + ph, "0", "end", 9);
  s += text(ml, mt + ph + 12, tick(lo), "start", 9) + text(ml + pw, mt + ph + 12, tick(hi), "end", 9);
  s += text(ml + pw / 2, mt + ph + 30, x_label, "middle", 11);
  return s + "</svg>\n";
}

}  // namespace odn::svg
