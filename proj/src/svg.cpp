#include "kinetrack/svg.hpp"

#include <algorithm>
#include <cstdio>

namespace kinetrack {

namespace {
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}
}  // namespace

SvgCanvas::SvgCanvas(double x_min, double x_max, double y_min, double y_max, int width_px)
    : x_min_(x_min), x_max_(x_max), y_min_(y_min), y_max_(y_max), width_px_(width_px) {
  const double aspect = (y_max - y_min) / (x_max - x_min);
  height_px_ = static_cast<int>(width_px * aspect);
}

double SvgCanvas::to_px_x(double x) const {
  return (x - x_min_) / (x_max_ - x_min_) * width_px_;
}

double SvgCanvas::to_px_y(double y) const {
  return height_px_ - (y - y_min_) / (y_max_ - y_min_) * height_px_;
}

void SvgCanvas::polyline(const std::vector<Eigen::Vector2d>& pts, const std::string& color,
                         double stroke_width, double opacity) {
  if (pts.empty()) return;
  body_ += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" +
           fmt(stroke_width) + "\" stroke-opacity=\"" + fmt(opacity) + "\" points=\"";
  for (const auto& p : pts) body_ += fmt(to_px_x(p.x())) + "," + fmt(to_px_y(p.y())) + " ";
  body_ += "\"/>\n";
}

void SvgCanvas::circle(const Eigen::Vector2d& center, double radius_px, const std::string& color,
                       double opacity) {
  body_ += "<circle cx=\"" + fmt(to_px_x(center.x())) + "\" cy=\"" + fmt(to_px_y(center.y())) +
           "\" r=\"" + fmt(radius_px) + "\" fill=\"" + color + "\" fill-opacity=\"" +
           fmt(opacity) + "\"/>\n";
}

void SvgCanvas::rect(double x_lo, double x_hi, double y_lo, double y_hi,
                     const std::string& color, double stroke_width) {
  body_ += "<rect x=\"" + fmt(to_px_x(x_lo)) + "\" y=\"" + fmt(to_px_y(y_hi)) + "\" width=\"" +
           fmt(to_px_x(x_hi) - to_px_x(x_lo)) + "\" height=\"" +
           fmt(to_px_y(y_lo) - to_px_y(y_hi)) + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"" + fmt(stroke_width) + "\"/>\n";
}

void SvgCanvas::frame(const std::string& color) {
  body_ += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width_px_) + "\" height=\"" +
           std::to_string(height_px_) + "\" fill=\"none\" stroke=\"" + color + "\"/>\n";
}

void SvgCanvas::title(const std::string& text) {
  body_ += "<text x=\"8\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">" + text +
           "</text>\n";
}

std::string SvgCanvas::finish() const {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width_px_) +
         "\" height=\"" + std::to_string(height_px_) + "\" viewBox=\"0 0 " +
         std::to_string(width_px_) + " " + std::to_string(height_px_) + "\">\n" + body_ +
         "</svg>\n";
}

std::string svg_trajectories(const std::vector<std::vector<Eigen::Vector2d>>& series,
                             const std::vector<std::string>& colors, const FieldSpec& field,
                             const std::string& title) {
  SvgCanvas canvas(field.x_min, field.x_max, field.y_min, field.y_max);
  canvas.frame();
  for (std::size_t i = 0; i < series.size(); ++i)
    canvas.polyline(series[i], colors.empty() ? "#1f77b4" : colors[i % colors.size()]);
  if (!title.empty()) canvas.title(title);
  return canvas.finish();
}

std::string svg_series(const std::vector<double>& values, const std::string& color,
                       const std::string& title) {
  double lo = 0.0, hi = 1.0;
  if (!values.empty()) {
    lo = *std::min_element(values.begin(), values.end());
    hi = *std::max_element(values.begin(), values.end());
    if (hi <= lo) hi = lo + 1.0;
  }
  SvgCanvas canvas(0.0, static_cast<double>(std::max<std::size_t>(values.size(), 2) - 1),
                   lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo), 900);
  canvas.frame();
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    pts.emplace_back(static_cast<double>(i), values[i]);
  canvas.polyline(pts, color);
  if (!title.empty()) canvas.title(title);
  return canvas.finish();
}

}  // namespace kinetrack
