#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kinetrack/trajectory.hpp"

namespace kinetrack {

// Minimal SVG chart builder. Data coordinates are mapped into a fixed-size
// canvas; y grows upward like the pitch, not like screen space.
class SvgCanvas {
public:
  SvgCanvas(double x_min, double x_max, double y_min, double y_max, int width_px = 900);

  void polyline(const std::vector<Eigen::Vector2d>& pts, const std::string& color,
                double stroke_width = 1.5, double opacity = 1.0);
  void circle(const Eigen::Vector2d& center, double radius_px, const std::string& color,
              double opacity = 1.0);
  void rect(double x_lo, double x_hi, double y_lo, double y_hi, const std::string& color,
            double stroke_width = 1.0);
  void frame(const std::string& color = "#888");
  void title(const std::string& text);

  std::string finish() const;

private:
  double to_px_x(double x) const;
  double to_px_y(double y) const;

  double x_min_, x_max_, y_min_, y_max_;
  int width_px_, height_px_;
  std::string body_;
};

// Overlay of one series per entry; colors cycle if fewer than series.
std::string svg_trajectories(const std::vector<std::vector<Eigen::Vector2d>>& series,
                             const std::vector<std::string>& colors, const FieldSpec& field,
                             const std::string& title = "");

// Simple line chart of values against their index.
std::string svg_series(const std::vector<double>& values, const std::string& color,
                       const std::string& title = "");

}  // namespace kinetrack
