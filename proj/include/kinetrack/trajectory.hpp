#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kinetrack {

// Pitch rectangle in centimeters, origin at the center of the field.
struct FieldSpec {
  double x_min = -5250.0;
  double x_max = 5250.0;
  double y_min = -3400.0;
  double y_max = 3400.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool contains(const Eigen::Vector2d& p, double slack_cm = 0.0) const {
    return p.x() >= x_min - slack_cm && p.x() <= x_max + slack_cm &&
           p.y() >= y_min - slack_cm && p.y() <= y_max + slack_cm;
  }
};

// Per-entity time series of 2D positions sampled every dt seconds.
// Sample i corresponds to time i*dt; an empty optional means the entity
// was not on the pitch at that frame.
struct TrackingSeries {
  int entity_id = 0;  // 0 = ball, 1-11 home, 12-22 away
  double dt = 0.1;
  std::vector<std::optional<Eigen::Vector2d>> samples;

  std::size_t size() const { return samples.size(); }
};

// Gap-free run of positions starting at a given sample index.
struct Window {
  int start_index = 0;
  std::vector<Eigen::Vector2d> points;

  std::size_t length() const { return points.size(); }
  // Rows are (x, y) per step, for handing to the filter.
  Eigen::MatrixXd as_matrix() const;
};

// Parses `frame,entity_id,x_cm,y_cm` CSV. All returned series share length
// max_frame+1; frames absent for an entity become missing samples. Points
// outside the field by more than slack_cm are rejected with the line number.
// Throws DataError on malformed rows, duplicate (entity, frame) pairs, or
// frames out of order.
std::vector<TrackingSeries> parse_tracking_csv(std::istream& in, const FieldSpec& field = {},
                                               double dt = 0.1, double slack_cm = 100.0);
std::vector<TrackingSeries> parse_tracking_csv(const std::string& text, const FieldSpec& field = {},
                                               double dt = 0.1, double slack_cm = 100.0);

// Inverse of parse_tracking_csv; missing samples produce no row.
std::string serialize_tracking_csv(const std::vector<TrackingSeries>& series);

// All length-`length` stride-1 windows inside maximal gap-free stretches.
// Returns an empty vector when no stretch is long enough.
std::vector<Window> sliding_windows(const TrackingSeries& series, int length);

Eigen::Vector2d normalize_point(const Eigen::Vector2d& p, const FieldSpec& field);
Eigen::Vector2d denormalize_point(const Eigen::Vector2d& p, const FieldSpec& field);

// Affine map of every sample onto [0,1]^2. Throws DataError on a point
// outside the field. denormalize_unit is its exact inverse.
TrackingSeries normalize_unit(const TrackingSeries& series, const FieldSpec& field);
TrackingSeries denormalize_unit(const TrackingSeries& series, const FieldSpec& field);

}  // namespace kinetrack
