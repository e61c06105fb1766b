#pragma once

#include <Eigen/Dense>
#include <vector>

#include "kinetrack/kalman.hpp"
#include "kinetrack/state_space.hpp"

namespace kinetrack {

// k-step-ahead position forecast for one entity, with the 95% prediction
// rectangle [x_lo, x_hi] x [y_lo, y_hi] built from per-coordinate 1.96-sigma
// intervals. Field coordinates (cm), never normalized units.
struct Prediction {
  int horizon = 1;
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;

  bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= x_lo && p.x() <= x_hi && p.y() >= y_lo && p.y() <= y_hi;
  }
};

// Forecast state at each horizon along with per-entity position predictions.
struct PredictionStep {
  FilterState state;
  std::vector<Prediction> entities;
};

// Iterates Z <- T*Z, P <- T*P*T^T + R*Q*R^T for k steps from `state`
// (no measurement updates) and extracts the position block through W.
std::vector<PredictionStep> predict_k(const StackedModel& model, const FilterState& state, int k);

// Velocity and speed series extracted from filter state means.
struct KinematicsSeries {
  Eigen::MatrixXd velocity;  // n x (2*entities)
  Eigen::MatrixXd speed;     // n x entities
};

KinematicsSeries kinematics(const std::vector<FilterState>& states, int entity_count);

}  // namespace kinetrack
