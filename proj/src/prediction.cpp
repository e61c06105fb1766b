#include "kinetrack/prediction.hpp"

#include <cmath>

#include "kinetrack/errors.hpp"

namespace kinetrack {

namespace {
constexpr double kZ95 = 1.959963984540054;  // two-sided 95% normal quantile
}

std::vector<PredictionStep> predict_k(const StackedModel& model, const FilterState& state, int k) {
  if (k < 1) throw NumericError("predict_k: k must be >= 1");
  const Eigen::MatrixXd T = model.transition();
  Eigen::MatrixXd R = model.disturbance();
  const Eigen::MatrixXd RQR = R * model.process_cov() * R.transpose();

  std::vector<PredictionStep> out;
  out.reserve(k);
  Eigen::VectorXd z = state.mean;
  Eigen::MatrixXd p = state.cov;
  for (int h = 1; h <= k; ++h) {
    z = T * z;
    p = T * p * T.transpose() + RQR;
    p = 0.5 * (p + p.transpose()).eval();

    PredictionStep step;
    step.state = {z, p, state.t + h};
    step.entities.reserve(model.entity_count());
    for (int e = 0; e < model.entity_count(); ++e) {
      Prediction pr;
      pr.horizon = h;
      pr.mean = z.segment<2>(4 * e);
      pr.cov = p.block<2, 2>(4 * e, 4 * e);
      const double hx = kZ95 * std::sqrt(std::max(pr.cov(0, 0), 0.0));
      const double hy = kZ95 * std::sqrt(std::max(pr.cov(1, 1), 0.0));
      pr.x_lo = pr.mean.x() - hx;
      pr.x_hi = pr.mean.x() + hx;
      pr.y_lo = pr.mean.y() - hy;
      pr.y_hi = pr.mean.y() + hy;
      step.entities.push_back(pr);
    }
    out.push_back(std::move(step));
  }
  return out;
}

KinematicsSeries kinematics(const std::vector<FilterState>& states, int entity_count) {
  if (states.empty()) throw NumericError("kinematics: empty state sequence");
  KinematicsSeries out;
  const int n = static_cast<int>(states.size());
  out.velocity.resize(n, 2 * entity_count);
  out.speed.resize(n, entity_count);
  for (int t = 0; t < n; ++t) {
    for (int e = 0; e < entity_count; ++e) {
      const Eigen::Vector2d v = states[t].mean.segment<2>(4 * e + 2);
      out.velocity(t, 2 * e) = v.x();
      out.velocity(t, 2 * e + 1) = v.y();
      out.speed(t, e) = v.norm();
    }
  }
  return out;
}

}  // namespace kinetrack
