#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "kinetrack/kalman.hpp"
#include "kinetrack/state_space.hpp"
#include "kinetrack/trajectory.hpp"

namespace kinetrack {

// Prediction-error log-likelihood of the observation block under the model:
//   l = -1/2 * sum_t (p_t log 2pi + log det F_t + delta_t^T F_t^-1 delta_t)
// over non-diffuse steps, with p_t the number of observed components.
double log_likelihood(const StackedModel& model, const Eigen::MatrixXd& obs,
                      const DiffuseInit& init);
double log_likelihood(const StackedModel& model, const Window& window, const DiffuseInit& init);

struct FitConfig {
  ParamMode mode = ParamMode::LogCholesky;
  DiffuseInit::Mode init_mode = DiffuseInit::Mode::ExactDiffuse;
  double kappa = 1e7;          // used by the LargeKappa init
  double grad_tol = 1e-6;      // infinity norm of the finite-difference gradient
  int max_iterations = 200;
  double fd_step = 1e-5;       // central-difference step per coordinate
};

struct FitResult {
  ParamVector params;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
};

// Maximizes the window log-likelihood over covariance parameters with BFGS
// on the free coordinates, central finite-difference gradients and a
// backtracking Armijo line search. Returns the best parameters seen even
// when the line search stalls. Window length must be >= 5.
FitResult fit_mle(const Window& window, double dt, const ParamVector& start,
                  const FitConfig& config = {});
FitResult fit_mle(const Eigen::MatrixXd& obs, double dt, const ParamVector& start,
                  const FitConfig& config = {});

// Default cold start: Q = 100*I (cm/s^2)^2, sigma = (30, 30) cm.
ParamVector default_start(ParamMode mode = ParamMode::LogCholesky);

struct WindowEstimate {
  int start = 0;               // first sample index of the window
  bool ok = false;             // false when the fit threw; other fields empty
  FitResult fit;
  std::vector<Eigen::Vector4d> filtered_mean;
  std::vector<Eigen::Matrix4d> filtered_cov;
  Eigen::Vector4d predicted_state;   // one-step-ahead state after the window
  Eigen::Matrix4d predicted_cov;
  Eigen::Vector2d predicted_position;
};

struct SlidingConfig {
  FitConfig fit;
  bool warm_start = false;  // start each window from the previous optimum
  int window_length = 10;
};

struct WindowEstimates {
  std::vector<WindowEstimate> windows;
  int failed = 0;
};

// The per-window outer/inner iteration: for every stride-1 window, maximize
// the likelihood, run the filter, and predict one step past the window.
// Failed windows are flagged and skipped, never fatal.
WindowEstimates sliding_window_fit(const TrackingSeries& series, const SlidingConfig& config = {});

// Minimal BFGS with Armijo backtracking, exposed for reuse and testing.
struct BfgsOptions {
  double grad_tol = 1e-6;
  int max_iterations = 200;
  double fd_step = 1e-5;
};
struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
};
// Minimizes f; non-finite values are treated as +infinity (rejected by the
// line search). Throws NumericError if f is non-finite at x0.
BfgsResult bfgs_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& x0, const BfgsOptions& options);

}  // namespace kinetrack
