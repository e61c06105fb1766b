#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "kinetrack/state_space.hpp"
#include "kinetrack/trajectory.hpp"

namespace kinetrack {

// State mean and covariance at step t. Inside a pass, `predicted` entries
// hold E[z_t | obs_{<t}] and `filtered` entries hold E[z_t | obs_{<=t}].
struct FilterState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int t = 0;
};

// Innovation delta_t = obs_t - W*Z_t with covariance F_t = W*P_t*W^T + Sigma
// and gain precursor K_t = P_t*W^T. Missing components carry NaN in delta
// and zeroed rows/columns in F and K; `observed` flags which components
// were present. The univariate pass stores its sequential scalar
// innovations here (conditional on earlier components of the same step).
struct InnovationRecord {
  Eigen::VectorXd delta;
  Eigen::MatrixXd F;
  Eigen::MatrixXd K;
  std::vector<bool> observed;
};

// Initial state distribution z_1 ~ N(mean, P_star + kappa*P_inf).
// ExactDiffuse carries the two-matrix recursion to the kappa -> infinity
// limit; LargeKappa folds the diffuse part in as kappa*P_inf up front.
// A proper prior is ExactDiffuse with P_inf = 0.
struct DiffuseInit {
  enum class Mode { ExactDiffuse, LargeKappa };

  Mode mode = Mode::ExactDiffuse;
  Eigen::VectorXd mean;
  Eigen::MatrixXd P_star;
  Eigen::MatrixXd P_inf;
  double kappa = 1e7;

  static DiffuseInit exact_diffuse(int dim);
  static DiffuseInit large_kappa(int dim, double kappa);
  static DiffuseInit proper(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);
};

// Per-step pieces of the Eq-style prediction-error log-likelihood.
// Steps processed while any diffuse uncertainty remains are flagged and
// excluded from the total.
struct LoglikTerm {
  double log_det_F = 0.0;
  double quad = 0.0;
  int p_observed = 0;
  bool diffuse = false;
};

struct FilterPassResult {
  std::vector<FilterState> predicted;   // prior at t = 0..n-1
  std::vector<FilterState> filtered;    // posterior at t = 0..n-1
  FilterState one_step_ahead;           // prior at t = n
  std::vector<InnovationRecord> innovations;
  std::vector<LoglikTerm> loglik_terms;
  int diffuse_steps = 0;       // leading steps flagged diffuse
  int max_inverted_dim = 0;    // largest linear system solved against F

  double log_likelihood() const;
};

// One combined update+predict step with a proper prior:
//   Z_{t+1} = T (Z_t + K F^-1 delta),  P_{t+1} = T (P_t - K F^-1 K^T) T^T + R Q R^T.
// NaN components of obs are treated as missing; a fully missing obs (or
// nullopt) gives the pure prediction step. Throws NumericError when F is
// numerically singular (condition estimate > 1e12).
struct StepResult {
  FilterState next;       // prior at t+1
  FilterState posterior;  // filtered state at t
  InnovationRecord innovation;
  LoglikTerm term;
};
StepResult filter_step(const StackedModel& model, const FilterState& prior,
                       const std::optional<Eigen::VectorXd>& obs);

// Batch filter over n observation rows (NaN = missing component).
FilterPassResult filter_pass(const StackedModel& model, const Eigen::MatrixXd& obs,
                             const DiffuseInit& init);
FilterPassResult filter_pass(const StackedModel& model, const Window& window,
                             const DiffuseInit& init);

// Equivalent univariate form: scalar observation components are processed
// sequentially within each time step, so no matrix larger than 1x1 is ever
// inverted. Requires diagonal Sigma, which holds by construction.
FilterPassResult univariate_filter_pass(const StackedModel& model, const Eigen::MatrixXd& obs,
                                        const DiffuseInit& init);
FilterPassResult univariate_filter_pass(const StackedModel& model, const Window& window,
                                        const DiffuseInit& init);

// CSV dump: t, entity, x, y, vx, vy and the 10 lower-triangle entries of
// the per-entity 4x4 covariance block, for the filtered sequence.
std::string filter_result_to_csv(const StackedModel& model, const FilterPassResult& result);

}  // namespace kinetrack
