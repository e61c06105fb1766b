#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace kinetrack {

// Newtonian constant-acceleration model for one entity. State is
// (x, y, vx, vy); the 2D acceleration is white noise with covariance Q
// ((cm/s^2)^2) and positions are observed with independent Gaussian noise
// of standard deviation (sigma_x, sigma_y) cm.
struct SingleEntityModel {
  double dt = 0.1;
  Eigen::Matrix4d T;               // transition [[I, dt*I], [0, I]]
  Eigen::Matrix<double, 4, 2> R;   // disturbance loading [[dt^2/2*I], [dt*I]]
  Eigen::Matrix<double, 2, 4> W;   // observation [I | 0]
  Eigen::Matrix2d Q;
  double sigma_x = 1.0;
  double sigma_y = 1.0;

  Eigen::Matrix2d Sigma() const {
    return Eigen::Vector2d(sigma_x * sigma_x, sigma_y * sigma_y).asDiagonal();
  }
};

// Block-diagonal stack of k single-entity models sharing dt. Entity i owns
// state rows [4i, 4i+4) and observation rows [2i, 2i+2); there are no
// cross-entity covariance terms.
struct StackedModel {
  std::vector<SingleEntityModel> entities;

  double dt() const { return entities.front().dt; }
  int entity_count() const { return static_cast<int>(entities.size()); }
  int state_dim() const { return 4 * entity_count(); }
  int obs_dim() const { return 2 * entity_count(); }

  Eigen::MatrixXd transition() const;
  Eigen::MatrixXd disturbance() const;  // state_dim x obs_dim
  Eigen::MatrixXd observation() const;  // obs_dim x state_dim
  Eigen::MatrixXd process_cov() const;  // obs_dim x obs_dim block-diag of Q_k
  Eigen::VectorXd noise_variances() const;  // diagonal of Sigma, length obs_dim
};

// Builds the model matrices for one entity. q must be PSD unless
// require_psd is false (the raw parameterization optimizes unconstrained
// entries and may pass through indefinite points).
SingleEntityModel build_single(double dt, const Eigen::Matrix2d& q,
                               const Eigen::Vector2d& sigma, bool require_psd = true);

// One Newtonian step: (x + dt*v + dt^2/2*a, v + dt*a).
Eigen::Vector4d propagate_state(const SingleEntityModel& model, const Eigen::Vector4d& state,
                                const Eigen::Vector2d& accel);

StackedModel stack(std::vector<SingleEntityModel> models);
StackedModel stack(const SingleEntityModel& model, int copies = 1);

// Covariance parameterizations for the optimizer.
//
// LogCholesky (default): 6 slots per entity
//   (log sigma_x, log sigma_y, log c11, c21, log c22, unused)
// where Q = C*C^T with C = [[c11, 0], [c21, c22]]; 5 free coordinates.
// Decoding any real vector yields sigma > 0 and symmetric PSD Q.
//
// Raw: 6 slots per entity (log sigma_x, log sigma_y, q11, q12, q21, q22),
// the Q entries used verbatim (row-major, possibly asymmetric).
enum class ParamMode { LogCholesky, Raw };

struct ParamVector {
  ParamMode mode = ParamMode::LogCholesky;
  Eigen::VectorXd values;  // 6 per entity

  int entity_count() const { return static_cast<int>(values.size()) / 6; }

  // Free coordinates seen by the optimizer (5 per entity in LogCholesky
  // mode, 6 in Raw mode).
  Eigen::VectorXd to_free() const;
  static ParamVector from_free(ParamMode mode, int entities, const Eigen::VectorXd& free);
  static int free_size(ParamMode mode, int entities);
};

struct DecodedParams {
  Eigen::Matrix2d Q;
  Eigen::Vector2d sigma;
};

DecodedParams decode_params(const ParamVector& p, int entity = 0);
// Throws NumericError when Q is not positive definite in LogCholesky mode.
ParamVector encode_params(const Eigen::Matrix2d& Q, const Eigen::Vector2d& sigma,
                          ParamMode mode = ParamMode::LogCholesky);

SingleEntityModel model_from_params(double dt, const ParamVector& p, int entity = 0);

// JSON round-trip for CLI use; matrix entries row-major.
std::string model_to_json(const StackedModel& model);
StackedModel model_from_json(const std::string& text);

}  // namespace kinetrack
