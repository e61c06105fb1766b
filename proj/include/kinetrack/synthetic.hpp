#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "kinetrack/state_space.hpp"
#include "kinetrack/trajectory.hpp"

namespace kinetrack {

// Seeded ground-truth simulation of the state-space model. init_state is
// the t=0 state; truth row t holds z_{t+1} after t+1 propagation steps and
// observations row t holds the matching noisy position vector, so both have
// n rows. Per step the draw order is: acceleration (2 normals per entity),
// then measurement noise (2 normals per entity). Bitwise reproducible for
// a given seed.
struct SyntheticScenario {
  StackedModel model;
  int n = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd init_state;
  Eigen::MatrixXd truth;         // n x state_dim
  Eigen::MatrixXd observations;  // n x obs_dim

  TrackingSeries to_series(int entity = 0, int entity_id = 1) const;
};

SyntheticScenario simulate(const StackedModel& model, int n, std::uint64_t seed,
                           const Eigen::VectorXd& init_state);

// Exact filtered moments and observation log-density via one explicit joint
// Gaussian over all states and observations, conditioned directly. This is
// the independence oracle for the Kalman recursions and the prediction-error
// likelihood; it never runs a filter. Requires n <= 15 and a proper prior.
struct OracleResult {
  std::vector<Eigen::VectorXd> mean;  // E[z_t | obs_0..obs_t]
  std::vector<Eigen::MatrixXd> cov;   // Var[z_t | obs_0..obs_t]
  double log_density = 0.0;           // log p(all observed components)
};

OracleResult conditioning_oracle(const StackedModel& model, const Eigen::MatrixXd& observations,
                                 const Eigen::VectorXd& prior_mean,
                                 const Eigen::MatrixXd& prior_cov);

// Smooth parametric paths for VAE experiments: a straight run, a closed
// circle, or a sprint followed by a double loop and a return leg. Seeded
// variation in start point, heading, speed and radius; optional Gaussian
// position jitter.
enum class TrajectoryShape { Line, Loop, SprintAndLoop };

TrackingSeries scripted_trajectory(TrajectoryShape shape, double duration_s, std::uint64_t seed,
                                   double jitter_cm = 0.0, double dt = 0.1,
                                   const FieldSpec& field = {}, int entity_id = 1);

}  // namespace kinetrack
