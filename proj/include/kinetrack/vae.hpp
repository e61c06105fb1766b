#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace kinetrack {

// Single-hidden-layer VAE over flattened unit-square trajectories
// (x_1, y_1, ..., x_{k/2}, y_{k/2}).
struct VaeConfig {
  int k = 100;           // data dimension (trajectory length * 2)
  int d = 10;            // latent dimension
  int h = 400;           // hidden width
  double sigma_x = 0.15; // decoder noise scale
  std::uint64_t seed = 0;
};

// Encoder: x -> relu(enc_w x + enc_b) -> (mu_w ., log_sigma_w .) with
// sigma_z = exp(log_sigma_w h_e); the two heads are linear (no bias).
// Decoder: z -> relu(dec_w z + dec_b) -> sigmoid(out_w h_d + out_b).
struct VaeParams {
  VaeConfig config;
  Eigen::MatrixXd enc_w;        // h x k
  Eigen::VectorXd enc_b;        // h
  Eigen::MatrixXd mu_w;         // d x h
  Eigen::MatrixXd log_sigma_w;  // d x h
  Eigen::MatrixXd dec_w;        // h x d
  Eigen::VectorXd dec_b;        // h
  Eigen::MatrixXd out_w;        // k x h
  Eigen::VectorXd out_b;        // k
};

// Zero weights and biases (mu = 0, sigma = 1 everywhere).
VaeParams zero_params(const VaeConfig& config);
// Seeded Glorot-uniform weights, zero biases.
VaeParams init_params(const VaeConfig& config);

Eigen::VectorXd encoder_mu(const VaeParams& params, const Eigen::VectorXd& x);
Eigen::VectorXd encoder_sigma(const VaeParams& params, const Eigen::VectorXd& x);

// z = mu_z(x) + sigma_z(x) .* epsilon
Eigen::VectorXd encode(const VaeParams& params, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& epsilon);
// mu_x(z) + sigma_x * omega; the omega = 0 output lies strictly in (0,1)^k.
Eigen::VectorXd decode(const VaeParams& params, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& omega);

// KL(N(mu, diag(sigma^2)) || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - 1 - log sigma^2).
double kl_diag_gaussian(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma);

// Training objective:
//   J = 1/(2 sigma_x^2) ||x - mu_x(Enc(x, eps))||^2 + KL(mu_z(x), sigma_z(x)).
double loss(const VaeParams& params, const Eigen::VectorXd& x, const Eigen::VectorXd& epsilon);

struct LossParts {
  double total = 0.0;
  double reconstruction = 0.0;  // weighted quadratic term
  double kl = 0.0;
};
LossParts loss_parts(const VaeParams& params, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& epsilon);

struct VaeGradient {
  Eigen::MatrixXd enc_w;
  Eigen::VectorXd enc_b;
  Eigen::MatrixXd mu_w;
  Eigen::MatrixXd log_sigma_w;
  Eigen::MatrixXd dec_w;
  Eigen::VectorXd dec_b;
  Eigen::MatrixXd out_w;
  Eigen::VectorXd out_b;
};

// Exact reverse-mode gradient of `loss` for one example.
std::pair<double, VaeGradient> loss_gradient(const VaeParams& params, const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& epsilon);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 0.001;  // RMSProp defaults
  double decay = 0.9;
  double epsilon = 1e-7;
};

struct TrainResult {
  VaeParams params;
  std::vector<double> epoch_loss;   // mean J per epoch
  std::vector<double> epoch_recon;  // mean weighted reconstruction term
  std::vector<double> epoch_kl;     // mean KL term
};

// Minibatch RMSProp with a fresh standard-normal epsilon per example per
// step, drawn from the seeded generator. Deterministic given config.seed.
// Throws NumericError (naming epoch and batch) if the loss goes non-finite.
TrainResult train(const std::vector<Eigen::VectorXd>& dataset, const VaeConfig& config,
                  const TrainConfig& train_config = {});

// Zero-noise generation and reconstruction.
Eigen::VectorXd generate(const VaeParams& params, const Eigen::VectorXd& z);
Eigen::VectorXd reconstruct(const VaeParams& params, const Eigen::VectorXd& x);

// JSON round-trip including config and seed; matrices row-major.
std::string vae_to_json(const VaeParams& params);
VaeParams vae_from_json(const std::string& text);

}  // namespace kinetrack
