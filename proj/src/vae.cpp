#include "kinetrack/vae.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "kinetrack/errors.hpp"
#include "kinetrack/rng.hpp"

namespace kinetrack {

namespace {

void check_config(const VaeConfig& c) {
  if (c.k < 1 || c.d < 1 || c.h < 1) throw NumericError("vae: k, d, h must be >= 1");
  if (c.sigma_x <= 0.0) throw NumericError("vae: sigma_x must be positive");
}

Eigen::VectorXd relu(const Eigen::VectorXd& v) { return v.cwiseMax(0.0); }

Eigen::VectorXd sigmoid(const Eigen::VectorXd& v) {
  return v.unaryExpr([](double a) { return 1.0 / (1.0 + std::exp(-a)); });
}

void check_dim(const Eigen::VectorXd& v, int expected, const char* name) {
  if (v.size() != expected)
    throw NumericError(std::string("vae: ") + name + " has dimension " +
                       std::to_string(v.size()) + ", expected " + std::to_string(expected));
}

// Everything the backward pass needs from one forward evaluation.
struct Forward {
  Eigen::VectorXd pre_enc, h_e;      // encoder hidden
  Eigen::VectorXd mu, ell, sigma;    // latent heads, sigma = exp(ell)
  Eigen::VectorXd z;
  Eigen::VectorXd pre_dec, h_d;      // decoder hidden
  Eigen::VectorXd y;                 // sigmoid output mu_x
  double recon = 0.0, kl = 0.0;
};

Forward forward(const VaeParams& p, const Eigen::VectorXd& x, const Eigen::VectorXd& eps) {
  check_dim(x, p.config.k, "x");
  check_dim(eps, p.config.d, "epsilon");
  Forward f;
  f.pre_enc = p.enc_w * x + p.enc_b;
  f.h_e = relu(f.pre_enc);
  f.mu = p.mu_w * f.h_e;
  f.ell = p.log_sigma_w * f.h_e;
  f.sigma = f.ell.array().exp();
  f.z = f.mu + f.sigma.cwiseProduct(eps);
  f.pre_dec = p.dec_w * f.z + p.dec_b;
  f.h_d = relu(f.pre_dec);
  f.y = sigmoid(p.out_w * f.h_d + p.out_b);
  const double w = 1.0 / (2.0 * p.config.sigma_x * p.config.sigma_x);
  f.recon = w * (x - f.y).squaredNorm();
  f.kl = 0.5 * (f.mu.squaredNorm() + f.sigma.squaredNorm() - p.config.d -
                2.0 * f.ell.sum());
  return f;
}

}  // namespace

VaeParams zero_params(const VaeConfig& config) {
  check_config(config);
  VaeParams p;
  p.config = config;
  p.enc_w = Eigen::MatrixXd::Zero(config.h, config.k);
  p.enc_b = Eigen::VectorXd::Zero(config.h);
  p.mu_w = Eigen::MatrixXd::Zero(config.d, config.h);
  p.log_sigma_w = Eigen::MatrixXd::Zero(config.d, config.h);
  p.dec_w = Eigen::MatrixXd::Zero(config.h, config.d);
  p.dec_b = Eigen::VectorXd::Zero(config.h);
  p.out_w = Eigen::MatrixXd::Zero(config.k, config.h);
  p.out_b = Eigen::VectorXd::Zero(config.k);
  return p;
}

namespace {

void glorot_fill(Eigen::MatrixXd& w, Pcg32& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = bound * (2.0 * rng.next_unit() - 1.0);
}

}  // namespace

VaeParams init_params(const VaeConfig& config) {
  VaeParams p = zero_params(config);
  Pcg32 rng(config.seed);
  glorot_fill(p.enc_w, rng);
  glorot_fill(p.mu_w, rng);
  glorot_fill(p.log_sigma_w, rng);
  glorot_fill(p.dec_w, rng);
  glorot_fill(p.out_w, rng);
  return p;
}

Eigen::VectorXd encoder_mu(const VaeParams& params, const Eigen::VectorXd& x) {
  check_dim(x, params.config.k, "x");
  return params.mu_w * relu(params.enc_w * x + params.enc_b);
}

Eigen::VectorXd encoder_sigma(const VaeParams& params, const Eigen::VectorXd& x) {
  check_dim(x, params.config.k, "x");
  return (params.log_sigma_w * relu(params.enc_w * x + params.enc_b)).array().exp();
}

Eigen::VectorXd encode(const VaeParams& params, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& epsilon) {
  check_dim(epsilon, params.config.d, "epsilon");
  return encoder_mu(params, x) + encoder_sigma(params, x).cwiseProduct(epsilon);
}

Eigen::VectorXd decode(const VaeParams& params, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& omega) {
  check_dim(z, params.config.d, "z");
  check_dim(omega, params.config.k, "omega");
  const Eigen::VectorXd mu_x =
      sigmoid(params.out_w * relu(params.dec_w * z + params.dec_b) + params.out_b);
  return mu_x + params.config.sigma_x * omega;
}

double kl_diag_gaussian(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma) {
  if (mu.size() != sigma.size()) throw NumericError("kl_diag_gaussian: dimension mismatch");
  if ((sigma.array() <= 0.0).any())
    throw NumericError("kl_diag_gaussian: sigma must be positive");
  const auto s2 = sigma.array().square();
  return 0.5 * (mu.array().square() + s2 - 1.0 - s2.log()).sum();
}

double loss(const VaeParams& params, const Eigen::VectorXd& x, const Eigen::VectorXd& epsilon) {
  const Forward f = forward(params, x, epsilon);
  return f.recon + f.kl;
}

LossParts loss_parts(const VaeParams& params, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& epsilon) {
  const Forward f = forward(params, x, epsilon);
  return {f.recon + f.kl, f.recon, f.kl};
}

namespace {

VaeGradient backward(const VaeParams& p, const Forward& f, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& eps) {
  const double w = 1.0 / (2.0 * p.config.sigma_x * p.config.sigma_x);

  VaeGradient g;
  // Reconstruction path through the decoder.
  const Eigen::VectorXd d_y = -2.0 * w * (x - f.y);
  const Eigen::VectorXd d_pre_out =
      d_y.cwiseProduct(f.y.cwiseProduct(Eigen::VectorXd::Ones(f.y.size()) - f.y));
  g.out_w = d_pre_out * f.h_d.transpose();
  g.out_b = d_pre_out;
  const Eigen::VectorXd d_h_d = p.out_w.transpose() * d_pre_out;
  const Eigen::VectorXd d_pre_dec =
      d_h_d.cwiseProduct((f.pre_dec.array() > 0.0).cast<double>().matrix());
  g.dec_w = d_pre_dec * f.z.transpose();
  g.dec_b = d_pre_dec;
  const Eigen::VectorXd d_z = p.dec_w.transpose() * d_pre_dec;

  // Reparameterization plus the KL term.
  const Eigen::VectorXd d_mu = d_z + f.mu;
  const Eigen::VectorXd d_ell =
      (d_z.cwiseProduct(eps) + f.sigma).cwiseProduct(f.sigma) - Eigen::VectorXd::Ones(f.mu.size());
  g.mu_w = d_mu * f.h_e.transpose();
  g.log_sigma_w = d_ell * f.h_e.transpose();
  const Eigen::VectorXd d_h_e = p.mu_w.transpose() * d_mu + p.log_sigma_w.transpose() * d_ell;
  const Eigen::VectorXd d_pre_enc =
      d_h_e.cwiseProduct((f.pre_enc.array() > 0.0).cast<double>().matrix());
  g.enc_w = d_pre_enc * x.transpose();
  g.enc_b = d_pre_enc;
  return g;
}

}  // namespace

std::pair<double, VaeGradient> loss_gradient(const VaeParams& params, const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& epsilon) {
  const Forward f = forward(params, x, epsilon);
  return {f.recon + f.kl, backward(params, f, x, epsilon)};
}

namespace {

// Applies one RMSProp update to a parameter block.
void rmsprop_update(Eigen::MatrixXd& param, Eigen::MatrixXd& acc, const Eigen::MatrixXd& grad,
                    const TrainConfig& tc) {
  acc = tc.decay * acc + (1.0 - tc.decay) * grad.cwiseProduct(grad);
  param -= tc.learning_rate *
           grad.cwiseQuotient(acc.cwiseSqrt() + Eigen::MatrixXd::Constant(
                                                    acc.rows(), acc.cols(), tc.epsilon));
}

void rmsprop_update(Eigen::VectorXd& param, Eigen::VectorXd& acc, const Eigen::VectorXd& grad,
                    const TrainConfig& tc) {
  acc = tc.decay * acc + (1.0 - tc.decay) * grad.cwiseProduct(grad);
  param -= tc.learning_rate *
           grad.cwiseQuotient(acc.cwiseSqrt() +
                              Eigen::VectorXd::Constant(acc.size(), tc.epsilon));
}

}  // namespace

TrainResult train(const std::vector<Eigen::VectorXd>& dataset, const VaeConfig& config,
                  const TrainConfig& tc) {
  check_config(config);
  if (dataset.empty()) throw NumericError("vae train: empty dataset");
  for (const auto& x : dataset) {
    check_dim(x, config.k, "dataset point");
    if ((x.array() < 0.0).any() || (x.array() > 1.0).any())
      throw NumericError("vae train: dataset points must lie in [0,1]^k");
  }

  TrainResult out;
  out.params = init_params(config);
  VaeParams& p = out.params;
  VaeGradient acc;  // RMSProp accumulators, zero-initialized
  acc.enc_w = Eigen::MatrixXd::Zero(config.h, config.k);
  acc.enc_b = Eigen::VectorXd::Zero(config.h);
  acc.mu_w = Eigen::MatrixXd::Zero(config.d, config.h);
  acc.log_sigma_w = Eigen::MatrixXd::Zero(config.d, config.h);
  acc.dec_w = Eigen::MatrixXd::Zero(config.h, config.d);
  acc.dec_b = Eigen::VectorXd::Zero(config.h);
  acc.out_w = Eigen::MatrixXd::Zero(config.k, config.h);
  acc.out_b = Eigen::VectorXd::Zero(config.k);

  Pcg32 rng(config.seed, /*stream=*/1);  // separate stream from init_params
  const int n = static_cast<int>(dataset.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  Eigen::VectorXd eps(config.d);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    // Fisher-Yates shuffle from the seeded generator.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.next_u32() % static_cast<std::uint32_t>(i + 1));
      std::swap(order[i], order[j]);
    }
    double sum_loss = 0.0, sum_recon = 0.0, sum_kl = 0.0;
    for (int batch_start = 0; batch_start < n; batch_start += tc.batch_size) {
      const int batch_end = std::min(batch_start + tc.batch_size, n);
      const int batch_n = batch_end - batch_start;
      VaeGradient batch_grad;
      batch_grad.enc_w = Eigen::MatrixXd::Zero(config.h, config.k);
      batch_grad.enc_b = Eigen::VectorXd::Zero(config.h);
      batch_grad.mu_w = Eigen::MatrixXd::Zero(config.d, config.h);
      batch_grad.log_sigma_w = Eigen::MatrixXd::Zero(config.d, config.h);
      batch_grad.dec_w = Eigen::MatrixXd::Zero(config.h, config.d);
      batch_grad.dec_b = Eigen::VectorXd::Zero(config.h);
      batch_grad.out_w = Eigen::MatrixXd::Zero(config.k, config.h);
      batch_grad.out_b = Eigen::VectorXd::Zero(config.k);

      for (int i = batch_start; i < batch_end; ++i) {
        for (int j = 0; j < config.d; ++j) eps[j] = rng.next_gaussian();
        const Forward f = forward(p, dataset[order[i]], eps);
        if (!std::isfinite(f.recon + f.kl))
          throw NumericError("vae train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_start / tc.batch_size));
        const VaeGradient g = backward(p, f, dataset[order[i]], eps);
        sum_loss += f.recon + f.kl;
        sum_recon += f.recon;
        sum_kl += f.kl;
        const double scale = 1.0 / batch_n;
        batch_grad.enc_w += scale * g.enc_w;
        batch_grad.enc_b += scale * g.enc_b;
        batch_grad.mu_w += scale * g.mu_w;
        batch_grad.log_sigma_w += scale * g.log_sigma_w;
        batch_grad.dec_w += scale * g.dec_w;
        batch_grad.dec_b += scale * g.dec_b;
        batch_grad.out_w += scale * g.out_w;
        batch_grad.out_b += scale * g.out_b;
      }
      rmsprop_update(p.enc_w, acc.enc_w, batch_grad.enc_w, tc);
      rmsprop_update(p.enc_b, acc.enc_b, batch_grad.enc_b, tc);
      rmsprop_update(p.mu_w, acc.mu_w, batch_grad.mu_w, tc);
      rmsprop_update(p.log_sigma_w, acc.log_sigma_w, batch_grad.log_sigma_w, tc);
      rmsprop_update(p.dec_w, acc.dec_w, batch_grad.dec_w, tc);
      rmsprop_update(p.dec_b, acc.dec_b, batch_grad.dec_b, tc);
      rmsprop_update(p.out_w, acc.out_w, batch_grad.out_w, tc);
      rmsprop_update(p.out_b, acc.out_b, batch_grad.out_b, tc);
    }
    out.epoch_loss.push_back(sum_loss / n);
    out.epoch_recon.push_back(sum_recon / n);
    out.epoch_kl.push_back(sum_kl / n);
  }
  return out;
}

Eigen::VectorXd generate(const VaeParams& params, const Eigen::VectorXd& z) {
  return decode(params, z, Eigen::VectorXd::Zero(params.config.k));
}

Eigen::VectorXd reconstruct(const VaeParams& params, const Eigen::VectorXd& x) {
  return generate(params, encode(params, x, Eigen::VectorXd::Zero(params.config.d)));
}

namespace {

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  return arr;
}

Eigen::MatrixXd mat_from(const nlohmann::json& j, int rows, int cols) {
  if (static_cast<int>(j.size()) != rows * cols)
    throw DataError("vae_from_json: weight count mismatch");
  Eigen::MatrixXd m(rows, cols);
  int idx = 0;
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j[idx++].get<double>();
  return m;
}

}  // namespace

std::string vae_to_json(const VaeParams& p) {
  nlohmann::json j;
  j["config"] = {{"k", p.config.k},
                 {"d", p.config.d},
                 {"h", p.config.h},
                 {"sigma_x", p.config.sigma_x},
                 {"seed", p.config.seed}};
  j["enc_w"] = mat_json(p.enc_w);
  j["enc_b"] = mat_json(p.enc_b);
  j["mu_w"] = mat_json(p.mu_w);
  j["log_sigma_w"] = mat_json(p.log_sigma_w);
  j["dec_w"] = mat_json(p.dec_w);
  j["dec_b"] = mat_json(p.dec_b);
  j["out_w"] = mat_json(p.out_w);
  j["out_b"] = mat_json(p.out_b);
  return j.dump();
}

VaeParams vae_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("vae_from_json: ") + e.what());
  }
  VaeConfig c;
  c.k = j.at("config").at("k").get<int>();
  c.d = j.at("config").at("d").get<int>();
  c.h = j.at("config").at("h").get<int>();
  c.sigma_x = j.at("config").at("sigma_x").get<double>();
  c.seed = j.at("config").at("seed").get<std::uint64_t>();
  VaeParams p = zero_params(c);
  p.enc_w = mat_from(j.at("enc_w"), c.h, c.k);
  p.enc_b = mat_from(j.at("enc_b"), c.h, 1);
  p.mu_w = mat_from(j.at("mu_w"), c.d, c.h);
  p.log_sigma_w = mat_from(j.at("log_sigma_w"), c.d, c.h);
  p.dec_w = mat_from(j.at("dec_w"), c.h, c.d);
  p.dec_b = mat_from(j.at("dec_b"), c.h, 1);
  p.out_w = mat_from(j.at("out_w"), c.k, c.h);
  p.out_b = mat_from(j.at("out_b"), c.k, 1);
  return p;
}

}  // namespace kinetrack
