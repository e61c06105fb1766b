#include "kinetrack/state_space.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "kinetrack/errors.hpp"

namespace kinetrack {

namespace {

bool is_psd(const Eigen::Matrix2d& q, double tol = 1e-12) {
  Eigen::Matrix2d sym = 0.5 * (q + q.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sym);
  return es.eigenvalues().minCoeff() >= -tol * std::max(1.0, sym.norm());
}

}  // namespace

SingleEntityModel build_single(double dt, const Eigen::Matrix2d& q,
                               const Eigen::Vector2d& sigma, bool require_psd) {
  if (dt <= 0.0) throw NumericError("build_single: dt must be positive");
  if (sigma.x() <= 0.0 || sigma.y() <= 0.0)
    throw NumericError("build_single: sigma must be positive");
  if (require_psd && !is_psd(q)) throw NumericError("build_single: Q is not PSD");

  SingleEntityModel m;
  m.dt = dt;
  m.T.setIdentity();
  m.T(0, 2) = dt;
  m.T(1, 3) = dt;
  m.R.setZero();
  m.R(0, 0) = 0.5 * dt * dt;
  m.R(1, 1) = 0.5 * dt * dt;
  m.R(2, 0) = dt;
  m.R(3, 1) = dt;
  m.W.setZero();
  m.W(0, 0) = 1.0;
  m.W(1, 1) = 1.0;
  m.Q = q;
  m.sigma_x = sigma.x();
  m.sigma_y = sigma.y();
  return m;
}

Eigen::Vector4d propagate_state(const SingleEntityModel& model, const Eigen::Vector4d& state,
                                const Eigen::Vector2d& accel) {
  return model.T * state + model.R * accel;
}

StackedModel stack(std::vector<SingleEntityModel> models) {
  if (models.empty()) throw NumericError("stack: empty model list");
  for (const auto& m : models)
    if (m.dt != models.front().dt) throw NumericError("stack: mismatched dt");
  return StackedModel{std::move(models)};
}

StackedModel stack(const SingleEntityModel& model, int copies) {
  return stack(std::vector<SingleEntityModel>(static_cast<std::size_t>(copies), model));
}

Eigen::MatrixXd StackedModel::transition() const {
  const int n = state_dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < entity_count(); ++i) out.block<4, 4>(4 * i, 4 * i) = entities[i].T;
  return out;
}

Eigen::MatrixXd StackedModel::disturbance() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(state_dim(), obs_dim());
  for (int i = 0; i < entity_count(); ++i) out.block<4, 2>(4 * i, 2 * i) = entities[i].R;
  return out;
}

Eigen::MatrixXd StackedModel::observation() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(obs_dim(), state_dim());
  for (int i = 0; i < entity_count(); ++i) out.block<2, 4>(2 * i, 4 * i) = entities[i].W;
  return out;
}

Eigen::MatrixXd StackedModel::process_cov() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(obs_dim(), obs_dim());
  for (int i = 0; i < entity_count(); ++i) out.block<2, 2>(2 * i, 2 * i) = entities[i].Q;
  return out;
}

Eigen::VectorXd StackedModel::noise_variances() const {
  Eigen::VectorXd out(obs_dim());
  for (int i = 0; i < entity_count(); ++i) {
    out[2 * i] = entities[i].sigma_x * entities[i].sigma_x;
    out[2 * i + 1] = entities[i].sigma_y * entities[i].sigma_y;
  }
  return out;
}

int ParamVector::free_size(ParamMode mode, int entities) {
  return (mode == ParamMode::LogCholesky ? 5 : 6) * entities;
}

Eigen::VectorXd ParamVector::to_free() const {
  const int k = entity_count();
  if (mode == ParamMode::Raw) return values;
  Eigen::VectorXd free(5 * k);
  for (int i = 0; i < k; ++i) free.segment<5>(5 * i) = values.segment<5>(6 * i);
  return free;
}

ParamVector ParamVector::from_free(ParamMode mode, int entities, const Eigen::VectorXd& free) {
  if (free.size() != free_size(mode, entities))
    throw NumericError("ParamVector::from_free: size mismatch");
  ParamVector p;
  p.mode = mode;
  p.values = Eigen::VectorXd::Zero(6 * entities);
  if (mode == ParamMode::Raw) {
    p.values = free;
  } else {
    for (int i = 0; i < entities; ++i) p.values.segment<5>(6 * i) = free.segment<5>(5 * i);
  }
  return p;
}

DecodedParams decode_params(const ParamVector& p, int entity) {
  if (entity < 0 || entity >= p.entity_count())
    throw NumericError("decode_params: entity index out of range");
  const auto v = p.values.segment<6>(6 * entity);
  DecodedParams out;
  out.sigma = {std::exp(v[0]), std::exp(v[1])};
  if (p.mode == ParamMode::LogCholesky) {
    Eigen::Matrix2d c;
    c << std::exp(v[2]), 0.0, v[3], std::exp(v[4]);
    out.Q = c * c.transpose();
  } else {
    out.Q << v[2], v[3], v[4], v[5];
  }
  return out;
}

ParamVector encode_params(const Eigen::Matrix2d& Q, const Eigen::Vector2d& sigma,
                          ParamMode mode) {
  if (sigma.x() <= 0.0 || sigma.y() <= 0.0)
    throw NumericError("encode_params: sigma must be positive");
  ParamVector p;
  p.mode = mode;
  p.values = Eigen::VectorXd::Zero(6);
  p.values[0] = std::log(sigma.x());
  p.values[1] = std::log(sigma.y());
  if (mode == ParamMode::Raw) {
    p.values[2] = Q(0, 0);
    p.values[3] = Q(0, 1);
    p.values[4] = Q(1, 0);
    p.values[5] = Q(1, 1);
    return p;
  }
  // 2x2 Cholesky with positive diagonal; requires positive definite Q.
  if (!is_psd(Q)) throw NumericError("encode_params: Q is not PSD");
  const double c11_sq = Q(0, 0);
  if (c11_sq <= 0.0) throw NumericError("encode_params: Q not positive definite (q11 <= 0)");
  const double c11 = std::sqrt(c11_sq);
  const double c21 = Q(1, 0) / c11;
  const double c22_sq = Q(1, 1) - c21 * c21;
  if (c22_sq <= 0.0) throw NumericError("encode_params: Q not positive definite");
  p.values[2] = std::log(c11);
  p.values[3] = c21;
  p.values[4] = 0.5 * std::log(c22_sq);
  return p;
}

SingleEntityModel model_from_params(double dt, const ParamVector& p, int entity) {
  auto d = decode_params(p, entity);
  return build_single(dt, d.Q, d.sigma, /*require_psd=*/p.mode == ParamMode::LogCholesky);
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) rows.push_back(m(i, j));
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, int rows, int cols) {
  if (static_cast<int>(j.size()) != rows * cols)
    throw DataError("model_from_json: matrix entry count mismatch");
  Eigen::MatrixXd m(rows, cols);
  int idx = 0;
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j[idx++].get<double>();
  return m;
}

}  // namespace

std::string model_to_json(const StackedModel& model) {
  nlohmann::json j;
  j["dt"] = model.dt();
  j["entities"] = nlohmann::json::array();
  for (const auto& e : model.entities) {
    nlohmann::json je;
    je["q"] = matrix_to_json(e.Q);
    je["sigma"] = {e.sigma_x, e.sigma_y};
    j["entities"].push_back(je);
  }
  return j.dump(2);
}

StackedModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model_from_json: ") + e.what());
  }
  const double dt = j.at("dt").get<double>();
  std::vector<SingleEntityModel> entities;
  for (const auto& je : j.at("entities")) {
    Eigen::Matrix2d q = matrix_from_json(je.at("q"), 2, 2);
    auto s = je.at("sigma");
    entities.push_back(build_single(dt, q, {s[0].get<double>(), s[1].get<double>()},
                                    /*require_psd=*/false));
  }
  return stack(std::move(entities));
}

}  // namespace kinetrack
