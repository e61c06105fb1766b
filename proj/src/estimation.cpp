#include "kinetrack/estimation.hpp"

#include <cmath>
#include <limits>

#include "kinetrack/errors.hpp"

namespace kinetrack {

namespace {

double safe_eval(const std::function<double(const Eigen::VectorXd&)>& f,
                 const Eigen::VectorXd& x) {
  double v;
  try {
    v = f(x);
  } catch (const NumericError&) {
    return std::numeric_limits<double>::infinity();
  }
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = safe_eval(f, xp);
    xp[i] = x[i] - h;
    const double fm = safe_eval(f, xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace

BfgsResult bfgs_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& x0, const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult best;
  best.x = x0;
  best.value = safe_eval(f, x0);
  if (!std::isfinite(best.value))
    throw NumericError("bfgs_minimize: objective not finite at the start point");

  Eigen::VectorXd x = x0;
  double fx = best.value;
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd grad = central_gradient(f, x, options.fd_step);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    best.iterations = iter;
    best.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    if (best.gradient_norm < options.grad_tol) {
      best.converged = true;
      break;
    }
    if (!grad.allFinite()) break;

    Eigen::VectorXd dir = -h_inv * grad;
    double slope = grad.dot(dir);
    if (slope >= 0.0) {  // curvature gone bad; reset to steepest descent
      h_inv.setIdentity();
      dir = -grad;
      slope = grad.dot(dir);
    }

    // Armijo backtracking.
    constexpr double c1 = 1e-4;
    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * dir;
      f_new = safe_eval(f, x_new);
      if (f_new <= fx + c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // stalled; return best so far

    Eigen::VectorXd grad_new = central_gradient(f, x_new, options.fd_step);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = grad_new - grad;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd outer = s * y.transpose() * rho;
      h_inv = (Eigen::MatrixXd::Identity(n, n) - outer) * h_inv *
                  (Eigen::MatrixXd::Identity(n, n) - outer.transpose()) +
              rho * s * s.transpose();
    }
    x = x_new;
    fx = f_new;
    grad = grad_new;
    if (fx < best.value) {
      best.value = fx;
      best.x = x;
    }
    best.iterations = iter + 1;
    best.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    if (best.gradient_norm < options.grad_tol) {
      best.converged = true;
      break;
    }
  }
  return best;
}

double log_likelihood(const StackedModel& model, const Eigen::MatrixXd& obs,
                      const DiffuseInit& init) {
  return filter_pass(model, obs, init).log_likelihood();
}

double log_likelihood(const StackedModel& model, const Window& window, const DiffuseInit& init) {
  return log_likelihood(model, window.as_matrix(), init);
}

ParamVector default_start(ParamMode mode) {
  return encode_params(100.0 * Eigen::Matrix2d::Identity(), {30.0, 30.0}, mode);
}

namespace {

DiffuseInit init_for(const FitConfig& config, int dim) {
  if (config.init_mode == DiffuseInit::Mode::LargeKappa)
    return DiffuseInit::large_kappa(dim, config.kappa);
  return DiffuseInit::exact_diffuse(dim);
}

}  // namespace

FitResult fit_mle(const Eigen::MatrixXd& obs, double dt, const ParamVector& start,
                  const FitConfig& config) {
  if (obs.rows() < 5) throw NumericError("fit_mle: need at least 5 observations");
  if (start.entity_count() != 1) throw NumericError("fit_mle: single-entity fits only");
  const DiffuseInit init = init_for(config, 4);

  auto objective = [&](const Eigen::VectorXd& free) -> double {
    ParamVector p = ParamVector::from_free(config.mode, 1, free);
    StackedModel model = stack(model_from_params(dt, p));
    return -log_likelihood(model, obs, init);
  };

  ParamVector start_in_mode = start;
  if (start.mode != config.mode) {
    auto d = decode_params(start);
    start_in_mode = encode_params(d.Q, d.sigma, config.mode);
  }

  BfgsOptions opts;
  opts.grad_tol = config.grad_tol;
  opts.max_iterations = config.max_iterations;
  opts.fd_step = config.fd_step;
  BfgsResult r = bfgs_minimize(objective, start_in_mode.to_free(), opts);

  FitResult out;
  out.params = ParamVector::from_free(config.mode, 1, r.x);
  out.loglik = -r.value;
  out.iterations = r.iterations;
  out.converged = r.converged;
  out.gradient_norm = r.gradient_norm;
  return out;
}

FitResult fit_mle(const Window& window, double dt, const ParamVector& start,
                  const FitConfig& config) {
  return fit_mle(window.as_matrix(), dt, start, config);
}

WindowEstimates sliding_window_fit(const TrackingSeries& series, const SlidingConfig& config) {
  WindowEstimates out;
  const auto windows = sliding_windows(series, config.window_length);
  ParamVector carry = default_start(config.fit.mode);
  bool have_carry = false;

  for (const auto& w : windows) {
    // Only windows whose next sample exists are fitted; each one predicts
    // that sample.
    const std::size_t next = static_cast<std::size_t>(w.start_index) + w.length();
    if (next >= series.size() || !series.samples[next]) continue;
    WindowEstimate est;
    est.start = w.start_index;
    try {
      const ParamVector start =
          (config.warm_start && have_carry) ? carry : default_start(config.fit.mode);
      est.fit = fit_mle(w, series.dt, start, config.fit);
      StackedModel model = stack(model_from_params(series.dt, est.fit.params));
      auto pass = filter_pass(model, w, init_for(config.fit, 4));
      est.filtered_mean.reserve(pass.filtered.size());
      est.filtered_cov.reserve(pass.filtered.size());
      for (const auto& st : pass.filtered) {
        est.filtered_mean.push_back(st.mean.head<4>());
        est.filtered_cov.push_back(st.cov.topLeftCorner<4, 4>());
      }
      est.predicted_state = pass.one_step_ahead.mean.head<4>();
      est.predicted_cov = pass.one_step_ahead.cov.topLeftCorner<4, 4>();
      est.predicted_position = est.predicted_state.head<2>();
      est.ok = true;
      if (config.warm_start) {
        carry = est.fit.params;
        have_carry = true;
      }
    } catch (const NumericError&) {
      est.ok = false;
      ++out.failed;
    }
    out.windows.push_back(std::move(est));
  }
  return out;
}

}  // namespace kinetrack
