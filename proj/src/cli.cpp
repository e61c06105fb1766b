#include "kinetrack/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "kinetrack/errors.hpp"
#include "kinetrack/estimation.hpp"
#include "kinetrack/kalman.hpp"
#include "kinetrack/prediction.hpp"
#include "kinetrack/rng.hpp"
#include "kinetrack/state_space.hpp"
#include "kinetrack/svg.hpp"
#include "kinetrack/synthetic.hpp"
#include "kinetrack/trajectory.hpp"
#include "kinetrack/vae.hpp"

namespace kinetrack {

namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output file: " + path);
  out << content;
}

std::string fnv1a_digest(const std::string& bytes) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

// One manifest per run: command, flags, seed, input digests, version and
// wall clock, written next to the primary output.
class Manifest {
public:
  Manifest(std::string command, const std::vector<std::string>& argv)
      : command_(std::move(command)), start_(std::chrono::system_clock::now()) {
    j_["command"] = command_;
    j_["argv"] = argv;
    j_["tool_version"] = kVersion;
    j_["seed"] = 0;
  }

  void seed(std::uint64_t s) { j_["seed"] = s; }
  void input(const std::string& path, const std::string& bytes) {
    j_["inputs"][path] = fnv1a_digest(bytes);
  }
  void output(const std::string& path) { j_["outputs"].push_back(path); }

  void write(const std::string& primary_output) {
    const auto end = std::chrono::system_clock::now();
    j_["wall_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(end - start_).count();
    const std::time_t t = std::chrono::system_clock::to_time_t(start_);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    j_["started_at"] = buf;
    write_file(primary_output + ".manifest.json", j_.dump(2) + "\n");
  }

private:
  std::string command_;
  std::chrono::system_clock::time_point start_;
  nlohmann::json j_;
};

struct Row {
  std::vector<std::pair<std::string, double>> cols;
};

// Tabular output in csv or json per --format.
std::string render_table(const std::vector<std::string>& header, const std::vector<Row>& rows,
                         const std::string& format) {
  if (format == "json") {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json obj;
      for (const auto& [k, v] : r.cols) obj[k] = v;
      arr.push_back(obj);
    }
    return arr.dump(2) + "\n";
  }
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i)
    out += header[i] + (i + 1 < header.size() ? "," : "\n");
  char buf[64];
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.cols.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.cols[i].second);
      out += buf;
      out += (i + 1 < r.cols.size() ? "," : "\n");
    }
  }
  return out;
}

FieldSpec parse_field_flag(const std::string& text) {
  FieldSpec f;
  if (text.empty()) return f;
  double v[4];
  if (std::sscanf(text.c_str(), "%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3]) != 4 ||
      v[0] >= v[1] || v[2] >= v[3])
    throw DataError("--field expects x_min,x_max,y_min,y_max with min < max");
  f.x_min = v[0];
  f.x_max = v[1];
  f.y_min = v[2];
  f.y_max = v[3];
  return f;
}

const TrackingSeries& select_entity(const std::vector<TrackingSeries>& all, int entity_id) {
  for (const auto& s : all)
    if (s.entity_id == entity_id) return s;
  throw DataError("entity_id " + std::to_string(entity_id) + " not present in input");
}

StackedModel model_for_entities(double dt, double q, double sigma, int count) {
  const Eigen::Matrix2d Q = q * Eigen::Matrix2d::Identity();
  return stack(build_single(dt, Q, {sigma, sigma}), count);
}

// Observation matrix (NaN = missing) for a set of series, column-paired.
Eigen::MatrixXd series_to_obs(const std::vector<const TrackingSeries*>& series) {
  std::size_t n = 0;
  for (const auto* s : series) n = std::max(n, s->size());
  Eigen::MatrixXd obs =
      Eigen::MatrixXd::Constant(n, 2 * series.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t e = 0; e < series.size(); ++e)
    for (std::size_t t = 0; t < series[e]->size(); ++t)
      if (series[e]->samples[t]) {
        obs(t, 2 * e) = series[e]->samples[t]->x();
        obs(t, 2 * e + 1) = series[e]->samples[t]->y();
      }
  return obs;
}

std::vector<Eigen::Vector2d> present_points(const TrackingSeries& s) {
  std::vector<Eigen::Vector2d> pts;
  for (const auto& p : s.samples)
    if (p) pts.push_back(*p);
  return pts;
}

// Flattens unit-square windows of length traj_len into VAE data vectors.
std::vector<Eigen::VectorXd> windows_to_vae_data(const TrackingSeries& unit_series,
                                                 int traj_len, int max_count) {
  std::vector<Eigen::VectorXd> data;
  for (const auto& w : sliding_windows(unit_series, traj_len)) {
    Eigen::VectorXd v(2 * traj_len);
    for (int i = 0; i < traj_len; ++i) {
      v[2 * i] = w.points[i].x();
      v[2 * i + 1] = w.points[i].y();
    }
    data.push_back(std::move(v));
    if (max_count > 0 && static_cast<int>(data.size()) >= max_count) break;
  }
  return data;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"Football kinematics from 2D tracking data: Kalman filtering, "
               "maximum-likelihood covariance estimation and a trajectory VAE"};
  app.require_subcommand(1);

  // ---- simulate ----------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "Simulate the Newtonian state-space model");
  int sim_entities = 1, sim_steps = 100;
  std::uint64_t sim_seed = 0;
  double sim_q = 400.0, sim_sigma = 10.0, sim_dt = 0.1;
  std::string sim_init, sim_out, sim_dump_model;
  sim->add_option("--entities", sim_entities, "Number of entities")->capture_default_str();
  sim->add_option("--steps", sim_steps, "Number of observation steps")->capture_default_str();
  sim->add_option("--seed", sim_seed, "RNG seed")->capture_default_str();
  sim->add_option("--q", sim_q, "Acceleration variance, Q = q*I (cm/s^2)^2")
      ->capture_default_str();
  sim->add_option("--sigma", sim_sigma, "Measurement noise std dev (cm)")->capture_default_str();
  sim->add_option("--dt", sim_dt, "Sampling interval (s)")->capture_default_str();
  sim->add_option("--init", sim_init, "Initial state x,y,vx,vy per entity (default rest at origin)");
  sim->add_option("--dump-model", sim_dump_model, "Also write the generating model as JSON");
  sim->add_option("-o,--output", sim_out, "Output tracking CSV")->required();

  // ---- filter ------------------------------------------------------------
  auto* flt = app.add_subcommand("filter", "Kalman-filter a tracking CSV with given parameters");
  std::string flt_in, flt_out, flt_field, flt_format = "csv", flt_init = "exact", flt_model;
  int flt_entity = 1;
  bool flt_all = false, flt_univariate = false;
  double flt_q = 400.0, flt_sigma = 10.0, flt_dt = 0.1, flt_kappa = 1e7;
  flt->add_option("--input", flt_in, "Tracking CSV")->required();
  flt->add_option("--entity", flt_entity, "Entity id to filter")->capture_default_str();
  flt->add_flag("--all", flt_all, "Filter all entities as one stacked model");
  flt->add_flag("--univariate", flt_univariate, "Use the sequential univariate filter");
  flt->add_option("--q", flt_q, "Acceleration variance, Q = q*I")->capture_default_str();
  flt->add_option("--sigma", flt_sigma, "Measurement noise std dev (cm)")->capture_default_str();
  flt->add_option("--model", flt_model, "Model JSON (overrides --q/--sigma)");
  flt->add_option("--dt", flt_dt, "Sampling interval (s)")->capture_default_str();
  flt->add_option("--init", flt_init, "Initialization: exact | kappa")->capture_default_str();
  flt->add_option("--kappa", flt_kappa, "Large-kappa value")->capture_default_str();
  flt->add_option("--field", flt_field, "Field bounds x_min,x_max,y_min,y_max (cm)");
  flt->add_option("--format", flt_format, "csv | json")->capture_default_str();
  flt->add_option("-o,--output", flt_out, "Output CSV of filtered states")->required();

  // ---- estimate ----------------------------------------------------------
  auto* est = app.add_subcommand("estimate", "Sliding-window MLE of Q and sigma");
  std::string est_in, est_out, est_field, est_format = "csv";
  int est_entity = 1, est_window = 10, est_max_iter = 200;
  bool est_warm = false, est_raw = false;
  double est_dt = 0.1;
  est->add_option("--input", est_in, "Tracking CSV")->required();
  est->add_option("--entity", est_entity, "Entity id")->capture_default_str();
  est->add_option("--window", est_window, "Window length")->capture_default_str();
  est->add_option("--dt", est_dt, "Sampling interval (s)")->capture_default_str();
  est->add_flag("--warm-start", est_warm, "Warm-start each window from the previous optimum");
  est->add_flag("--raw", est_raw, "Optimize the raw 6-parameter encoding");
  est->add_option("--max-iterations", est_max_iter, "BFGS iteration cap")->capture_default_str();
  est->add_option("--field", est_field, "Field bounds x_min,x_max,y_min,y_max (cm)");
  est->add_option("--format", est_format, "csv | json")->capture_default_str();
  est->add_option("-o,--output", est_out, "Per-window parameter table")->required();

  // ---- predict -----------------------------------------------------------
  auto* prd = app.add_subcommand("predict", "k-step-ahead predictions with 95% rectangles");
  std::string prd_in, prd_out, prd_plot, prd_field, prd_format = "csv";
  int prd_entity = 1, prd_window = 10, prd_horizon = 5, prd_max_iter = 200;
  bool prd_warm = false;
  double prd_dt = 0.1;
  prd->add_option("--input", prd_in, "Tracking CSV")->required();
  prd->add_option("--entity", prd_entity, "Entity id")->capture_default_str();
  prd->add_option("--window", prd_window, "Window length")->capture_default_str();
  prd->add_option("--horizon", prd_horizon, "Prediction horizon (steps)")->capture_default_str();
  prd->add_option("--dt", prd_dt, "Sampling interval (s)")->capture_default_str();
  prd->add_flag("--warm-start", prd_warm, "Warm-start window fits");
  prd->add_option("--max-iterations", prd_max_iter, "BFGS iteration cap")->capture_default_str();
  prd->add_option("--field", prd_field, "Field bounds x_min,x_max,y_min,y_max (cm)");
  prd->add_option("--format", prd_format, "csv | json")->capture_default_str();
  prd->add_option("--plot", prd_plot, "SVG overlay of truth vs prediction");
  prd->add_option("-o,--output", prd_out, "Prediction table")->required();

  // ---- kinematics --------------------------------------------------------
  auto* kin = app.add_subcommand("kinematics", "Velocity and speed series from the filter");
  std::string kin_in, kin_out, kin_plot, kin_field, kin_format = "csv";
  int kin_entity = 1, kin_window = 10;
  double kin_dt = 0.1, kin_q = -1.0, kin_sigma = -1.0;
  kin->add_option("--input", kin_in, "Tracking CSV")->required();
  kin->add_option("--entity", kin_entity, "Entity id")->capture_default_str();
  kin->add_option("--q", kin_q, "Acceleration variance; with --sigma skips estimation");
  kin->add_option("--sigma", kin_sigma, "Measurement noise std dev (cm)");
  kin->add_option("--window", kin_window, "Window length when estimating")->capture_default_str();
  kin->add_option("--dt", kin_dt, "Sampling interval (s)")->capture_default_str();
  kin->add_option("--field", kin_field, "Field bounds x_min,x_max,y_min,y_max (cm)");
  kin->add_option("--format", kin_format, "csv | json")->capture_default_str();
  kin->add_option("--plot", kin_plot, "SVG of the speed series");
  kin->add_option("-o,--output", kin_out, "Kinematics table")->required();

  // ---- vae ---------------------------------------------------------------
  auto* vae = app.add_subcommand("vae", "Trajectory variational autoencoder");
  vae->require_subcommand(1);

  auto* vtr = vae->add_subcommand("train", "Train on trajectory windows");
  std::string vtr_in, vtr_out, vtr_field;
  int vtr_entity = 1, vtr_traj_len = 50, vtr_latent = 10, vtr_hidden = 400, vtr_epochs = 200;
  int vtr_batch = 32, vtr_scripted = 0, vtr_max_traj = 0;
  double vtr_sigma_x = 0.15, vtr_dt = 0.1;
  std::uint64_t vtr_seed = 0;
  vtr->add_option("--input", vtr_in, "Tracking CSV (omit with --scripted)");
  vtr->add_option("--scripted", vtr_scripted, "Generate N scripted trajectories instead");
  vtr->add_option("--entity", vtr_entity, "Entity id")->capture_default_str();
  vtr->add_option("--traj-len", vtr_traj_len, "Window length (samples); k = 2*traj-len")
      ->capture_default_str();
  vtr->add_option("--latent-dim", vtr_latent, "Latent dimension d")->capture_default_str();
  vtr->add_option("--hidden", vtr_hidden, "Hidden width h")->capture_default_str();
  vtr->add_option("--sigma-x", vtr_sigma_x, "Decoder noise scale")->capture_default_str();
  vtr->add_option("--epochs", vtr_epochs, "Training epochs")->capture_default_str();
  vtr->add_option("--batch", vtr_batch, "Minibatch size")->capture_default_str();
  vtr->add_option("--seed", vtr_seed, "RNG seed")->capture_default_str();
  vtr->add_option("--max-traj", vtr_max_traj, "Cap on training windows (0 = all)");
  vtr->add_option("--dt", vtr_dt, "Sampling interval (s)")->capture_default_str();
  vtr->add_option("--field", vtr_field, "Field bounds x_min,x_max,y_min,y_max (cm)");
  vtr->add_option("-o,--output", vtr_out, "Parameter JSON")->required();

  auto* vre = vae->add_subcommand("reconstruct", "Reconstruct trajectory windows");
  std::string vre_params, vre_in, vre_out, vre_plot, vre_field;
  int vre_entity = 1, vre_count = 4;
  double vre_dt = 0.1;
  vre->add_option("--params", vre_params, "Parameter JSON from vae train")->required();
  vre->add_option("--input", vre_in, "Tracking CSV")->required();
  vre->add_option("--entity", vre_entity, "Entity id")->capture_default_str();
  vre->add_option("--count", vre_count, "Number of windows to reconstruct")
      ->capture_default_str();
  vre->add_option("--dt", vre_dt, "Sampling interval (s)")->capture_default_str();
  vre->add_option("--field", vre_field, "Field bounds x_min,x_max,y_min,y_max (cm)");
  vre->add_option("--plot", vre_plot, "SVG overlay of originals vs reconstructions");
  vre->add_option("-o,--output", vre_out, "Reconstruction CSV")->required();

  auto* vge = vae->add_subcommand("generate", "Decode standard-normal latents");
  std::string vge_params, vge_out, vge_plot, vge_field;
  int vge_samples = 6;
  std::uint64_t vge_seed = 0;
  vge->add_option("--params", vge_params, "Parameter JSON from vae train")->required();
  vge->add_option("--samples", vge_samples, "Number of trajectories")->capture_default_str();
  vge->add_option("--seed", vge_seed, "RNG seed")->capture_default_str();
  vge->add_option("--field", vge_field, "Field bounds x_min,x_max,y_min,y_max (cm)");
  vge->add_option("--plot", vge_plot, "SVG of generated trajectories");
  vge->add_option("-o,--output", vge_out, "Generated CSV")->required();

  // ---- plot --------------------------------------------------------------
  auto* plt = app.add_subcommand("plot", "Trajectory overlay figure");
  std::string plt_in, plt_overlay, plt_out, plt_field;
  int plt_entity = -1;
  plt->add_option("--input", plt_in, "Tracking CSV (red)")->required();
  plt->add_option("--overlay", plt_overlay, "Second tracking CSV (blue)");
  plt->add_option("--entity", plt_entity, "Entity id (-1 = all)")->capture_default_str();
  plt->add_option("--field", plt_field, "Field bounds x_min,x_max,y_min,y_max (cm)");
  plt->add_option("-o,--output", plt_out, "Output SVG")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) {
      Manifest manifest("simulate", args);
      manifest.seed(sim_seed);
      if (sim_entities < 1) throw DataError("simulate: --entities must be >= 1");
      StackedModel model = model_for_entities(sim_dt, sim_q, sim_sigma, sim_entities);
      Eigen::VectorXd init = Eigen::VectorXd::Zero(model.state_dim());
      if (!sim_init.empty()) {
        double v[4];
        if (std::sscanf(sim_init.c_str(), "%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3]) != 4)
          throw DataError("simulate: --init expects x,y,vx,vy");
        for (int e = 0; e < sim_entities; ++e)
          init.segment<4>(4 * e) = Eigen::Vector4d(v[0], v[1], v[2], v[3]);
      }
      SyntheticScenario sc = simulate(model, sim_steps, sim_seed, init);
      std::vector<TrackingSeries> all;
      for (int e = 0; e < sim_entities; ++e)
        all.push_back(sc.to_series(e, sim_entities == 1 ? 1 : e));
      write_file(sim_out, serialize_tracking_csv(all));
      manifest.output(sim_out);
      if (!sim_dump_model.empty()) {
        write_file(sim_dump_model, model_to_json(model));
        manifest.output(sim_dump_model);
      }
      manifest.write(sim_out);
      return 0;
    }

    if (flt->parsed()) {
      Manifest manifest("filter", args);
      const std::string bytes = read_file(flt_in);
      manifest.input(flt_in, bytes);
      auto all = parse_tracking_csv(bytes, parse_field_flag(flt_field), flt_dt);
      std::vector<const TrackingSeries*> chosen;
      if (flt_all)
        for (const auto& s : all) chosen.push_back(&s);
      else
        chosen.push_back(&select_entity(all, flt_entity));
      StackedModel model =
          model_for_entities(flt_dt, flt_q, flt_sigma, static_cast<int>(chosen.size()));
      if (!flt_model.empty()) {
        const std::string mbytes = read_file(flt_model);
        manifest.input(flt_model, mbytes);
        model = model_from_json(mbytes);
        if (model.entity_count() != static_cast<int>(chosen.size()))
          throw DataError("filter: model entity count does not match the selection");
      }
      DiffuseInit init = flt_init == "kappa"
                             ? DiffuseInit::large_kappa(model.state_dim(), flt_kappa)
                             : DiffuseInit::exact_diffuse(model.state_dim());
      Eigen::MatrixXd obs = series_to_obs(chosen);
      FilterPassResult pass = flt_univariate ? univariate_filter_pass(model, obs, init)
                                             : filter_pass(model, obs, init);
      write_file(flt_out, filter_result_to_csv(model, pass));
      manifest.output(flt_out);
      manifest.write(flt_out);
      return 0;
    }

    if (est->parsed()) {
      Manifest manifest("estimate", args);
      const std::string bytes = read_file(est_in);
      manifest.input(est_in, bytes);
      auto all = parse_tracking_csv(bytes, parse_field_flag(est_field), est_dt);
      const TrackingSeries& series = select_entity(all, est_entity);
      SlidingConfig cfg;
      cfg.window_length = est_window;
      cfg.warm_start = est_warm;
      cfg.fit.mode = est_raw ? ParamMode::Raw : ParamMode::LogCholesky;
      cfg.fit.max_iterations = est_max_iter;
      WindowEstimates we = sliding_window_fit(series, cfg);
      std::vector<Row> rows;
      for (const auto& w : we.windows) {
        if (!w.ok) continue;
        auto d = decode_params(w.fit.params);
        rows.push_back({{{"window_start", static_cast<double>(w.start)},
                         {"loglik", w.fit.loglik},
                         {"sigma_x", d.sigma.x()},
                         {"sigma_y", d.sigma.y()},
                         {"q11", d.Q(0, 0)},
                         {"q21", d.Q(1, 0)},
                         {"q12", d.Q(0, 1)},
                         {"q22", d.Q(1, 1)},
                         {"converged", w.fit.converged ? 1.0 : 0.0}}});
      }
      write_file(est_out, render_table({"window_start", "loglik", "sigma_x", "sigma_y", "q11",
                                        "q21", "q12", "q22", "converged"},
                                       rows, est_format));
      manifest.output(est_out);
      manifest.write(est_out);
      return 0;
    }

    if (prd->parsed()) {
      Manifest manifest("predict", args);
      const std::string bytes = read_file(prd_in);
      manifest.input(prd_in, bytes);
      auto all = parse_tracking_csv(bytes, parse_field_flag(prd_field), prd_dt);
      const TrackingSeries& series = select_entity(all, prd_entity);
      SlidingConfig cfg;
      cfg.window_length = prd_window;
      cfg.warm_start = prd_warm;
      cfg.fit.max_iterations = prd_max_iter;
      WindowEstimates we = sliding_window_fit(series, cfg);

      std::vector<Row> rows;
      std::vector<Prediction> horizon_preds;
      for (const auto& w : we.windows) {
        if (!w.ok) continue;
        StackedModel model = stack(model_from_params(prd_dt, w.fit.params));
        FilterState last{w.filtered_mean.back(), w.filtered_cov.back(),
                         w.start + prd_window - 1};
        auto steps = predict_k(model, last, prd_horizon);
        for (const auto& step : steps) {
          const Prediction& pr = step.entities[0];
          rows.push_back({{{"t", static_cast<double>(w.start + prd_window - 1 + pr.horizon)},
                           {"horizon", static_cast<double>(pr.horizon)},
                           {"x", pr.mean.x()},
                           {"y", pr.mean.y()},
                           {"x_lo", pr.x_lo},
                           {"x_hi", pr.x_hi},
                           {"y_lo", pr.y_lo},
                           {"y_hi", pr.y_hi}}});
        }
        horizon_preds.push_back(steps.back().entities[0]);
      }
      write_file(prd_out, render_table({"t", "horizon", "x", "y", "x_lo", "x_hi", "y_lo", "y_hi"},
                                       rows, prd_format));
      manifest.output(prd_out);

      if (!prd_plot.empty()) {
        FieldSpec field = parse_field_flag(prd_field);
        SvgCanvas canvas(field.x_min, field.x_max, field.y_min, field.y_max);
        canvas.frame();
        canvas.polyline(present_points(series), "#d62728", 1.2);  // truth in red
        for (const auto& pr : horizon_preds) {
          canvas.circle(pr.mean, 2.0, "#1f77b4", 0.8);  // predictions in blue
          canvas.rect(pr.x_lo, pr.x_hi, pr.y_lo, pr.y_hi, "#1f77b4", 0.6);
        }
        canvas.title("truth (red) vs " + std::to_string(prd_horizon) +
                     "-step prediction (blue)");
        write_file(prd_plot, canvas.finish());
        manifest.output(prd_plot);
      }
      manifest.write(prd_out);
      return 0;
    }

    if (kin->parsed()) {
      Manifest manifest("kinematics", args);
      const std::string bytes = read_file(kin_in);
      manifest.input(kin_in, bytes);
      auto all = parse_tracking_csv(bytes, parse_field_flag(kin_field), kin_dt);
      const TrackingSeries& series = select_entity(all, kin_entity);

      std::vector<Row> rows;
      std::vector<double> speeds;
      if (kin_q >= 0.0 && kin_sigma > 0.0) {
        StackedModel model = model_for_entities(kin_dt, kin_q, kin_sigma, 1);
        auto pass = filter_pass(model, series_to_obs({&series}),
                                DiffuseInit::exact_diffuse(model.state_dim()));
        KinematicsSeries ks = kinematics(pass.filtered, 1);
        for (int t = 0; t < ks.speed.rows(); ++t) {
          rows.push_back({{{"t", static_cast<double>(t)},
                           {"vx", ks.velocity(t, 0)},
                           {"vy", ks.velocity(t, 1)},
                           {"speed", ks.speed(t, 0)}}});
          speeds.push_back(ks.speed(t, 0));
        }
      } else {
        SlidingConfig cfg;
        cfg.window_length = kin_window;
        cfg.warm_start = true;
        WindowEstimates we = sliding_window_fit(series, cfg);
        for (const auto& w : we.windows) {
          if (!w.ok) continue;
          const Eigen::Vector4d& last = w.filtered_mean.back();
          const int t = w.start + kin_window - 1;
          rows.push_back({{{"t", static_cast<double>(t)},
                           {"vx", last[2]},
                           {"vy", last[3]},
                           {"speed", last.tail<2>().norm()}}});
          speeds.push_back(last.tail<2>().norm());
        }
      }
      write_file(kin_out, render_table({"t", "vx", "vy", "speed"}, rows, kin_format));
      manifest.output(kin_out);
      if (!kin_plot.empty()) {
        write_file(kin_plot, svg_series(speeds, "#1f77b4", "speed (cm/s)"));
        manifest.output(kin_plot);
      }
      manifest.write(kin_out);
      return 0;
    }

    if (vtr->parsed()) {
      Manifest manifest("vae train", args);
      manifest.seed(vtr_seed);
      const FieldSpec field = parse_field_flag(vtr_field);
      std::vector<Eigen::VectorXd> data;
      if (vtr_scripted > 0) {
        const TrajectoryShape shapes[] = {TrajectoryShape::Line, TrajectoryShape::Loop,
                                          TrajectoryShape::SprintAndLoop};
        for (int i = 0; i < vtr_scripted; ++i) {
          TrackingSeries s = scripted_trajectory(shapes[i % 3], vtr_traj_len * vtr_dt,
                                                 vtr_seed + 1000 + i, 20.0, vtr_dt, field);
          auto d = windows_to_vae_data(normalize_unit(s, field), vtr_traj_len, 1);
          if (!d.empty()) data.push_back(std::move(d.front()));
        }
      } else if (!vtr_in.empty()) {
        const std::string bytes = read_file(vtr_in);
        manifest.input(vtr_in, bytes);
        auto all = parse_tracking_csv(bytes, field, vtr_dt);
        const TrackingSeries& series = select_entity(all, vtr_entity);
        data = windows_to_vae_data(normalize_unit(series, field), vtr_traj_len, vtr_max_traj);
      } else {
        throw DataError("vae train: provide --input or --scripted");
      }
      if (data.empty()) throw DataError("vae train: no trajectories of the requested length");

      VaeConfig config;
      config.k = 2 * vtr_traj_len;
      config.d = vtr_latent;
      config.h = vtr_hidden;
      config.sigma_x = vtr_sigma_x;
      config.seed = vtr_seed;
      TrainConfig tc;
      tc.epochs = vtr_epochs;
      tc.batch_size = vtr_batch;
      TrainResult tr = train(data, config, tc);
      write_file(vtr_out, vae_to_json(tr.params));
      manifest.output(vtr_out);
      manifest.write(vtr_out);
      std::fprintf(stderr, "vae train: %zu trajectories, first-epoch loss %.4f, final %.4f\n",
                   data.size(), tr.epoch_loss.front(), tr.epoch_loss.back());
      return 0;
    }

    if (vre->parsed()) {
      Manifest manifest("vae reconstruct", args);
      const std::string pbytes = read_file(vre_params);
      manifest.input(vre_params, pbytes);
      VaeParams params = vae_from_json(pbytes);
      const std::string bytes = read_file(vre_in);
      manifest.input(vre_in, bytes);
      const FieldSpec field = parse_field_flag(vre_field);
      auto all = parse_tracking_csv(bytes, field, vre_dt);
      const TrackingSeries& series = select_entity(all, vre_entity);
      const int traj_len = params.config.k / 2;
      auto data = windows_to_vae_data(normalize_unit(series, field), traj_len, vre_count);
      if (data.empty()) throw DataError("vae reconstruct: no windows of the trained length");

      std::string csv = "trajectory,t,x_true,y_true,x_rec,y_rec\n";
      char buf[160];
      std::vector<std::vector<Eigen::Vector2d>> overlays;
      std::vector<std::string> colors;
      for (std::size_t i = 0; i < data.size(); ++i) {
        Eigen::VectorXd rec = reconstruct(params, data[i]);
        std::vector<Eigen::Vector2d> truth_pts, rec_pts;
        for (int t = 0; t < traj_len; ++t) {
          const Eigen::Vector2d pt = denormalize_point({data[i][2 * t], data[i][2 * t + 1]}, field);
          const Eigen::Vector2d pr = denormalize_point({rec[2 * t], rec[2 * t + 1]}, field);
          truth_pts.push_back(pt);
          rec_pts.push_back(pr);
          std::snprintf(buf, sizeof(buf), "%zu,%d,%.17g,%.17g,%.17g,%.17g\n", i, t, pt.x(),
                        pt.y(), pr.x(), pr.y());
          csv += buf;
        }
        overlays.push_back(std::move(truth_pts));
        colors.push_back("#ff7f0e");  // originals in orange
        overlays.push_back(std::move(rec_pts));
        colors.push_back("#000000");  // reconstructions in black
      }
      write_file(vre_out, csv);
      manifest.output(vre_out);
      if (!vre_plot.empty()) {
        write_file(vre_plot, svg_trajectories(overlays, colors, field,
                                              "originals (orange) vs reconstructions (black)"));
        manifest.output(vre_plot);
      }
      manifest.write(vre_out);
      return 0;
    }

    if (vge->parsed()) {
      Manifest manifest("vae generate", args);
      manifest.seed(vge_seed);
      const std::string pbytes = read_file(vge_params);
      manifest.input(vge_params, pbytes);
      VaeParams params = vae_from_json(pbytes);
      const FieldSpec field = parse_field_flag(vge_field);
      const int traj_len = params.config.k / 2;

      Pcg32 rng(vge_seed);
      std::string csv = "sample,t,x,y\n";
      char buf[96];
      std::vector<std::vector<Eigen::Vector2d>> overlays;
      for (int s = 0; s < vge_samples; ++s) {
        Eigen::VectorXd z(params.config.d);
        for (int j = 0; j < params.config.d; ++j) z[j] = rng.next_gaussian();
        Eigen::VectorXd traj = generate(params, z);
        std::vector<Eigen::Vector2d> pts;
        for (int t = 0; t < traj_len; ++t) {
          const Eigen::Vector2d p = denormalize_point({traj[2 * t], traj[2 * t + 1]}, field);
          pts.push_back(p);
          std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n", s, t, p.x(), p.y());
          csv += buf;
        }
        overlays.push_back(std::move(pts));
      }
      write_file(vge_out, csv);
      manifest.output(vge_out);
      if (!vge_plot.empty()) {
        write_file(vge_plot,
                   svg_trajectories(overlays,
                                    {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                     "#8c564b"},
                                    field, "generated trajectories"));
        manifest.output(vge_plot);
      }
      manifest.write(vge_out);
      return 0;
    }

    if (plt->parsed()) {
      Manifest manifest("plot", args);
      const FieldSpec field = parse_field_flag(plt_field);
      const std::string bytes = read_file(plt_in);
      manifest.input(plt_in, bytes);
      auto all = parse_tracking_csv(bytes, field);
      std::vector<std::vector<Eigen::Vector2d>> overlays;
      std::vector<std::string> colors;
      for (const auto& s : all) {
        if (plt_entity >= 0 && s.entity_id != plt_entity) continue;
        overlays.push_back(present_points(s));
        colors.push_back("#d62728");
      }
      if (!plt_overlay.empty()) {
        const std::string b2 = read_file(plt_overlay);
        manifest.input(plt_overlay, b2);
        for (const auto& s : parse_tracking_csv(b2, field)) {
          if (plt_entity >= 0 && s.entity_id != plt_entity) continue;
          overlays.push_back(present_points(s));
          colors.push_back("#1f77b4");
        }
      }
      write_file(plt_out, svg_trajectories(overlays, colors, field));
      manifest.output(plt_out);
      manifest.write(plt_out);
      return 0;
    }
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  }
  return 1;
}

}  // namespace kinetrack
