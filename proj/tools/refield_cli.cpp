#include <CLI11.hpp>
#include <atomic>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <thread>

#include "refield/config_io.hpp"
#include "refield/scenarios.hpp"

using namespace refield;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCertificateFail = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitNumericAbort = 3;

Scenario resolve_config(const std::string& spec) {
  if (spec.rfind("scenario:", 0) == 0) return scenario_by_name(spec.substr(9));
  if (spec == "k3p3" || spec == "k3p3-default" || spec == "k3p3-valuation")
    return scenario_by_name(spec);
  return load_config_file(spec);
}

StateVector random_valid_state(const ArchitectureConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  StateVector z = StateVector::zeros(cfg);
  auto fill = [&](Eigen::MatrixXd& m, double scale) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * gauss(rng);
  };
  fill(z.H_L, 0.5 * cfg.bounds.R_L);
  fill(z.X_R, 0.5 * cfg.bounds.R_R);
  for (Eigen::Index e = 0; e < z.Q_L.size(); ++e)
    z.Q_L[e] = cfg.bounds.eps_Q + unif(rng) * (cfg.bounds.R_Q - cfg.bounds.eps_Q);
  for (Eigen::Index e = 0; e < z.W_R.size(); ++e) z.W_R[e] = unif(rng);
  for (Eigen::Index i = 0; i < z.R_Theta.size(); ++i) z.R_Theta(i) = unif(rng);
  for (Eigen::Index i = 0; i < z.Y.size(); ++i) z.Y[i] = 0.5 * gauss(rng);
  for (Eigen::Index i = 0; i < z.P.size(); ++i) z.P[i] = 0.5 * gauss(rng);
  for (Eigen::Index i = 0; i < z.M.size(); ++i) z.M[i] = 0.5 * gauss(rng);
  for (Eigen::Index i = 0; i < z.rho.size(); ++i) z.rho[i] = unif(rng);
  return project_state(z, cfg);
}

std::function<StepInputs(long, double)> make_input_stream(const std::string& spec, int n_u) {
  if (spec.empty() || spec == "zeros") {
    return [n_u](long, double) {
      StepInputs in;
      in.u = Eigen::VectorXd::Zero(n_u);
      return in;
    };
  }
  if (spec.rfind("constant:", 0) == 0) {
    double v = std::stod(spec.substr(9));
    return [n_u, v](long, double) {
      StepInputs in;
      in.u = Eigen::VectorXd::Constant(n_u, v);
      return in;
    };
  }
  if (spec.rfind("sin:", 0) == 0) {
    std::string rest = spec.substr(4);
    auto comma = rest.find(',');
    double amp = std::stod(rest.substr(0, comma));
    double freq = comma == std::string::npos ? 1.0 : std::stod(rest.substr(comma + 1));
    return [n_u, amp, freq](long, double t) {
      StepInputs in;
      in.u = Eigen::VectorXd::Constant(n_u, amp * std::sin(2.0 * M_PI * freq * t));
      return in;
    };
  }
  if (spec.rfind("csv:", 0) == 0) {
    std::ifstream f(spec.substr(4));
    if (!f) throw ConfigError("cannot open input stream file: " + spec.substr(4));
    std::vector<StepInputs> rows;
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::stringstream ss(line);
      std::string cell;
      std::vector<double> vals;
      while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
      if (static_cast<int>(vals.size()) < n_u + 2)
        throw ConfigError("input stream rows need n_u + 2 columns (u..., action, r)");
      StepInputs in;
      in.u = Eigen::Map<Eigen::VectorXd>(vals.data(), n_u);
      in.action = static_cast<int>(vals[n_u]);
      in.outcome_r = vals[n_u + 1];
      rows.push_back(std::move(in));
    }
    if (rows.empty()) throw ConfigError("empty input stream");
    return [rows](long step, double) {
      return rows[std::min<size_t>(step, rows.size() - 1)];
    };
  }
  throw ConfigError("unknown input spec '" + spec + "' (zeros|constant:v|sin:a,f|csv:path)");
}

int cmd_check(const std::string& config, const std::string& out_path, unsigned long seed) {
  Scenario s = resolve_config(config);
  ReportOptions opts;
  opts.seed = seed;
  StabilityReport rep = build_stability_report(s.cfg, s.params, opts);
  CoarseGrainReport cg = coarse_grain_report(s.cfg, s.params, seed);
  std::cout << report_to_text(rep);
  std::cout << coarse_grain_to_text(cg);
  if (!out_path.empty()) {
    json j{{"stability", report_to_json(rep)},
           {"coarse_grain", coarse_grain_to_json(cg)},
           {"config_echo", config_to_json(s)}};
    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot open output file: " + out_path);
    out << j.dump(2) << "\n";
  }
  bool pass = rep.small_gain_ok && rep.strengthened_ok && rep.osl_ok &&
              (rep.radial_ok || rep.radial_by_projection) && rep.crossgain_ok &&
              rep.assumptions.all_checked_ok() && cg.all_pass;
  return pass ? kExitOk : kExitCertificateFail;
}

int cmd_simulate(const std::string& config, long steps, const std::string& out_path,
                 const std::string& format, int record_every, unsigned long seed,
                 const std::string& input_spec, double dt_override,
                 const std::string& checkpoint_out, const std::string& resume_path,
                 const std::string& echo_path) {
  Scenario s = resolve_config(config);
  if (dt_override > 0.0) s.cfg.dt = dt_override;

  if (!echo_path.empty()) save_config_file(s, echo_path);

  HistoryBuffer hist(0, 1.0);
  AuxState aux = AuxState::zeros(s.cfg);
  long steps_done = 0;
  if (!resume_path.empty()) {
    std::ifstream f(resume_path);
    if (!f) throw ConfigError("cannot open checkpoint: " + resume_path);
    json j;
    f >> j;
    Checkpoint cp = checkpoint_from_json(j, s.cfg);
    hist = cp.history;
    aux = cp.aux;
    steps_done = cp.steps_done;
  } else {
    std::mt19937_64 rng(seed);
    StateVector z0 = random_valid_state(s.cfg, rng);
    hist = make_history(s.cfg, z0);
  }

  IntegrateOptions opts;
  opts.record_every = record_every;
  opts.equilibrium = s.z_star;
  opts.inputs = make_input_stream(input_spec, s.params.homeostat.n_u);
  LyapunovSpec lyap;
  lyap.C_K = s.cfg.coupling_budget();
  lyap.mu_L = s.cfg.mu_L;
  lyap.mu_R = s.cfg.mu_R;
  lyap.mu_P = s.cfg.mu_P;
  opts.lyapunov = lyap;
  opts.diag_every = record_every;

  Trajectory traj;
  try {
    IntegrateOptions run_opts = opts;
    if (!resume_path.empty()) {
      // continue the input stream at the right offset
      auto base = run_opts.inputs;
      long offset = steps_done;
      double dt = s.cfg.dt;
      run_opts.inputs = [base, offset, dt](long step, double t) {
        return base(step + offset, t + offset * dt);
      };
    }
    traj = integrate(s.cfg, s.params, hist, steps, run_opts);
    traj.steps = steps_done + steps;
  } catch (const NumericAbort& e) {
    std::cerr << e.what() << "\n";
    return kExitNumericAbort;
  }

  if (!out_path.empty()) {
    if (format == "json")
      write_trajectory_json(out_path, traj, s.cfg, s.params, s.z_star);
    else
      write_trajectory_csv(out_path, traj, s.cfg, s.params, s.z_star);
  }
  if (!checkpoint_out.empty()) {
    std::ofstream out(checkpoint_out);
    if (!out) throw ConfigError("cannot open checkpoint output: " + checkpoint_out);
    out << checkpoint_to_json(traj).dump() << "\n";
  }
  if (!traj.states.empty()) {
    double err = principal_error(traj.states.back(), s.z_star);
    std::cout << "final principal error " << err << " after " << traj.steps << " steps\n";
  }
  return kExitOk;
}

struct SweepPoint {
  std::map<std::string, double> values;
};

int cmd_sweep(const std::string& config, const std::vector<std::string>& sets, long steps,
              const std::string& out_path, int workers, unsigned long seed, long grid_cap) {
  std::vector<std::pair<std::string, std::vector<double>>> axes;
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("sweep spec must be name=v1,v2,... (got '" + s + "')");
    std::string name = s.substr(0, eq);
    if (name != "tau" && name != "k" && name != "sigma" && name != "delta" && name != "alpha")
      throw ConfigError("sweep parameter must be one of tau|k|sigma|delta|alpha");
    std::vector<double> vals;
    std::stringstream ss(s.substr(eq + 1));
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    axes.emplace_back(name, vals);
  }
  std::vector<SweepPoint> grid{{}};
  for (const auto& [name, vals] : axes) {
    std::vector<SweepPoint> next;
    for (const auto& g : grid)
      for (double v : vals) {
        SweepPoint p = g;
        p.values[name] = v;
        next.push_back(p);
      }
    grid = next;
  }
  if (static_cast<long>(grid.size()) > grid_cap)
    throw ConfigError("sweep grid has " + std::to_string(grid.size()) + " points, cap is " +
                      std::to_string(grid_cap) + "; shrink an axis or raise --grid-cap");

  Scenario base = resolve_config(config);
  bool valuation = base.name == "k3p3-valuation";
  if (base.name.rfind("k3p3", 0) != 0)
    throw ConfigError("sweep rebuilds the k3p3 scenario family; use --config k3p3 or k3p3-valuation");

  struct Row {
    SweepPoint point;
    bool small_gain = false, strengthened = false, converged = false, oscillating = false;
    double final_error = 0.0;
    std::string error;
  };
  std::vector<Row> rows(grid.size());
  std::atomic<size_t> next_idx{0};

  auto run_point = [&](size_t idx) {
    Row& row = rows[idx];
    row.point = grid[idx];
    auto get = [&](const std::string& n, double dflt) {
      auto it = row.point.values.find(n);
      return it == row.point.values.end() ? dflt : it->second;
    };
    try {
      double k = get("k", base.cfg.k_gain);
      double sigma = get("sigma", base.cfg.sigma_alpha);
      double delta = get("delta", base.cfg.delta_Q);
      double alpha = get("alpha", base.params.symbolic.alpha_H);
      Scenario s = valuation
                       ? build_k3p3_valuation(k, sigma, sigma, delta, delta, alpha, alpha,
                                              base.cfg.kappa_Y, base.cfg.kappa_P, base.cfg.a_Y,
                                              base.cfg.a_P)
                       : build_k3p3(k, sigma, sigma, delta, delta, alpha, alpha, base.cfg.kappa_Y,
                                    base.cfg.kappa_P);
      double tau = get("tau", s.cfg.tau_r_to_l);
      s.cfg.tau_r_to_l = tau;
      s.cfg.tau_l_to_r = tau;

      auto [sg, al, ar] = small_gain_check(s.cfg.coupling_budget(), s.cfg.mu_L, s.cfg.mu_R);
      (void)al;
      (void)ar;
      row.small_gain = sg;
      auto [ml, mr, msdc] = state_dependent_margin(
          sigma * (std::sqrt(15.0) / 2.0), sigma * (std::sqrt(15.0) / 2.0), 3.0 * delta,
          3.0 * delta, 1.0, 1.0);
      (void)ml;
      (void)mr;
      double ck = s.cfg.coupling_budget();
      row.strengthened = ck * ck + msdc * msdc < s.cfg.mu_L * s.cfg.mu_R;

      std::mt19937_64 rng(seed + idx);
      HistoryBuffer hist = make_history(s.cfg, random_valid_state(s.cfg, rng));
      IntegrateOptions opts;
      opts.record_every = std::max<long>(1, steps / 400);
      opts.equilibrium = s.z_star;
      Trajectory traj = integrate(s.cfg, s.params, hist, steps, opts);
      row.final_error = principal_error(traj.states.back(), s.z_star);
      row.converged = row.final_error <= 1e-6;

      // oscillation: sign changes of a centered principal coordinate over the
      // last fifth of the recorded run
      size_t tail = traj.states.size() - traj.states.size() / 5;
      int sign_changes = 0;
      double prev = 0.0;
      for (size_t i = tail; i < traj.states.size(); ++i) {
        double v = traj.states[i].H_L(0, 0) - s.z_star.H_L(0, 0);
        if (i > tail && v * prev < 0.0) ++sign_changes;
        prev = v;
      }
      row.oscillating = sign_changes > 2;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };

  int n_workers = std::max(1, workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        size_t idx = next_idx.fetch_add(1);
        if (idx >= grid.size()) return;
        run_point(idx);
      }
    });
  }
  for (auto& t : pool) t.join();

  std::ostringstream table;
  table << "tau,k,sigma,delta,alpha,small_gain,strengthened,converged,final_error,oscillating,"
           "error\n";
  for (const auto& row : rows) {
    auto get = [&](const std::string& n, double dflt) {
      auto it = row.point.values.find(n);
      return it == row.point.values.end() ? dflt : it->second;
    };
    table << get("tau", base.cfg.tau_r_to_l) << "," << get("k", base.cfg.k_gain) << ","
          << get("sigma", base.cfg.sigma_alpha) << "," << get("delta", base.cfg.delta_Q) << ","
          << get("alpha", base.params.symbolic.alpha_H) << "," << row.small_gain << ","
          << row.strengthened << "," << row.converged << "," << row.final_error << ","
          << row.oscillating << "," << row.error << "\n";
  }
  std::cout << table.str();
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot open output file: " + out_path);
    out << table.str();
  }
  for (const auto& row : rows)
    if (!row.error.empty()) return kExitNumericAbort;
  return kExitOk;
}

int cmd_emit(const std::string& config, const std::string& out_path) {
  Scenario s = resolve_config(config);
  if (out_path.empty())
    std::cout << config_to_json(s).dump(2) << "\n";
  else
    save_config_file(s, out_path);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coupled symbolic-geometric RFDE: certificates, simulation, sweeps"};
  app.require_subcommand(1);

  std::string config, out_path, format = "csv", input_spec = "zeros";
  std::string checkpoint_out, resume_path, echo_path;
  long steps = 100000;
  int record_every = 100, workers = 4;
  long grid_cap = 4096;
  unsigned long seed = 42;
  double dt_override = 0.0;
  std::vector<std::string> sets;

  auto* check = app.add_subcommand("check", "evaluate stability certificates");
  check->add_option("--config", config, "config file or scenario name")->required();
  check->add_option("--out", out_path, "JSON report output path");
  check->add_option("--seed", seed, "seed for sampled certificates");

  auto* simulate = app.add_subcommand("simulate", "integrate a trajectory");
  simulate->add_option("--config", config, "config file or scenario name")->required();
  simulate->add_option("--steps", steps, "number of Euler steps");
  simulate->add_option("--dt", dt_override, "override the configured step size");
  simulate->add_option("--out", out_path, "trajectory output path");
  simulate->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  simulate->add_option("--record-every", record_every, "recording stride");
  simulate->add_option("--seed", seed, "seed for the random initial history");
  simulate->add_option("--input", input_spec, "zeros|constant:v|sin:a,f|csv:path");
  simulate->add_option("--checkpoint-out", checkpoint_out, "write a resumable checkpoint");
  simulate->add_option("--resume", resume_path, "resume from a checkpoint");
  simulate->add_option("--echo-config", echo_path, "write the full effective config");

  auto* sweep = app.add_subcommand("sweep", "grid sweep over scenario parameters");
  sweep->add_option("--config", config, "k3p3 or k3p3-valuation")->required();
  sweep->add_option("--set", sets, "axis spec name=v1,v2,... (tau|k|sigma|delta|alpha)")
      ->required();
  sweep->add_option("--steps", steps, "steps per grid point");
  sweep->add_option("--out", out_path, "summary CSV path");
  sweep->add_option("--workers", workers, "concurrent grid workers");
  sweep->add_option("--seed", seed, "seed for initial histories");
  sweep->add_option("--grid-cap", grid_cap, "maximum number of grid points");

  auto* emit = app.add_subcommand("emit-config", "print a scenario's full config");
  emit->add_option("--config", config, "config file or scenario name")->required();
  emit->add_option("--out", out_path, "output path (stdout otherwise)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (check->parsed()) return cmd_check(config, out_path, seed);
    if (simulate->parsed())
      return cmd_simulate(config, steps, out_path, format, record_every, seed, input_spec,
                          dt_override, checkpoint_out, resume_path, echo_path);
    if (sweep->parsed())
      return cmd_sweep(config, sets, steps, out_path, workers, seed, grid_cap);
    if (emit->parsed()) return cmd_emit(config, out_path);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfigError;
  } catch (const NumericAbort& e) {
    std::cerr << e.what() << "\n";
    return kExitNumericAbort;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumericAbort;
  }
  return kExitOk;
}
