#include "cli.hpp"

#include <Eigen/Eigenvalues>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "poctrl/csv.hpp"
#include "poctrl/filter.hpp"
#include "poctrl/lq_solve.hpp"
#include "poctrl/model.hpp"
#include "poctrl/monte_carlo.hpp"
#include "poctrl/rng.hpp"
#include "poctrl/verify.hpp"

namespace poctrl::cli {
namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitSuiteFailed = 5;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by every subcommand; sentinel values mean "not given".
struct Overrides {
  std::string config_path;
  std::string out_dir = ".";
  uint64_t seed = 0;
  bool seed_given = false;
  double dt = 0.0;
  int threads = 0;
};

void reject_unknown(const json& obj, const char* where,
                    std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) known = true;
    if (!known) throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
  }
}

const json& require(const json& obj, const char* where, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(std::string(where) + ": missing key '" + key + "'");
  return *it;
}

double as_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return j.get<int>();
}

Vector parse_vector(const json& j, const std::string& where, int expect) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  if (int(j.size()) != expect)
    throw ConfigError(where + ": expected " + std::to_string(expect) + " entries, got " +
                      std::to_string(j.size()));
  Vector out(expect);
  for (int i = 0; i < expect; ++i) out(i) = as_number(j[size_t(i)], where);
  return out;
}

// Matrices are self-describing objects: {"shape": [rows, cols], "data":
// [row-major numbers]}.
Matrix parse_matrix(const json& j, const std::string& where, int rows, int cols) {
  reject_unknown(j, where.c_str(), {"shape", "data"});
  const json& shape = require(j, where.c_str(), "shape");
  if (!shape.is_array() || shape.size() != 2)
    throw ConfigError(where + ".shape: expected [rows, cols]");
  const int r = as_int(shape[0], where + ".shape");
  const int c = as_int(shape[1], where + ".shape");
  if (r != rows || c != cols)
    throw ConfigError(where + ": expected shape [" + std::to_string(rows) + ", " +
                      std::to_string(cols) + "], got [" + std::to_string(r) + ", " +
                      std::to_string(c) + "]");
  const json& data = require(j, where.c_str(), "data");
  if (!data.is_array() || int(data.size()) != rows * cols)
    throw ConfigError(where + ".data: expected " + std::to_string(rows * cols) + " numbers");
  Matrix out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < cols; ++k)
      out(i, k) = as_number(data[size_t(i * cols + k)], where + ".data");
  return out;
}

LqModel parse_model(const json& cfg) {
  const json& m = require(cfg, "config", "model");
  reject_unknown(m, "model",
                 {"n", "m", "d", "q", "T", "b0", "B", "C", "gamma_v", "D_v", "F_v", "gamma_w",
                  "D_w", "F_w", "Q", "N", "P", "x0"});
  LqModel mo;
  mo.n = as_int(require(m, "model", "n"), "model.n");
  mo.m = as_int(require(m, "model", "m"), "model.m");
  mo.d = as_int(require(m, "model", "d"), "model.d");
  mo.q = as_int(require(m, "model", "q"), "model.q");
  mo.T = as_number(require(m, "model", "T"), "model.T");
  mo.b0 = parse_vector(require(m, "model", "b0"), "model.b0", mo.n);
  mo.B = parse_matrix(require(m, "model", "B"), "model.B", mo.n, mo.n);
  mo.C = parse_matrix(require(m, "model", "C"), "model.C", mo.n, mo.q);
  auto channel_list = [&](const char* key, int count, auto&& fill) {
    const json& arr = require(m, "model", key);
    if (!arr.is_array() || int(arr.size()) != count)
      throw ConfigError(std::string("model.") + key + ": expected " + std::to_string(count) +
                        " entries");
    for (int i = 0; i < count; ++i)
      fill(arr[size_t(i)], std::string("model.") + key + "[" + std::to_string(i) + "]");
  };
  channel_list("gamma_v", mo.m, [&](const json& j, const std::string& w) {
    mo.gamma_v.push_back(parse_vector(j, w, mo.n));
  });
  channel_list("D_v", mo.m, [&](const json& j, const std::string& w) {
    mo.D_v.push_back(parse_matrix(j, w, mo.n, mo.n));
  });
  channel_list("F_v", mo.m, [&](const json& j, const std::string& w) {
    mo.F_v.push_back(parse_matrix(j, w, mo.n, mo.q));
  });
  channel_list("gamma_w", mo.d, [&](const json& j, const std::string& w) {
    mo.gamma_w.push_back(parse_vector(j, w, mo.n));
  });
  channel_list("D_w", mo.d, [&](const json& j, const std::string& w) {
    mo.D_w.push_back(parse_matrix(j, w, mo.n, mo.n));
  });
  channel_list("F_w", mo.d, [&](const json& j, const std::string& w) {
    mo.F_w.push_back(parse_matrix(j, w, mo.n, mo.q));
  });
  mo.Q = parse_matrix(require(m, "model", "Q"), "model.Q", mo.n, mo.n);
  mo.N = parse_matrix(require(m, "model", "N"), "model.N", mo.q, mo.q);
  mo.P = parse_matrix(require(m, "model", "P"), "model.P", mo.n, mo.n);
  mo.x0 = parse_vector(require(m, "model", "x0"), "model.x0", mo.n);
  try {
    finalize(mo);
  } catch (const InvalidArgumentError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return mo;
}

double solver_dt(const json& cfg, const Overrides& ov) {
  double dt = 0.0;
  if (cfg.contains("solver")) {
    reject_unknown(cfg["solver"], "solver", {"dt"});
    if (cfg["solver"].contains("dt")) dt = as_number(cfg["solver"]["dt"], "solver.dt");
  }
  if (ov.dt > 0.0) dt = ov.dt;
  return dt;
}

MCParams parse_mc(const json& cfg, const Overrides& ov) {
  MCParams mc;
  if (cfg.contains("mc")) {
    const json& b = cfg["mc"];
    reject_unknown(b, "mc", {"n_outer", "n_inner", "dt", "seed", "threads"});
    if (b.contains("n_outer")) mc.n_outer = as_int(b["n_outer"], "mc.n_outer");
    if (b.contains("n_inner")) mc.n_inner = as_int(b["n_inner"], "mc.n_inner");
    if (b.contains("dt")) mc.dt = as_number(b["dt"], "mc.dt");
    if (b.contains("seed")) {
      if (!b["seed"].is_number_unsigned() && !b["seed"].is_number_integer())
        throw ConfigError("mc.seed: expected an unsigned integer");
      mc.seed = b["seed"].get<uint64_t>();
    }
    if (b.contains("threads")) mc.threads = as_int(b["threads"], "mc.threads");
  }
  if (ov.seed_given) mc.seed = ov.seed;
  if (ov.dt > 0.0) mc.dt = ov.dt;
  if (ov.threads > 0) mc.threads = ov.threads;
  return mc;
}

const json& experiment_block(const json& cfg) {
  static const json empty = json::object();
  return cfg.contains("experiment") ? cfg["experiment"] : empty;
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
  reject_unknown(cfg, "config", {"model", "solver", "mc", "experiment"});
  return cfg;
}

void write_file(const std::string& out_dir, const std::string& name, const std::string& text) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

// ---- solve -------------------------------------------------------------

int cmd_solve(const Overrides& ov) {
  const json cfg = load_config(ov.config_path);
  reject_unknown(experiment_block(cfg), "experiment", {});
  const LqModel mo = parse_model(cfg);
  const LqSolution sol = solve_backward(mo, solver_dt(cfg, ov));

  Eigen::SelfAdjointEigenSolver<Matrix> es(sol.Lambda[0]);
  json summary;
  summary["v0"] = optimal_cost(sol);
  summary["lambda0_eigs"] = std::vector<double>(
      es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  summary["gamma_min_over_grid"] = sol.gamma_min;

  write_file(ov.out_dir, "solution.csv", solution_csv(sol));
  write_file(ov.out_dir, "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

// ---- simulate ----------------------------------------------------------

Policy parse_policy(const std::string& id, const json& exp, const LqModel& mo,
                    std::shared_ptr<const LqSolution>& sol_slot, double dt_solver) {
  double gain_scale = 1.0;
  if (exp.contains("gain_scale")) gain_scale = as_number(exp["gain_scale"], "experiment.gain_scale");
  if (id == "zero") return Policy::zero(mo.q);
  if (id == "constant") {
    if (!exp.contains("action"))
      throw ConfigError("experiment.action required for the constant policy");
    return Policy::constant(parse_vector(exp["action"], "experiment.action", mo.q));
  }
  if (id == "optimal" || id == "feedback") {
    if (!sol_slot) sol_slot = std::make_shared<LqSolution>(solve_backward(mo, dt_solver));
    return Policy::feedback(sol_slot, id == "optimal" ? 1.0 : gain_scale);
  }
  throw ConfigError("unknown policy id '" + id + "'");
}

int cmd_simulate(const Overrides& ov) {
  const json cfg = load_config(ov.config_path);
  const json& exp = experiment_block(cfg);
  reject_unknown(exp, "experiment", {"particles", "steps", "policy", "action", "gain_scale", "seed"});
  const LqModel mo = parse_model(cfg);

  int particles = 256, steps = 200;
  uint64_t seed = 1;
  std::string policy_id = "optimal";
  if (exp.contains("particles")) particles = as_int(exp["particles"], "experiment.particles");
  if (exp.contains("steps")) steps = as_int(exp["steps"], "experiment.steps");
  if (exp.contains("policy")) policy_id = exp["policy"].get<std::string>();
  if (exp.contains("seed")) seed = exp["seed"].get<uint64_t>();
  if (ov.seed_given) seed = ov.seed;
  if (particles <= 0 || steps <= 0)
    throw ConfigError("experiment: particles and steps must be positive");

  std::shared_ptr<const LqSolution> sol;
  const Policy pol = parse_policy(policy_id, exp, mo, sol, solver_dt(cfg, ov));
  const GeneralModel gm = lq_as_general(mo);
  auto w = std::make_shared<NoisePath>(
      sample_noise(mo.d, mo.T / steps, steps, derive(seed, kTagCommonNoise)));
  ParticleEnsemble ens = make_ensemble(EmpiricalMeasure::dirac(mo.x0), particles, gm, w,
                                       derive(seed, kTagExperiment));
  const EnsembleTrajectory traj = propagate(ens, gm, pol, steps);

  CsvWriter out;
  std::vector<std::string> head = {"t"};
  for (int i = 0; i < mo.n; ++i) head.push_back("mean_" + std::to_string(i));
  for (int i = 0; i < mo.n; ++i) head.push_back("var_" + std::to_string(i));
  for (int j = 0; j < mo.q; ++j) head.push_back("a_" + std::to_string(j));
  out.header(head);
  for (int k = 0; k <= steps; ++k) {
    out.cell(k * traj.dt);
    const Matrix& st = traj.states[size_t(k)];
    for (int i = 0; i < mo.n; ++i) out.cell(st.row(i).mean());
    for (int i = 0; i < mo.n; ++i) {
      const double mu = st.row(i).mean();
      out.cell(st.row(i).array().square().mean() - mu * mu);
    }
    for (int j = 0; j < mo.q; ++j) {
      if (k < steps)
        out.cell(traj.actions[size_t(k)](j));
      else
        out.cell("");
    }
    out.endrow();
  }
  write_file(ov.out_dir, "trajectory.csv", out.text);
  return kExitOk;
}

// ---- evaluate ----------------------------------------------------------

int cmd_evaluate(const Overrides& ov, const std::string& policy_id) {
  const json cfg = load_config(ov.config_path);
  const json& exp = experiment_block(cfg);
  reject_unknown(exp, "experiment", {"action", "gain_scale"});
  const LqModel mo = parse_model(cfg);
  const MCParams mc = parse_mc(cfg, ov);

  std::shared_ptr<const LqSolution> sol;
  const Policy pol = parse_policy(policy_id, exp, mo, sol, solver_dt(cfg, ov));
  const CostEstimate est = evaluate_policy(mo, pol, mc);

  CsvWriter out;
  out.header({"policy_id", "estimate", "std_err", "n_outer", "n_inner", "dt", "seed"});
  out.cell(policy_id);
  out.cell(est.estimate);
  out.cell(est.std_err);
  out.cell(est.n_outer);
  out.cell(est.n_inner);
  out.cell(est.dt);
  out.cell(std::to_string(est.seed));
  out.endrow();
  write_file(ov.out_dir, "estimate.csv", out.text);
  return kExitOk;
}

// ---- verify ------------------------------------------------------------

int cmd_verify(const Overrides& ov, const std::string& which) {
  const json cfg = load_config(ov.config_path);
  const json& exp = experiment_block(cfg);
  reject_unknown(exp, "experiment", {"seed", "threads"});
  uint64_t seed = 0;
  bool seed_given = ov.seed_given;
  if (exp.contains("seed")) {
    seed = exp["seed"].get<uint64_t>();
    seed_given = true;
  }
  if (ov.seed_given) seed = ov.seed;
  int threads = 1;
  if (exp.contains("threads")) threads = as_int(exp["threads"], "experiment.threads");
  if (ov.threads > 0) threads = ov.threads;

  SuiteReport rep;
  if (which == "hjb") {
    HjbSuiteParams p;
    if (seed_given) p.seed = seed;
    p.threads = threads;
    rep = verify_hjb(p);
  } else if (which == "flow") {
    FlowSuiteParams p;
    if (seed_given) p.seed = seed;
    p.threads = threads;
    rep = verify_flow(p);
  } else if (which == "zakai") {
    ZakaiSuiteParams p;
    if (seed_given) p.seed = seed;
    p.threads = threads;
    rep = verify_zakai(p);
  } else if (which == "kalman") {
    KalmanSuiteParams p;
    if (seed_given) p.seed = seed;
    p.threads = threads;
    rep = verify_kalman(p);
  } else if (which == "martingale") {
    MartingaleSuiteParams p;
    if (seed_given) {
      p.mart.seed = seed;
      p.envelope_mc.seed = seed;
    }
    p.threads = threads;
    rep = verify_martingale(p);
  } else if (which == "girsanov") {
    GirsanovSuiteParams p;
    if (seed_given) p.mc.seed = seed;
    p.mc.threads = threads;
    rep = verify_girsanov(p);
  } else {
    throw ConfigError("unknown verification suite '" + which +
                      "' (expected hjb, flow, zakai, kalman, martingale, or girsanov)");
  }

  write_file(ov.out_dir, "report.json", rep.json() + "\n");
  for (const Artifact& a : rep.artifacts) write_file(ov.out_dir, a.name, a.csv);
  return rep.pass() ? kExitOk : kExitSuiteFailed;
}

void emit_error(const char* code, const char* what) {
  json err;
  err["error"] = code;
  err["message"] = what;
  std::fprintf(stderr, "%s\n", err.dump().c_str());
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Partially observed stochastic control: solver, simulator, verifier"};
  app.require_subcommand(1);

  Overrides ov;
  std::string policy_id, which;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", ov.config_path, "Path to the JSON run configuration")->required();
    sub->add_option("--out", ov.out_dir, "Directory for output artifacts");
    sub->add_option("--seed", ov.seed, "Seed override")->each([&](const std::string&) {
      ov.seed_given = true;
    });
    sub->add_option("--dt", ov.dt, "Grid-step override");
    sub->add_option("--threads", ov.threads, "Worker threads (speed only, never results)");
  };
  CLI::App* solve = app.add_subcommand("solve", "Integrate the backward coefficient system");
  add_common(solve);
  CLI::App* simulate = app.add_subcommand("simulate", "Run one particle-filter trajectory");
  add_common(simulate);
  CLI::App* evaluate = app.add_subcommand("evaluate", "Nested Monte Carlo policy cost");
  add_common(evaluate);
  evaluate->add_option("policy_id", policy_id, "optimal | feedback | zero | constant")->required();
  CLI::App* verify = app.add_subcommand("verify", "Run a named verification suite");
  add_common(verify);
  verify->add_option("which", which, "hjb | flow | zakai | kalman | martingale | girsanov")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (solve->parsed()) return cmd_solve(ov);
    if (simulate->parsed()) return cmd_simulate(ov);
    if (evaluate->parsed()) return cmd_evaluate(ov, policy_id);
    return cmd_verify(ov, which);
  } catch (const ConfigError& e) {
    emit_error("config", e.what());
    return kExitConfig;
  } catch (const ValidationError& e) {
    emit_error("validation", e.what());
    return kExitValidation;
  } catch (const GammaSingularError& e) {
    emit_error("gamma_singular", e.what());
    return kExitNumerical;
  } catch (const NonFiniteError& e) {
    emit_error("non_finite", e.what());
    return kExitNumerical;
  } catch (const InvalidArgumentError& e) {
    emit_error("config", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    emit_error("internal", e.what());
    return kExitNumerical;
  }
}

}  // namespace poctrl::cli
