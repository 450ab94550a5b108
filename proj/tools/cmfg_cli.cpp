#include <CLI11.hpp>
#include <json.hpp>

#include <cmfg/cmfomo.hpp>
#include <cmfg/core.hpp>
#include <cmfg/io.hpp>
#include <cmfg/metrics.hpp>
#include <cmfg/nplayer.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cmfg {
namespace {

struct EnvFlags {
  std::string env_path;
  std::string builtin;
  int T = 10;
  double mu0_I = 0.5;
  double gamma0 = 0.25;
  std::string constraint = "agent_state";
};

struct SolverFlags {
  double lr = 5e-3;
  int iters = 20000;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  double tighten_eps0 = 0.0;
  double c1 = 1.0, c2 = 1.0, c3 = 1.0, c4 = 1.0, c5 = 1.0;
  int gap_every = 100;
};

void add_env_flags(CLI::App* cmd, EnvFlags& f) {
  cmd->add_option("--env", f.env_path, "environment description JSON");
  cmd->add_option("--builtin", f.builtin, "built-in model name (sis)");
  cmd->add_option("--T", f.T, "decision steps of the builtin (horizon is T+1)");
  cmd->add_option("--mu0-I", f.mu0_I, "initial infected fraction of the builtin");
  cmd->add_option("--gamma0", f.gamma0, "constraint threshold of the builtin");
  cmd->add_option("--constraint", f.constraint, "agent_state | agent_action | pop_state");
}

void add_solver_flags(CLI::App* cmd, SolverFlags& f) {
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--iters", f.iters, "iteration budget");
  cmd->add_option("--tol", f.tol, "convergence tolerance on the objective");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--tighten-eps0", f.tighten_eps0, "solve under gamma0 - eps0");
  cmd->add_option("--c1", f.c1, "dual residual weight");
  cmd->add_option("--c2", f.c2, "flow residual weight");
  cmd->add_option("--c3", f.c3, "complementary slackness weight");
  cmd->add_option("--c4", f.c4, "constraint slack weight");
  cmd->add_option("--c5", f.c5, "multiplier coupling weight");
  cmd->add_option("--gap-every", f.gap_every, "trace gap sampling period, <= 0 disables");
}

EnvironmentModel make_env(const EnvFlags& f) {
  if (!f.env_path.empty()) return load_affine_env(affine_env_from_file(f.env_path));
  if (f.builtin == "sis") {
    return builtin_sis(f.T, f.mu0_I, f.gamma0, constraint_kind_from_string(f.constraint));
  }
  if (f.builtin.empty()) throw ValidationError("no environment: pass --env FILE or --builtin sis");
  throw ValidationError("unknown builtin: " + f.builtin);
}

SolveConfig make_config(const SolverFlags& f) {
  SolveConfig cfg;
  cfg.coeffs = CmfomoCoeffs{f.c1, f.c2, f.c3, f.c4, f.c5};
  cfg.learning_rate = f.lr;
  cfg.max_iters = f.iters;
  cfg.tolerance = f.tol;
  cfg.seed = f.seed;
  cfg.tighten_eps0 = f.tighten_eps0;
  cfg.gap_trace_every = f.gap_every;
  return cfg;
}

json env_echo(const EnvFlags& f) {
  return json{{"env", f.env_path},     {"builtin", f.builtin},
              {"T", f.T},              {"mu0_I", f.mu0_I},
              {"gamma0", f.gamma0},    {"constraint", f.constraint}};
}

json solver_echo(const SolverFlags& f) {
  return json{{"lr", f.lr},
              {"iters", f.iters},
              {"tol", f.tol},
              {"seed", f.seed},
              {"tighten_eps0", f.tighten_eps0},
              {"c", {f.c1, f.c2, f.c3, f.c4, f.c5}},
              {"gap_every", f.gap_every}};
}

std::string value_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Strict feasibility margin of a policy under the environment's thresholds;
// +inf for unconstrained games.
double policy_margin(const EnvironmentModel& env, const Policy& pi) {
  if (env.dims.n_constraints == 0) return std::numeric_limits<double>::infinity();
  const std::vector<double> lhs = cost_lhs(env, flow_from_policy(pi, env));
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < env.dims.n_constraints; ++i) {
    margin = std::min(margin, env.gamma0[i] - lhs[i]);
  }
  return margin;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void emit_solve_files(const std::string& dir, const EnvironmentModel& env, const SolveResult& res,
                      bool svg, std::vector<std::string>& outputs, const std::string& prefix) {
  const GapReport gr = gaps(env, res.policy);
  write_file_atomic(dir + "/trace.csv", trace_csv(res.trace));
  outputs.push_back(prefix + "trace.csv");
  write_file_atomic(dir + "/result.json", solve_result_json(res, gr));
  outputs.push_back(prefix + "result.json");
  write_file_atomic(dir + "/flow.csv", flow_csv(res.state.L));
  outputs.push_back(prefix + "flow.csv");
  if (!svg) return;

  ChartSeries objective{"objective", {}, {}};
  ChartSeries gopt{"g_opt", {}, {}};
  ChartSeries gfea{"g_fea", {}, {}};
  for (const TraceRow& r : res.trace) {
    objective.xs.push_back(r.iter);
    objective.ys.push_back(r.objective);
    if (r.has_gaps) {
      gopt.xs.push_back(r.iter);
      gopt.ys.push_back(r.g_opt);
      gfea.xs.push_back(r.iter);
      gfea.ys.push_back(r.g_fea);
    }
  }
  write_file_atomic(dir + "/trace.svg",
                    line_chart_svg("solver progress", "iteration", "value",
                                   {objective, gopt, gfea}, true));
  outputs.push_back(prefix + "trace.svg");

  const GameDims& d = env.dims;
  std::vector<ChartSeries> marginals;
  for (int s = 0; s < d.n_states; ++s) {
    ChartSeries cs{"mu_" + std::to_string(s), {}, {}};
    for (int t = 0; t < d.horizon_len; ++t) {
      double m = 0.0;
      for (int a = 0; a < d.n_actions; ++a) m += res.state.L.at(t, s, a);
      cs.xs.push_back(t);
      cs.ys.push_back(m);
    }
    marginals.push_back(std::move(cs));
  }
  for (int a = 0; a < d.n_actions; ++a) {
    ChartSeries cs{"act_" + std::to_string(a), {}, {}};
    for (int t = 0; t < d.horizon_len; ++t) {
      double m = 0.0;
      for (int s = 0; s < d.n_states; ++s) m += res.state.L.at(t, s, a);
      cs.xs.push_back(t);
      cs.ys.push_back(m);
    }
    marginals.push_back(std::move(cs));
  }
  write_file_atomic(dir + "/flow.svg",
                    line_chart_svg("flow marginals", "t", "mass", marginals, false));
  outputs.push_back(prefix + "flow.svg");
}

int cmd_solve(const EnvFlags& ef, const SolverFlags& sf, const std::string& out_dir, bool svg) {
  Timer timer;
  const EnvironmentModel env = make_env(ef);
  const SolveConfig cfg = make_config(sf);
  log_line(LogLevel::info, "solve: starting, " + std::to_string(cfg.max_iters) + " iterations");
  const SolveResult res = env.population_level ? solve_population(env, cfg) : solve(env, cfg);
  log_line(LogLevel::info, "solve: objective " + format_double(res.state.objective) +
                               (res.converged ? ", converged" : ", iteration budget exhausted"));

  fs::create_directories(out_dir);
  std::vector<std::string> outputs;
  emit_solve_files(out_dir, env, res, svg, outputs, "");

  RunManifest m;
  m.command = "solve";
  m.config_json =
      json{{"environment", env_echo(ef)}, {"solver", solver_echo(sf)}, {"svg", svg}}.dump();
  m.version = build_version();
  m.seed = sf.seed;
  m.wall_clock_seconds = timer.seconds();
  m.outputs = outputs;
  write_manifest(out_dir, m);
  return res.converged ? 0 : 3;
}

int cmd_sweep(const EnvFlags& ef, const SolverFlags& sf, const std::string& out_dir, bool svg,
              int jobs, const std::vector<double>& gamma0_list,
              const std::vector<double>& eps0_list) {
  Timer timer;
  if (gamma0_list.empty() == eps0_list.empty()) {
    throw ValidationError("sweep: pass exactly one of --gamma0-list or --eps0-list");
  }
  const bool over_gamma0 = !gamma0_list.empty();
  const std::vector<double>& values = over_gamma0 ? gamma0_list : eps0_list;
  const EnvironmentModel base_env = make_env(ef);

  struct Item {
    double value = 0.0;
    std::string dir_name;
    bool ok = false;
    bool converged = false;
    std::string error;
    double g_opt = 0.0, g_fea = 0.0, avg_cost = 0.0, objective = 0.0;
    bool g_opt_defined = false, has_cost = false;
    std::vector<std::string> outputs;
  };
  std::vector<Item> items(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    items[i].value = values[i];
    items[i].dir_name =
        (over_gamma0 ? "gamma0_" : "eps0_") + value_label(values[i]);
  }

  fs::create_directories(out_dir);
  std::atomic<std::size_t> cursor{0};
  const auto work = [&](std::size_t i) {
    Item& it = items[i];
    try {
      EnvironmentModel env = base_env;
      SolveConfig cfg = make_config(sf);
      if (over_gamma0) {
        AffineEnvSpec sp = base_env.spec;
        std::fill(sp.gamma0.begin(), sp.gamma0.end(), it.value);
        env = load_affine_env(sp);
      } else {
        cfg.tighten_eps0 = it.value;
      }
      const SolveResult res = env.population_level ? solve_population(env, cfg) : solve(env, cfg);
      const GapReport gr = gaps(env, res.policy);
      const std::string dir = out_dir + "/" + it.dir_name;
      fs::create_directories(dir);
      emit_solve_files(dir, env, res, svg, it.outputs, it.dir_name + "/");
      it.converged = res.converged;
      it.objective = res.state.objective;
      it.g_opt = gr.g_opt;
      it.g_opt_defined = gr.v_star_defined;
      it.g_fea = gr.g_fea;
      if (!gr.cost_vector.empty()) {
        it.avg_cost = gr.cost_vector[0];
        it.has_cost = true;
      }
      it.ok = true;
    } catch (const std::exception& e) {
      it.error = e.what();
      log_line(LogLevel::error, "sweep value " + value_label(it.value) + ": " + e.what());
    }
  };
  const unsigned hw = std::thread::hardware_concurrency();
  std::size_t pool_size = jobs > 0 ? static_cast<std::size_t>(jobs) : (hw ? hw : 1);
  pool_size = std::min(pool_size, items.size());
  if (pool_size <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(pool_size);
    for (std::size_t w = 0; w < pool_size; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = cursor.fetch_add(1)) < items.size();) work(i);
      });
    }
    for (std::thread& th : pool) th.join();
  }

  CsvBuilder csv({"value", "g_opt", "g_fea", "avg_cost", "objective"});
  std::vector<std::string> outputs;
  json failures = json::array();
  for (const Item& it : items) {
    if (!it.ok) {
      failures.push_back({{"value", it.value}, {"error", it.error}});
      continue;
    }
    csv.row({format_double(it.value), it.g_opt_defined ? format_double(it.g_opt) : "",
             format_double(it.g_fea), it.has_cost ? format_double(it.avg_cost) : "",
             format_double(it.objective)});
    outputs.insert(outputs.end(), it.outputs.begin(), it.outputs.end());
  }
  write_file_atomic(out_dir + "/sweep.csv", csv.str());
  outputs.push_back("sweep.csv");
  std::sort(outputs.begin(), outputs.end());

  RunManifest m;
  m.command = "sweep";
  m.config_json = json{{"environment", env_echo(ef)},
                       {"solver", solver_echo(sf)},
                       {"sweep", over_gamma0 ? "gamma0" : "eps0"},
                       {"values", values},
                       {"jobs", jobs},
                       {"svg", svg},
                       {"failures", failures}}
                      .dump();
  m.version = build_version();
  m.seed = sf.seed;
  m.wall_clock_seconds = timer.seconds();
  m.outputs = outputs;
  write_manifest(out_dir, m);
  return failures.empty() ? 0 : 4;
}

int cmd_nplayer(const EnvFlags& ef, const std::string& policy_path, std::vector<int> ns,
                int episodes, std::uint64_t seed, int jobs, double target_eps, double delta,
                const std::string& out_dir) {
  Timer timer;
  const EnvironmentModel env = make_env(ef);
  const Policy pi = policy_from_json_text(read_file(policy_path));
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());

  NPlayerConfig cfg;
  cfg.n_episodes = episodes;
  cfg.seed = seed;
  cfg.n_threads = jobs;
  const RateStudy study = rate_study(env, pi, ns, cfg);
  log_line(LogLevel::info, "nplayer: deviation decay slope " + format_double(study.slope));

  // The certificate needs a strict feasibility margin; when the policy has
  // none (or the required player count is unrepresentable) the slope report
  // still stands and the reason is recorded.
  std::vector<std::string> warnings;
  EpsNeCertificate cert;
  bool have_cert = false;
  if (delta <= 0.0) {
    const double margin = policy_margin(env, pi);
    if (std::isinf(margin)) {
      delta = 1.0;
    } else {
      delta = margin;
    }
  }
  if (delta > 0.0) {
    if (target_eps <= 0.0) target_eps = 0.5 * delta;
    try {
      cert = epsilon_ne_certificate(env, pi, target_eps, delta);
      have_cert = true;
    } catch (const ValidationError& e) {
      warnings.push_back(std::string("certificate skipped: ") + e.what());
    }
  } else {
    warnings.push_back(
        "certificate skipped: policy has no strict feasibility margin; pass --delta");
  }
  if (have_cert) {
    for (int n : ns) {
      if (n < cert.n_required) {
        warnings.push_back("n_players " + std::to_string(n) + " is below the certified minimum " +
                           std::to_string(cert.n_required));
      }
    }
  }
  for (const std::string& w : warnings) log_line(LogLevel::info, "nplayer: " + w);

  fs::create_directories(out_dir);
  write_file_atomic(out_dir + "/nplayer.csv", nplayer_csv(study));
  write_file_atomic(out_dir + "/certificate.json",
                    certificate_json(have_cert ? &cert : nullptr, &study, warnings));

  RunManifest m;
  m.command = "nplayer";
  m.config_json = json{{"environment", env_echo(ef)},
                       {"policy", policy_path},
                       {"Ns", ns},
                       {"episodes", episodes},
                       {"seed", seed},
                       {"jobs", jobs},
                       {"target_eps", target_eps},
                       {"delta", delta}}
                      .dump();
  m.version = build_version();
  m.seed = seed;
  m.wall_clock_seconds = timer.seconds();
  m.outputs = {"certificate.json", "nplayer.csv"};
  write_manifest(out_dir, m);
  return 0;
}

int cmd_bounds(const EnvFlags& ef, const SolverFlags& sf, double delta, double eps0,
               const std::string& out_dir) {
  Timer timer;
  const EnvironmentModel env = make_env(ef);
  if (delta < 0.0) {
    delta = std::max(0.0, policy_margin(env, uniform_policy(env.dims)));
    if (std::isinf(delta)) delta = 0.0;
  }
  const CmfomoCoeffs coeffs{sf.c1, sf.c2, sf.c3, sf.c4, sf.c5};
  const BoundSet bs = bound_constants(env, coeffs, delta, eps0);
  const std::string text = bound_set_json(bs);
  std::cout << text;
  if (out_dir.empty()) return 0;

  fs::create_directories(out_dir);
  write_file_atomic(out_dir + "/bounds.json", text);
  RunManifest m;
  m.command = "bounds";
  m.config_json = json{{"environment", env_echo(ef)},
                       {"c", {sf.c1, sf.c2, sf.c3, sf.c4, sf.c5}},
                       {"delta", delta},
                       {"eps0", eps0}}
                      .dump();
  m.version = build_version();
  m.wall_clock_seconds = timer.seconds();
  m.outputs = {"bounds.json"};
  write_manifest(out_dir, m);
  return 0;
}

int cmd_certify(const EnvFlags& ef, const SolverFlags& sf, const std::string& policy_path,
                const std::string& out_dir) {
  Timer timer;
  const EnvironmentModel env = make_env(ef);
  const Policy pi = policy_from_json_text(read_file(policy_path));
  const CmfomoCoeffs coeffs{sf.c1, sf.c2, sf.c3, sf.c4, sf.c5};
  const CertifyReport rep = certify_from_policy(env, pi, coeffs);

  json j;
  j["objective_actual"] = rep.objective_actual;
  j["objective_bound"] = std::isfinite(rep.objective_bound) ? json(rep.objective_bound)
                                                            : json(nullptr);
  j["pass"] = rep.objective_actual <= rep.objective_bound + 1e-8;
  j["eps1"] = rep.eps1;
  j["eps2"] = rep.eps2;
  j["delta"] = rep.delta;
  j["terms"] = {{"term1", rep.breakdown.term1},
                {"term2", rep.breakdown.term2},
                {"term3", rep.breakdown.term3},
                {"term4", rep.breakdown.term4},
                {"term5", rep.breakdown.term5}};
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (out_dir.empty()) return 0;

  fs::create_directories(out_dir);
  write_file_atomic(out_dir + "/certify.json", text);
  RunManifest m;
  m.command = "certify";
  m.config_json = json{{"environment", env_echo(ef)},
                       {"policy", policy_path},
                       {"c", {sf.c1, sf.c2, sf.c3, sf.c4, sf.c5}}}
                      .dump();
  m.version = build_version();
  m.wall_clock_seconds = timer.seconds();
  m.outputs = {"certify.json"};
  write_manifest(out_dir, m);
  return 0;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 2;
  }
}

}  // namespace
}  // namespace cmfg

int main(int argc, char** argv) {
  using namespace cmfg;
  CLI::App app{"Constrained mean-field game solver"};
  app.require_subcommand(1);

  EnvFlags ef;
  SolverFlags sf;
  std::string out_dir = ".";
  bool svg = false;
  int jobs = 0;
  std::vector<double> gamma0_list, eps0_list;
  std::string policy_path;
  std::vector<int> ns = {10, 50, 100, 500};
  int episodes = 2000;
  std::uint64_t np_seed = 0;
  double target_eps = 0.0;
  double np_delta = 0.0;
  double bounds_delta = -1.0;
  double bounds_eps0 = 0.0;
  std::string opt_out_dir;

  CLI::App* c_solve = app.add_subcommand("solve", "optimize a constrained equilibrium");
  add_env_flags(c_solve, ef);
  add_solver_flags(c_solve, sf);
  c_solve->add_option("--out-dir", out_dir, "output directory");
  c_solve->add_flag("--svg", svg, "also write SVG charts");

  CLI::App* c_sweep = app.add_subcommand("sweep", "solve across a list of thresholds");
  add_env_flags(c_sweep, ef);
  add_solver_flags(c_sweep, sf);
  c_sweep->add_option("--out-dir", out_dir, "output directory");
  c_sweep->add_flag("--svg", svg, "also write SVG charts");
  c_sweep->add_option("--jobs", jobs, "parallel solves, 0 = logical cores");
  c_sweep->add_option("--gamma0-list", gamma0_list, "thresholds to sweep")->delimiter(',');
  c_sweep->add_option("--eps0-list", eps0_list, "tightenings to sweep")->delimiter(',');

  CLI::App* c_nplayer = app.add_subcommand("nplayer", "finite-population validation of a policy");
  add_env_flags(c_nplayer, ef);
  c_nplayer->add_option("--policy", policy_path, "result.json from a prior solve")->required();
  c_nplayer->add_option("--Ns", ns, "player counts")->delimiter(',');
  c_nplayer->add_option("--episodes", episodes, "episodes per player count");
  c_nplayer->add_option("--seed", np_seed, "random seed");
  c_nplayer->add_option("--jobs", jobs, "episode workers, 0 = logical cores");
  c_nplayer->add_option("--target-eps", target_eps, "certificate target, 0 = delta/2");
  c_nplayer->add_option("--delta", np_delta, "feasibility margin, 0 = measured from the policy");
  c_nplayer->add_option("--out-dir", out_dir, "output directory");

  CLI::App* c_bounds = app.add_subcommand("bounds", "print the certification constants");
  add_env_flags(c_bounds, ef);
  add_solver_flags(c_bounds, sf);
  c_bounds->add_option("--delta", bounds_delta, "margin, default measured at the uniform policy");
  c_bounds->add_option("--eps0", bounds_eps0, "tightening for the shifted constants");
  c_bounds->add_option("--out-dir", opt_out_dir, "also write bounds.json there");

  CLI::App* c_certify = app.add_subcommand("certify", "check a policy's feasible-point bound");
  add_env_flags(c_certify, ef);
  add_solver_flags(c_certify, sf);
  c_certify->add_option("--policy", policy_path, "result.json from a prior solve")->required();
  c_certify->add_option("--out-dir", opt_out_dir, "also write certify.json there");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (c_solve->parsed()) {
    return guarded([&] { return cmd_solve(ef, sf, out_dir, svg); });
  }
  if (c_sweep->parsed()) {
    return guarded([&] { return cmd_sweep(ef, sf, out_dir, svg, jobs, gamma0_list, eps0_list); });
  }
  if (c_nplayer->parsed()) {
    return guarded([&] {
      return cmd_nplayer(ef, policy_path, ns, episodes, np_seed, jobs, target_eps, np_delta,
                         out_dir);
    });
  }
  if (c_bounds->parsed()) {
    return guarded([&] { return cmd_bounds(ef, sf, bounds_delta, bounds_eps0, opt_out_dir); });
  }
  return guarded([&] { return cmd_certify(ef, sf, policy_path, opt_out_dir); });
}
