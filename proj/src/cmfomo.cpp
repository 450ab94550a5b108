#include <cmfg/cmfomo.hpp>
#include <cmfg/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cmfg {

namespace {

// Norms below this squared mass count as exact zero; their subgradient is 0.
constexpr double kNormCutoff = 1e-24;

double safe_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s <= kNormCutoff ? 0.0 : std::sqrt(s);
}

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_state_shape(const EnvironmentModel& env, const CmfomoState& state) {
  const GameDims& d = env.dims;
  if (!(state.L.dims == d)) throw ValidationError("cmfomo state: flow dims mismatch");
  if (static_cast<int>(state.y.size()) != d.dual_size() ||
      static_cast<int>(state.z.size()) != d.flat_size() ||
      static_cast<int>(state.lambda.size()) != d.n_constraints ||
      static_cast<int>(state.w.size()) != d.n_constraints) {
    throw ValidationError("cmfomo state: vector lengths do not match env dims");
  }
}

struct Residuals {
  std::vector<double> P;   // [t][s][a][s'] at the state's flow
  std::vector<double> r;   // flat rewards
  std::vector<double> C;   // k x flat costs
  std::vector<double> CL;  // constraint left-hand sides
  std::vector<double> u1;  // dual feasibility residual, flat
  std::vector<double> u2;  // flow consistency residual, dual-sized
  std::vector<double> u4;  // slack residual, k
  double u5 = 0.0;         // multiplier coupling
};

Residuals compute_residuals(const EnvironmentModel& env, const CmfomoState& st) {
  const GameDims& d = env.dims;
  const int S = d.n_states, A = d.n_actions, H = d.horizon_len, k = d.n_constraints;
  const int n = d.flat_size();

  Residuals R;
  R.P = transition_all(env, st.L);
  R.r = reward_all(env, st.L);
  R.C = cost_all(env, st.L);
  R.CL.assign(k, 0.0);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n; ++j) R.CL[i] += R.C[static_cast<std::size_t>(i) * n + j] * st.L.values[j];
  }

  R.u1.assign(n, 0.0);
  for (int t = 0; t < H; ++t) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const int col = d.idx(t, s, a);
        double aty = 0.0;
        if (t + 1 < H) {
          const std::size_t base = (static_cast<std::size_t>(col)) * S;
          for (int sn = 0; sn < S; ++sn) aty += R.P[base + sn] * st.y[t * S + sn];
        }
        if (t >= 1) aty -= st.y[(t - 1) * S + s];
        if (t == 0) aty += st.y[(H - 1) * S + s];
        double cl = 0.0;
        for (int i = 0; i < k; ++i) cl += st.lambda[i] * R.C[static_cast<std::size_t>(i) * n + col];
        R.u1[col] = aty + st.z[col] + R.r[col] - cl;
      }
    }
  }

  R.u2.assign(static_cast<std::size_t>(S) * H, 0.0);
  for (int t = 0; t + 1 < H; ++t) {
    for (int sn = 0; sn < S; ++sn) {
      double acc = 0.0;
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          acc += R.P[(static_cast<std::size_t>(d.idx(t, s, a))) * S + sn] *
                 st.L.values[d.idx(t, s, a)];
        }
      }
      for (int a = 0; a < A; ++a) acc -= st.L.values[d.idx(t + 1, sn, a)];
      R.u2[t * S + sn] = acc;
    }
  }
  for (int s = 0; s < S; ++s) {
    double acc = -env.mu0[s];
    for (int a = 0; a < A; ++a) acc += st.L.values[d.idx(0, s, a)];
    R.u2[(H - 1) * S + s] = acc;
  }

  R.u4.assign(k, 0.0);
  R.u5 = 0.0;
  for (int i = 0; i < k; ++i) {
    const double slack = env.gamma0[i] - R.CL[i];
    R.u4[i] = slack - st.w[i];
    R.u5 += st.lambda[i] * slack;
  }
  return R;
}

}  // namespace

BoundBox make_bound_box(const EnvironmentModel& env, double delta) {
  const GameDims& d = env.dims;
  const int S = d.n_states, A = d.n_actions, H = d.horizon_len, k = d.n_constraints;
  const double delta_eff = std::max(delta, 0.2);
  const double fac = k > 0 ? 1.0 + H * env.c_abs_max / delta_eff : 1.0;
  BoundBox box;
  box.beta_y = S * H * (H + 1) / 2.0 * env.r_abs_max * fac;
  box.beta_z = static_cast<double>(S) * A * (H * H - H + 2) * env.r_abs_max * fac;
  box.beta_lambda = k > 0 ? H * env.r_abs_max / delta_eff : 0.0;
  box.delta = delta;
  box.gamma0 = env.gamma0;
  return box;
}

BoundBox make_population_bound_box(const EnvironmentModel& env) {
  const GameDims& d = env.dims;
  const int S = d.n_states, A = d.n_actions, H = d.horizon_len;
  BoundBox box;
  box.beta_y = S * H * (H + 1) / 2.0 * env.r_abs_max;
  box.beta_z = static_cast<double>(S) * A * (H * H - H + 2) * env.r_abs_max;
  box.beta_lambda = 0.0;
  box.delta = 0.0;
  box.gamma0 = env.gamma0;
  return box;
}

ObjectiveBreakdown objective(const EnvironmentModel& env, const CmfomoState& state,
                             const CmfomoCoeffs& coeffs) {
  check_state_shape(env, state);
  const Residuals R = compute_residuals(env, state);
  ObjectiveBreakdown br;
  br.term1 = coeffs.c1 * safe_norm(R.u1);
  br.term2 = coeffs.c2 * safe_norm(R.u2);
  br.term3 = coeffs.c3 * dot(state.z, state.L.values);
  br.term4 = coeffs.c4 * safe_norm(R.u4);
  br.term5 = coeffs.c5 * std::abs(R.u5);
  br.total = br.term1 + br.term2 + br.term3 + br.term4 + br.term5;
  return br;
}

Gradients gradient(const EnvironmentModel& env, const CmfomoState& state,
                   const CmfomoCoeffs& coeffs) {
  check_state_shape(env, state);
  const GameDims& d = env.dims;
  const int S = d.n_states, A = d.n_actions, H = d.horizon_len, k = d.n_constraints;
  const int n = d.flat_size(), J = d.slice_size();
  const Residuals R = compute_residuals(env, state);

  const double n1 = safe_norm(R.u1), n2 = safe_norm(R.u2), n4 = safe_norm(R.u4);
  const double f1 = n1 > 0.0 ? coeffs.c1 / n1 : 0.0;
  const double f2 = n2 > 0.0 ? coeffs.c2 / n2 : 0.0;
  const double f4 = n4 > 0.0 ? coeffs.c4 / n4 : 0.0;
  const double s5 = sign_of(R.u5);

  Gradients g;
  g.d_L.assign(n, 0.0);
  g.d_lambda.assign(k, 0.0);

  std::vector<double> acc(J, 0.0);
  for (int tau = 0; tau < H; ++tau) {
    const double* Ltau = &state.L.values[static_cast<std::size_t>(tau) * J];
    double* out = &g.d_L[static_cast<std::size_t>(tau) * J];

    // dual-feasibility residual against the slice Jacobians
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const double coef = R.u1[d.idx(tau, s, a)];
        if (coef == 0.0) continue;
        if (tau + 1 < H) {
          for (int sn = 0; sn < S; ++sn) {
            const double ys = state.y[tau * S + sn];
            if (ys == 0.0) continue;
            const double* pj = env.p_jac(tau, s, a, sn);
            for (int j = 0; j < J; ++j) acc[j] += coef * ys * pj[j];
          }
        }
        const double* rj = env.r_jac(tau, s, a);
        for (int j = 0; j < J; ++j) acc[j] += coef * rj[j];
        for (int i = 0; i < k; ++i) {
          const double li = state.lambda[i];
          if (li == 0.0) continue;
          const double* cj = env.c_jac(i, tau, s, a);
          for (int j = 0; j < J; ++j) acc[j] -= coef * li * cj[j];
        }
      }
    }
    for (int j = 0; j < J; ++j) out[j] += f1 * acc[j];

    // flow-consistency residual: direct transition entries plus the Jacobian
    // weighted by the slice flow, then the two unit blocks
    if (tau + 1 < H) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int sn = 0; sn < S; ++sn) {
        const double w2 = R.u2[tau * S + sn];
        if (w2 == 0.0) continue;
        for (int s = 0; s < S; ++s) {
          for (int a = 0; a < A; ++a) {
            acc[s * A + a] += w2 * R.P[(static_cast<std::size_t>(d.idx(tau, s, a))) * S + sn];
            const double lv = Ltau[s * A + a];
            if (lv == 0.0) continue;
            const double* pj = env.p_jac(tau, s, a, sn);
            for (int j = 0; j < J; ++j) acc[j] += w2 * lv * pj[j];
          }
        }
      }
      for (int j = 0; j < J; ++j) out[j] += f2 * acc[j];
    }
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double v = 0.0;
        if (tau >= 1) v -= R.u2[(tau - 1) * S + s];
        if (tau == 0) v += R.u2[(H - 1) * S + s];
        out[s * A + a] += f2 * v;
      }
    }

    // slackness term
    for (int j = 0; j < J; ++j) out[j] += coeffs.c3 * state.z[d.idx(tau, 0, 0) + j];

    // constraint rows: residual and coupling share the same affine derivative
    for (int i = 0; i < k; ++i) {
      const double wgt = -f4 * R.u4[i] - coeffs.c5 * s5 * state.lambda[i];
      if (wgt == 0.0) continue;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          acc[s * A + a] += R.C[static_cast<std::size_t>(i) * n + d.idx(tau, s, a)];
          const double lv = Ltau[s * A + a];
          if (lv == 0.0) continue;
          const double* cj = env.c_jac(i, tau, s, a);
          for (int j = 0; j < J; ++j) acc[j] += lv * cj[j];
        }
      }
      for (int j = 0; j < J; ++j) out[j] += wgt * acc[j];
    }
  }

  for (int i = 0; i < k; ++i) {
    double cu = 0.0;
    for (int j = 0; j < n; ++j) cu += R.C[static_cast<std::size_t>(i) * n + j] * R.u1[j];
    g.d_lambda[i] = -f1 * cu + coeffs.c5 * s5 * (env.gamma0[i] - R.CL[i]);
  }
  return g;
}

Gradients gradient_fd(const EnvironmentModel& env, const CmfomoState& state,
                      const CmfomoCoeffs& coeffs, double h) {
  check_state_shape(env, state);
  const int n = env.dims.flat_size(), k = env.dims.n_constraints;
  Gradients g;
  g.d_L.assign(n, 0.0);
  g.d_lambda.assign(k, 0.0);
  CmfomoState probe = state;
  for (int j = 0; j < n; ++j) {
    const double keep = probe.L.values[j];
    probe.L.values[j] = keep + h;
    const double up = objective(env, probe, coeffs).total;
    probe.L.values[j] = keep - h;
    const double dn = objective(env, probe, coeffs).total;
    probe.L.values[j] = keep;
    g.d_L[j] = (up - dn) / (2.0 * h);
  }
  for (int i = 0; i < k; ++i) {
    const double keep = probe.lambda[i];
    probe.lambda[i] = keep + h;
    const double up = objective(env, probe, coeffs).total;
    probe.lambda[i] = keep - h;
    const double dn = objective(env, probe, coeffs).total;
    probe.lambda[i] = keep;
    g.d_lambda[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

InnerDualResult inner_dual_update(const EnvironmentModel& env, const MeanFieldFlow& L,
                                  const std::vector<double>& lambda, const BoundBox& box) {
  InnerDualResult out;
  DualSolution dual = solve_dual_backward(env, L, lambda);
  out.y = std::move(dual.y);
  out.z = std::move(dual.z);
  const double ny = norm1(out.y);
  if (ny > box.beta_y) {
    out.y_rescale = box.beta_y / ny;
    for (double& v : out.y) v *= out.y_rescale;
  }
  const double nz = norm1(out.z);
  if (nz > box.beta_z) {
    out.z_rescale = box.beta_z / nz;
    for (double& v : out.z) v *= out.z_rescale;
  }
  const std::vector<double> lhs = cost_lhs(env, L);
  out.w.assign(env.dims.n_constraints, 0.0);
  for (int i = 0; i < env.dims.n_constraints; ++i) {
    const double hi = std::max(env.gamma0[i], 0.0);
    out.w[i] = std::clamp(env.gamma0[i] - lhs[i], 0.0, hi);
  }
  return out;
}

namespace {

void validate_config(const SolveConfig& cfg, bool population) {
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("solve config: learning_rate must be > 0");
  if (cfg.max_iters < 1) throw ValidationError("solve config: max_iters must be >= 1");
  if (cfg.tighten_eps0 < 0.0) throw ValidationError("solve config: tighten_eps0 must be >= 0");
  const CmfomoCoeffs& c = cfg.coeffs;
  const bool ok = c.c1 > 0 && c.c2 > 0 && c.c3 > 0 && c.c4 > 0 && (population || c.c5 > 0);
  if (!ok) throw ValidationError("solve config: objective coefficients must be positive");
}

void adam_step(std::vector<double>& x, const std::vector<double>& g, std::vector<double>& m,
               std::vector<double>& v, const SolveConfig& cfg, int t) {
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (std::size_t j = 0; j < x.size(); ++j) {
    m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g[j];
    v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g[j] * g[j];
    x[j] -= cfg.learning_rate * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.adam_eps);
  }
}

SolveResult solve_impl(const EnvironmentModel& env, const SolveConfig& cfg, bool population) {
  validate_config(cfg, population);
  if (population && !env.population_level) {
    throw ValidationError("solve_population: environment is not flagged population_level");
  }
  const GameDims& d = env.dims;
  const int k = d.n_constraints;

  EnvironmentModel work = env;
  if (cfg.tighten_eps0 > 0.0) {
    for (int i = 0; i < k; ++i) {
      work.gamma0[i] -= cfg.tighten_eps0;
      work.spec.gamma0[i] -= cfg.tighten_eps0;
    }
  }

  CmfomoState st;
  st.L = flow_from_policy(uniform_policy(d), work);
  st.lambda.assign(k, 0.0);
  st.m_L.assign(d.flat_size(), 0.0);
  st.v_L.assign(d.flat_size(), 0.0);
  st.m_lambda.assign(k, 0.0);
  st.v_lambda.assign(k, 0.0);

  SolveResult res;
  res.delta_measured =
      (!population && k > 0) ? check_strict_feasibility(work, st.L, 0.0).min_margin : 0.0;
  res.box = population ? make_population_bound_box(work) : make_bound_box(work, res.delta_measured);

  double best = std::numeric_limits<double>::infinity();
  res.iterations = cfg.max_iters;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    InnerDualResult inner = inner_dual_update(work, st.L, st.lambda, res.box);
    st.y = std::move(inner.y);
    st.z = std::move(inner.z);
    st.w = std::move(inner.w);

    const ObjectiveBreakdown br = objective(work, st, cfg.coeffs);
    if (!std::isfinite(br.total)) {
      std::ostringstream msg;
      msg << "solve: non-finite objective at iteration " << (it - 1) << " (terms " << br.term1
          << ", " << br.term2 << ", " << br.term3 << ", " << br.term4 << ", " << br.term5 << ")";
      throw std::runtime_error(msg.str());
    }
    st.objective = br.total;
    st.iteration = it - 1;

    TraceRow row;
    row.iter = it - 1;
    row.objective = br.total;
    row.term1 = br.term1;
    row.term2 = br.term2;
    row.term3 = br.term3;
    row.term4 = br.term4;
    row.term5 = br.term5;
    if (cfg.gap_trace_every > 0 && (it - 1) % cfg.gap_trace_every == 0) {
      const GapReport rep = gaps(env, policy_from_flow(st.L));
      row.has_gaps = true;
      row.g_opt = rep.g_opt;
      row.g_fea = rep.g_fea;
    }
    res.trace.push_back(row);

    if (br.total < best) {
      best = br.total;
      res.state = st;
    }
    if (br.total <= cfg.tolerance) {
      res.iterations = it;
      break;
    }

    Gradients g = cfg.gradient_mode == GradientMode::analytic ? gradient(work, st, cfg.coeffs)
                                                              : gradient_fd(work, st, cfg.coeffs);
    adam_step(st.L.values, g.d_L, st.m_L, st.v_L, cfg, it);
    st.L = project_flow(d, std::move(st.L.values));

    if (!population && k > 0) {
      // dual-ascent coupling: the |.| subgradient dies at lambda = 0, the
      // signed slack does not
      std::vector<double> glam(k, 0.0);
      const std::vector<double> lhs = cost_lhs(work, st.L);
      for (int i = 0; i < k; ++i) glam[i] = cfg.coeffs.c5 * (work.gamma0[i] - lhs[i]);
      adam_step(st.lambda, glam, st.m_lambda, st.v_lambda, cfg, it);
      for (int i = 0; i < k; ++i) st.lambda[i] = std::clamp(st.lambda[i], 0.0, res.box.beta_lambda);
    }
  }

  res.converged = best <= cfg.tolerance;
  res.policy = policy_from_flow(res.state.L);
  return res;
}

}  // namespace

SolveResult solve(const EnvironmentModel& env, const SolveConfig& config) {
  return solve_impl(env, config, false);
}

SolveResult solve_population(const EnvironmentModel& env, const SolveConfig& config) {
  return solve_impl(env, config, true);
}

CertifyReport certify_from_policy(const EnvironmentModel& env, const Policy& pi,
                                  const CmfomoCoeffs& coeffs) {
  if (!(pi.dims == env.dims)) throw ValidationError("certify_from_policy: policy dims mismatch");
  validate_policy(pi);
  const GameDims& d = env.dims;
  const int k = d.n_constraints, H = d.horizon_len;

  const MeanFieldFlow L = flow_from_policy(pi, env);
  const SimplexResult opt = solve_cmdp_simplex(env, L);
  if (opt.status != LpStatus::optimal) {
    throw ValidationError("certify_from_policy: no feasible policy under the flow of pi (" +
                          to_string(opt.status) + ")");
  }
  DualSolution dual = solve_dual_backward(env, L, opt.lambda_opt);

  CertifyReport rep;
  rep.state.L = L;
  rep.state.y = std::move(dual.y);
  rep.state.z = std::move(dual.z);
  rep.state.lambda = opt.lambda_opt;
  rep.state.w.assign(k, 0.0);
  const std::vector<double> lhs = cost_lhs(env, L);
  for (int i = 0; i < k; ++i) {
    rep.state.w[i] = std::clamp(env.gamma0[i] - lhs[i], 0.0, std::max(env.gamma0[i], 0.0));
  }
  rep.breakdown = objective(env, rep.state, coeffs);
  rep.objective_actual = rep.breakdown.total;

  const double v_pi = dot(reward_all(env, L), L.values);
  rep.eps1 = std::abs(opt.objective - v_pi);
  double fea = 0.0;
  for (int i = 0; i < k; ++i) {
    const double viol = std::min(0.0, env.gamma0[i] - lhs[i]);
    fea += viol * viol;
  }
  rep.eps2 = std::sqrt(fea);
  rep.delta = k > 0 ? check_strict_feasibility(env, L, 0.0).min_margin : 0.0;

  if (k == 0) {
    rep.objective_bound = rep.eps1 * (coeffs.c3 + 2.0 * coeffs.c5);
  } else if (rep.delta <= 1e-12) {
    rep.objective_bound = std::numeric_limits<double>::infinity();
  } else {
    rep.objective_bound =
        rep.eps1 * (coeffs.c3 + 2.0 * coeffs.c5) +
        rep.eps2 * (std::sqrt(static_cast<double>(k)) * (H * env.r_abs_max / rep.delta) *
                        (coeffs.c3 + coeffs.c5) +
                    coeffs.c4);
  }
  if (rep.objective_actual > rep.objective_bound + 1e-8) {
    std::ostringstream msg;
    msg << "certify_from_policy: construction bound violated (objective " << rep.objective_actual
        << " > bound " << rep.objective_bound << ")";
    throw std::logic_error(msg.str());
  }
  return rep;
}

}  // namespace cmfg
