#include <cmfg/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace cmfg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// num / den with 0 / 0 = 0 and positive / nonpositive = inf
double ratio(double num, double den) {
  if (num == 0.0) return 0.0;
  return den > 0.0 ? num / den : kInf;
}

// product with the convention 0 * inf = 0
double prod(double a, double b) {
  if (a == 0.0 || b == 0.0) return 0.0;
  return a * b;
}

MeanFieldFlow random_flow(const GameDims& d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MeanFieldFlow L;
  L.dims = d;
  L.values.assign(d.flat_size(), 0.0);
  const int J = d.slice_size();
  for (int t = 0; t < d.horizon_len; ++t) {
    double sum = 0.0;
    for (int j = 0; j < J; ++j) {
      const double v = u(rng) + 1e-9;
      L.values[static_cast<std::size_t>(t) * J + j] = v;
      sum += v;
    }
    for (int j = 0; j < J; ++j) L.values[static_cast<std::size_t>(t) * J + j] /= sum;
  }
  return L;
}

}  // namespace

GapReport gaps(const EnvironmentModel& env, const Policy& pi) {
  if (!(pi.dims == env.dims)) throw ValidationError("gaps: policy dims mismatch");
  validate_policy(pi);
  const int k = env.dims.n_constraints;

  const MeanFieldFlow L = flow_from_policy(pi, env);
  GapReport rep;
  rep.v_pi = dot(reward_all(env, L), L.values);
  rep.cost_vector = cost_lhs(env, L);
  double fea = 0.0;
  for (int i = 0; i < k; ++i) {
    const double viol = std::min(0.0, env.gamma0[i] - rep.cost_vector[i]);
    fea += viol * viol;
  }
  rep.g_fea = std::sqrt(fea);

  if (env.population_level) {
    // population constraints do not restrict the single deviating agent
    rep.v_star = solve_dual_backward(env, L, std::vector<double>(k, 0.0)).value;
    rep.g_opt = rep.v_star - rep.v_pi;
  } else {
    const SimplexResult best = solve_cmdp_simplex(env, L);
    if (best.status != LpStatus::optimal) {
      rep.v_star_defined = false;
      rep.v_star = std::numeric_limits<double>::quiet_NaN();
      rep.g_opt = rep.v_star;
    } else {
      rep.v_star = best.objective;
      rep.g_opt = rep.v_star - rep.v_pi;
    }
  }
  return rep;
}

BoundSet bound_constants(const EnvironmentModel& env, const CmfomoCoeffs& coeffs, double delta,
                         double eps0) {
  const CmfomoCoeffs& cf = coeffs;
  if (!(cf.c1 > 0 && cf.c2 > 0 && cf.c3 > 0 && cf.c4 > 0 && cf.c5 > 0)) {
    throw ValidationError("bound_constants: objective coefficients must be positive");
  }
  if (eps0 < 0.0) throw ValidationError("bound_constants: eps0 must be >= 0");
  const GameDims& d = env.dims;
  const int S = d.n_states, A = d.n_actions, H = d.horizon_len, k = d.n_constraints;
  const double r = env.r_abs_max, c = env.c_abs_max;
  const double Cp = env.lipschitz.cp, Cr = env.lipschitz.cr, Cc = env.lipschitz.cc;

  BoundSet out;
  const double sigma = Cp < 1e-9 ? H * (H + 1) / 2.0
                                 : (std::pow(1.0 + Cp, H + 1) - 1.0 - (H + 1) * Cp) / (Cp * Cp);
  out.alpha = std::sqrt(static_cast<double>(S)) * sigma / cf.c2;

  const auto zetas_at = [&](double dlt, double* z) {
    const double fac = k == 0 ? 1.0 : 1.0 + ratio(H * c, dlt);
    const double beta_y = prod(S * H * (H + 1) / 2.0 * r, fac);
    const double beta_z = prod(static_cast<double>(S) * A * (H * H - H + 2) * r, fac);
    const double hrd = k > 0 ? ratio(H * r, dlt) : 0.0;
    const double cost_mass = k * c + Cc * S * A * H;
    z[0] = 1.0 / cf.c1 + out.alpha * (prod(Cp, beta_y) + Cr + prod(k * Cc, hrd));
    z[1] = 1.0 / cf.c3 + prod(beta_z, out.alpha);
    z[2] = 1.0 / cf.c4 + out.alpha * cost_mass;
    z[3] = 1.0 / cf.c5 + prod(k * out.alpha * cost_mass, hrd);
  };
  double z[4];
  zetas_at(delta, z);
  out.zeta1 = z[0];
  out.zeta2 = z[1];
  out.zeta3 = z[2];
  out.zeta4 = z[3];
  zetas_at(delta - eps0, z);
  out.zeta1_tilde = z[0];
  out.zeta2_tilde = z[1];
  out.zeta3_tilde = z[2];
  out.zeta4_tilde = z[3];

  out.c_psa = (Cp + 1.0) * S * A;
  double geo = 0.0, pw = 1.0;
  for (int j = 0; j < H; ++j) {
    geo += pw;
    pw *= out.c_psa;
  }
  out.c_tilde = Cp * S * A * static_cast<double>(H - 1) * (H - 1) * geo *
                std::max(Cr + r, Cc + c);
  out.eps1 = 2.0 + (k > 0 ? prod(static_cast<double>(k), ratio(H * r, delta)) : 0.0);
  out.eps2 = std::sqrt(static_cast<double>(k));
  return out;
}

MonotonicityReport check_monotonicity(const EnvironmentModel& env, int n_samples,
                                      unsigned long long seed) {
  if (n_samples < 1) throw ValidationError("check_monotonicity: n_samples must be >= 1");
  for (double v : env.spec.p_coeff) {
    if (v != 0.0) {
      throw ValidationError(
          "check_monotonicity: transitions depend on the flow; the rewards-only "
          "monotonicity test does not apply");
    }
  }
  for (double v : env.spec.c_coeff) {
    if (v != 0.0) {
      throw ValidationError(
          "check_monotonicity: costs depend on the flow; the rewards-only monotonicity "
          "test does not apply");
    }
  }
  std::mt19937_64 rng(seed);
  MonotonicityReport rep;
  rep.max_value = -kInf;
  rep.samples = n_samples;
  const int n = env.dims.flat_size();
  for (int it = 0; it < n_samples; ++it) {
    const MeanFieldFlow L1 = random_flow(env.dims, rng);
    const MeanFieldFlow L2 = random_flow(env.dims, rng);
    const std::vector<double> r1 = reward_all(env, L1);
    const std::vector<double> r2 = reward_all(env, L2);
    double m = 0.0;
    for (int j = 0; j < n; ++j) m += (r1[j] - r2[j]) * (L1.values[j] - L2.values[j]);
    rep.max_value = std::max(rep.max_value, m);
    if (m > 1e-12) ++rep.violations;
  }
  return rep;
}

TwinnedReport check_twinned(const EnvironmentModel& env_pop, const EnvironmentModel& env_agent,
                            int n_samples, unsigned long long seed) {
  if (!(env_pop.dims == env_agent.dims)) {
    throw ValidationError("check_twinned: environment dims differ");
  }
  if (n_samples < 1) throw ValidationError("check_twinned: n_samples must be >= 1");
  std::mt19937_64 rng(seed);
  TwinnedReport rep;
  rep.samples = n_samples;
  for (int it = 0; it < n_samples; ++it) {
    const MeanFieldFlow L = random_flow(env_pop.dims, rng);
    const std::vector<double> a = cost_lhs(env_pop, L);
    const std::vector<double> b = cost_lhs(env_agent, L);
    for (int i = 0; i < env_pop.dims.n_constraints; ++i) {
      rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(a[i] - b[i]));
    }
  }
  rep.twinned = rep.max_abs_diff <= 1e-9;
  return rep;
}

bool sensitivity_check(const EnvironmentModel& env, const MeanFieldFlow& L,
                       const std::vector<double>& gamma1, const std::vector<double>& gamma2) {
  const int k = env.dims.n_constraints;
  if (k < 1) throw ValidationError("sensitivity_check: needs at least one constraint");
  if (static_cast<int>(gamma1.size()) != k || static_cast<int>(gamma2.size()) != k) {
    throw ValidationError("sensitivity_check: threshold vectors must have one entry per constraint");
  }
  EnvironmentModel e1 = env, e2 = env;
  e1.gamma0 = gamma1;
  e1.spec.gamma0 = gamma1;
  e2.gamma0 = gamma2;
  e2.spec.gamma0 = gamma2;

  const FeasibilityReport f1 = check_strict_feasibility(e1, L, 0.0);
  const FeasibilityReport f2 = check_strict_feasibility(e2, L, 0.0);
  if (!(f1.min_margin > 0.0) || !(f2.min_margin > 0.0)) {
    throw ValidationError("sensitivity_check: both thresholds must be strictly feasible at L");
  }
  const SimplexResult s1 = solve_cmdp_simplex(e1, L);
  const SimplexResult s2 = solve_cmdp_simplex(e2, L);
  if (s1.status != LpStatus::optimal || s2.status != LpStatus::optimal) {
    throw std::logic_error("sensitivity_check: strictly feasible subproblem did not solve");
  }
  const double delta = std::min(f1.min_margin, f2.min_margin);
  double l1 = 0.0;
  for (int i = 0; i < k; ++i) l1 += std::abs(gamma1[i] - gamma2[i]);
  const double bound = l1 * env.dims.horizon_len * env.r_abs_max / delta + 1e-8;
  return std::abs(s1.objective - s2.objective) <= bound;
}

}  // namespace cmfg
