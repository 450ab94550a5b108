#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "cmfg/core.hpp"

namespace cmfg::testing {

inline Policy random_policy(const GameDims& d, std::mt19937_64& rng, double floor_mass = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Policy pi{d, std::vector<double>(d.flat_size())};
  for (int t = 0; t < d.horizon_len; ++t)
    for (int s = 0; s < d.n_states; ++s) {
      double sum = 0.0;
      for (int a = 0; a < d.n_actions; ++a) {
        double v = floor_mass + u(rng);
        pi.at(t, s, a) = v;
        sum += v;
      }
      for (int a = 0; a < d.n_actions; ++a) pi.at(t, s, a) /= sum;
    }
  return pi;
}

// Random valid affine environment: every transition row is a convex
// interpolation of per-vertex distributions, so the whole simplex is valid.
inline AffineEnvSpec random_affine_spec(std::mt19937_64& rng, int S, int A, int horizon, int k,
                                        bool l_dependent = true) {
  GameDims d{S, A, horizon, k};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  AffineEnvSpec sp;
  sp.dims = d;
  int J = d.slice_size();
  sp.mu0.assign(S, 0.0);
  double m = 0.0;
  for (int s = 0; s < S; ++s) {
    sp.mu0[s] = 0.05 + u(rng);
    m += sp.mu0[s];
  }
  for (int s = 0; s < S; ++s) sp.mu0[s] /= m;
  sp.p_base.assign((size_t)d.flat_size() * S, 0.0);
  sp.p_coeff.assign((size_t)d.flat_size() * S * J, 0.0);
  sp.r_base.assign(d.flat_size(), 0.0);
  sp.r_coeff.assign((size_t)d.flat_size() * J, 0.0);
  sp.c_base.assign((size_t)k * d.flat_size(), 0.0);
  sp.c_coeff.assign((size_t)k * d.flat_size() * J, 0.0);
  std::vector<double> q(S);
  for (int t = 0; t < horizon; ++t)
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double base_sum = 0.0;
        std::vector<double> base(S);
        for (int sp_ = 0; sp_ < S; ++sp_) {
          base[sp_] = 0.05 + u(rng);
          base_sum += base[sp_];
        }
        for (int sp_ = 0; sp_ < S; ++sp_) base[sp_] /= base_sum;
        for (int sp_ = 0; sp_ < S; ++sp_) sp.p_base[sp.pb(t, s, a, sp_)] = base[sp_];
        if (l_dependent) {
          for (int j = 0; j < J; ++j) {
            double qs = 0.0;
            for (int sp_ = 0; sp_ < S; ++sp_) {
              q[sp_] = 0.05 + u(rng);
              qs += q[sp_];
            }
            for (int sp_ = 0; sp_ < S; ++sp_)
              sp.p_coeff[sp.pc(t, s, a, sp_, j)] = q[sp_] / qs - base[sp_];
          }
        }
        sp.r_base[sp.rb(t, s, a)] = sym(rng);
        if (l_dependent)
          for (int j = 0; j < J; ++j) sp.r_coeff[sp.rc(t, s, a, j)] = 0.3 * sym(rng);
        for (int i = 0; i < k; ++i) {
          sp.c_base[sp.cb(i, t, s, a)] = u(rng);
          if (l_dependent)
            for (int j = 0; j < J; ++j) sp.c_coeff[sp.cc_(i, t, s, a, j)] = 0.2 * sym(rng);
        }
      }
  sp.gamma0.assign(k, 0.0);
  return sp;
}

// Loosens gamma0 so the uniform policy satisfies every constraint with the
// given slack; keeps random instances feasible by construction.
inline EnvironmentModel feasible_env(AffineEnvSpec sp, std::mt19937_64& rng, double slack_lo = 0.01,
                                     double slack_hi = 0.5) {
  std::uniform_real_distribution<double> u(slack_lo, slack_hi);
  auto env = load_affine_env(sp);
  auto L = flow_from_policy(uniform_policy(env.dims), env);
  auto lhs = cost_lhs(env, L);
  for (int i = 0; i < env.dims.n_constraints; ++i) sp.gamma0[i] = lhs[i] + u(rng);
  return load_affine_env(sp);
}

// Plain Gaussian elimination, kept separate from the library solver so dual
// reconstructions in tests do not share its code path.
inline std::vector<double> ref_solve(int n, std::vector<double> M, std::vector<double> rhs) {
  for (int col = 0; col < n; ++col) {
    int p = col;
    for (int i = col + 1; i < n; ++i)
      if (std::abs(M[(size_t)i * n + col]) > std::abs(M[(size_t)p * n + col])) p = i;
    if (std::abs(M[(size_t)p * n + col]) < 1e-12) throw std::runtime_error("ref_solve: singular");
    for (int j = 0; j < n; ++j) std::swap(M[(size_t)p * n + j], M[(size_t)col * n + j]);
    std::swap(rhs[p], rhs[col]);
    for (int i = col + 1; i < n; ++i) {
      double f = M[(size_t)i * n + col] / M[(size_t)col * n + col];
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j) M[(size_t)i * n + j] -= f * M[(size_t)col * n + j];
      rhs[i] -= f * rhs[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (int i = n - 1; i >= 0; --i) {
    double v = rhs[i];
    for (int j = i + 1; j < n; ++j) v -= M[(size_t)i * n + j] * x[j];
    x[i] = v / M[(size_t)i * n + i];
  }
  return x;
}

// Deterministic policy from a mixed-radix code: digit (t*S+s) selects the
// action in state s at time t.
inline Policy det_policy_from_code(const GameDims& d, long code) {
  Policy pi{d, std::vector<double>(d.flat_size(), 0.0)};
  for (int t = 0; t < d.horizon_len; ++t)
    for (int s = 0; s < d.n_states; ++s) {
      int a = (int)(code % d.n_actions);
      code /= d.n_actions;
      pi.at(t, s, a) = 1.0;
    }
  return pi;
}

inline long det_policy_count(const GameDims& d) {
  long n = 1;
  for (int i = 0; i < d.horizon_len * d.n_states; ++i) {
    n *= d.n_actions;
    if (n > 1000000) throw std::runtime_error("det_policy_count: enumeration too large");
  }
  return n;
}

// Two-slice distancing game with everyone initially infected and the cost
// replaced by the raw terminal-infection indicator. Its equilibrium is the
// closed-form mix alpha = min(sqrt((gamma0 - 0.5) / 0.45), 1) on going out.
inline EnvironmentModel example_one_env(double gamma0) {
  EnvironmentModel env = builtin_sis(1, 1.0, gamma0, ConstraintKind::agent_state);
  AffineEnvSpec sp = env.spec;
  std::fill(sp.c_base.begin(), sp.c_base.end(), 0.0);
  for (int a = 0; a < 2; ++a) sp.c_base[sp.cb(0, 1, 1, a)] = 1.0;
  return load_affine_env(sp);
}

// Same game with the constraint block removed entirely (k = 0).
inline EnvironmentModel drop_constraints(const EnvironmentModel& env) {
  AffineEnvSpec sp = env.spec;
  sp.dims.n_constraints = 0;
  sp.gamma0.clear();
  sp.c_base.clear();
  sp.c_coeff.clear();
  sp.population_level = false;
  return load_affine_env(sp);
}

// Policy that goes out with probability alpha when infected at t = 0 and
// always goes out otherwise.
inline Policy example_one_policy(const GameDims& d, double alpha) {
  Policy pi;
  pi.dims = d;
  pi.values.assign(d.flat_size(), 0.0);
  for (int t = 0; t < d.horizon_len; ++t) {
    for (int s = 0; s < d.n_states; ++s) pi.values[d.idx(t, s, 0)] = 1.0;
  }
  pi.values[d.idx(0, 1, 0)] = alpha;
  pi.values[d.idx(0, 1, 1)] = 1.0 - alpha;
  return pi;
}

}  // namespace cmfg::testing
