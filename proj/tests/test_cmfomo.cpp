#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cmfg/cmfomo.hpp>
#include <cmfg/core.hpp>
#include <cmfg/lp.hpp>
#include <cmfg/metrics.hpp>
#include <random>
#include <vector>

#include "testing.hpp"

namespace cmfg {
namespace {

using testing::drop_constraints;
using testing::example_one_env;
using testing::example_one_policy;
using testing::feasible_env;
using testing::random_affine_spec;
using testing::random_policy;

CmfomoState random_state(const EnvironmentModel& env, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> sym(-2.0, 2.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  CmfomoState st;
  st.L = flow_from_policy(random_policy(env.dims, rng), env);
  st.y.resize(env.dims.dual_size());
  st.z.resize(env.dims.flat_size());
  for (double& v : st.y) v = sym(rng);
  for (double& v : st.z) v = sym(rng);
  st.lambda.resize(env.dims.n_constraints);
  st.w.resize(env.dims.n_constraints);
  for (int i = 0; i < env.dims.n_constraints; ++i) {
    st.lambda[i] = 2.0 * uni(rng);
    st.w[i] = uni(rng) * std::max(env.gamma0[i], 0.0);
  }
  return st;
}

// Objective recomputed through the dense assembled system, no Jacobians.
ObjectiveBreakdown dense_objective(const EnvironmentModel& env, const CmfomoState& st,
                                   const CmfomoCoeffs& c) {
  const LpData lp = assemble(env, st.L);
  const int m = lp.rows(), n = lp.cols(), k = env.dims.n_constraints;

  std::vector<double> u1(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double v = st.z[j] + lp.r[j];
    for (int i = 0; i < m; ++i) v += lp.a_at(i, j) * st.y[i];
    for (int i = 0; i < k; ++i) v -= st.lambda[i] * lp.c_at(i, j);
    u1[j] = v;
  }
  std::vector<double> u2(m, 0.0);
  for (int i = 0; i < m; ++i) {
    double v = -lp.b[i];
    for (int j = 0; j < n; ++j) v += lp.a_at(i, j) * st.L.values[j];
    u2[i] = v;
  }
  std::vector<double> u4(k, 0.0);
  double u5 = 0.0;
  for (int i = 0; i < k; ++i) {
    double cl = 0.0;
    for (int j = 0; j < n; ++j) cl += lp.c_at(i, j) * st.L.values[j];
    u4[i] = env.gamma0[i] - cl - st.w[i];
    u5 += st.lambda[i] * (env.gamma0[i] - cl);
  }
  ObjectiveBreakdown br;
  br.term1 = c.c1 * norm2(u1);
  br.term2 = c.c2 * norm2(u2);
  br.term3 = c.c3 * dot(st.z, st.L.values);
  br.term4 = c.c4 * norm2(u4);
  br.term5 = c.c5 * std::abs(u5);
  br.total = br.term1 + br.term2 + br.term3 + br.term4 + br.term5;
  return br;
}

double rel_err(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0.0, den = 1.0;
  for (std::size_t j = 0; j < got.size(); ++j) num += (got[j] - want[j]) * (got[j] - want[j]);
  for (double v : want) den += v * v;
  return std::sqrt(num) / std::sqrt(den);
}

}  // namespace

TEST_CASE("objective terms match the dense assembled system") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> ds(1, 3), da(1, 3), dh(2, 4), dk(0, 2);
  for (int trial = 0; trial < 30; ++trial) {
    auto sp = random_affine_spec(rng, ds(rng), da(rng), dh(rng), dk(rng), true);
    auto env = feasible_env(sp, rng);
    CmfomoCoeffs c{1.3, 0.7, 2.0, 1.1, 0.9};
    for (int rep = 0; rep < 3; ++rep) {
      auto st = random_state(env, rng);
      auto got = objective(env, st, c);
      auto want = dense_objective(env, st, c);
      CHECK(got.term1 == doctest::Approx(want.term1).epsilon(1e-12));
      CHECK(got.term2 == doctest::Approx(want.term2).epsilon(1e-12));
      CHECK(got.term3 == doctest::Approx(want.term3).epsilon(1e-12));
      CHECK(got.term4 == doctest::Approx(want.term4).epsilon(1e-12));
      CHECK(got.term5 == doctest::Approx(want.term5).epsilon(1e-12));
      CHECK(got.total == doctest::Approx(want.total).epsilon(1e-12));
    }
  }
}

TEST_CASE("objective rejects mis-shaped states") {
  auto env = builtin_sis(2, 0.4, 0.5, ConstraintKind::agent_state);
  std::mt19937_64 rng(5);
  auto st = random_state(env, rng);
  CmfomoCoeffs c;
  auto bad = st;
  bad.y.pop_back();
  CHECK_THROWS_AS(objective(env, bad, c), ValidationError);
  bad = st;
  bad.lambda.push_back(0.0);
  CHECK_THROWS_AS(objective(env, bad, c), ValidationError);
  bad = st;
  bad.L.dims.n_states = 3;
  CHECK_THROWS_AS(objective(env, bad, c), ValidationError);
}

TEST_CASE("analytic gradient matches central differences on the epidemic game") {
  auto env = builtin_sis(3, 0.4, 0.3, ConstraintKind::agent_state);
  std::mt19937_64 rng(21);
  CmfomoCoeffs c{1.0, 1.0, 3.0, 1.0, 1.0};
  for (int trial = 0; trial < 50; ++trial) {
    auto st = random_state(env, rng);
    auto ga = gradient(env, st, c);
    auto gf = gradient_fd(env, st, c);
    CHECK(rel_err(ga.d_L, gf.d_L) < 1e-5);
    CHECK(rel_err(ga.d_lambda, gf.d_lambda) < 1e-5);
  }
}

TEST_CASE("analytic gradient matches central differences on random coupled games") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    auto sp = random_affine_spec(rng, 2, 2, 3, 2, true);
    auto env = feasible_env(sp, rng);
    CmfomoCoeffs c{0.8, 1.2, 1.5, 1.0, 0.7};
    auto st = random_state(env, rng);
    auto ga = gradient(env, st, c);
    auto gf = gradient_fd(env, st, c);
    CHECK(rel_err(ga.d_L, gf.d_L) < 1e-5);
    CHECK(rel_err(ga.d_lambda, gf.d_lambda) < 1e-5);
  }
}

TEST_CASE("at an exact unconstrained equilibrium only the slackness row survives") {
  auto env = drop_constraints(example_one_env(0.8));
  auto pi = example_one_policy(env.dims, 1.0);
  auto rep = certify_from_policy(env, pi);
  CHECK(rep.objective_actual <= 1e-12);

  CmfomoCoeffs c{1.0, 1.0, 3.0, 1.0, 1.0};
  auto br = objective(env, rep.state, c);
  CHECK(br.total <= 1e-12);
  auto g = gradient(env, rep.state, c);
  REQUIRE(g.d_lambda.empty());
  for (int j = 0; j < env.dims.flat_size(); ++j) {
    CHECK(g.d_L[j] == doctest::Approx(c.c3 * rep.state.z[j]).epsilon(1e-12));
  }
}

TEST_CASE("inner dual update clamps the slack variable into its box") {
  auto box_for = [](const EnvironmentModel& env) {
    auto L = flow_from_policy(uniform_policy(env.dims), env);
    double delta = check_strict_feasibility(env, L, 0.0).min_margin;
    return make_bound_box(env, delta);
  };

  SUBCASE("positive slack is kept exactly") {
    auto env = builtin_sis(10, 0.5, 0.9, ConstraintKind::agent_state);
    auto L = flow_from_policy(uniform_policy(env.dims), env);
    auto inner = inner_dual_update(env, L, {0.0}, box_for(env));
    double slack = env.gamma0[0] - cost_lhs(env, L)[0];
    REQUIRE(slack > 0.0);
    REQUIRE(slack < env.gamma0[0]);
    CHECK(inner.w[0] == slack);
    CmfomoState st{L, inner.y, inner.z, {0.0}, inner.w, 0, 0.0, {}, {}, {}, {}};
    CHECK(objective(env, st, CmfomoCoeffs{}).term4 == 0.0);
  }

  SUBCASE("violated constraints zero the slack and fill the fourth term") {
    auto env = builtin_sis(10, 0.5, 0.10, ConstraintKind::agent_state);
    auto L = flow_from_policy(uniform_policy(env.dims), env);
    auto inner = inner_dual_update(env, L, {0.0}, box_for(env));
    double lhs = cost_lhs(env, L)[0];
    REQUIRE(lhs > env.gamma0[0]);
    CHECK(inner.w[0] == 0.0);
    CmfomoState st{L, inner.y, inner.z, {0.0}, inner.w, 0, 0.0, {}, {}, {}, {}};
    CHECK(objective(env, st, CmfomoCoeffs{}).term4 ==
          doctest::Approx(lhs - env.gamma0[0]).epsilon(1e-12));
  }

  SUBCASE("negative thresholds force w to zero") {
    auto env = builtin_sis(4, 0.5, 0.6, ConstraintKind::agent_action);
    REQUIRE(env.gamma0[0] < 0.0);
    auto L = flow_from_policy(uniform_policy(env.dims), env);
    auto inner = inner_dual_update(env, L, {0.3}, box_for(env));
    CHECK(inner.w[0] == 0.0);
  }

  SUBCASE("a tight box rescales the backward duals along their direction") {
    auto env = builtin_sis(5, 0.5, 0.4, ConstraintKind::agent_state);
    auto L = flow_from_policy(uniform_policy(env.dims), env);
    auto wide = inner_dual_update(env, L, {0.5}, box_for(env));
    REQUIRE(wide.y_rescale == 1.0);
    REQUIRE(wide.z_rescale == 1.0);

    BoundBox tiny = box_for(env);
    tiny.beta_y = 0.01;
    tiny.beta_z = 0.02;
    auto clipped = inner_dual_update(env, L, {0.5}, tiny);
    CHECK(clipped.y_rescale < 1.0);
    CHECK(clipped.z_rescale < 1.0);
    CHECK(norm1(clipped.y) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(norm1(clipped.z) == doctest::Approx(0.02).epsilon(1e-12));
    for (std::size_t i = 0; i < wide.y.size(); ++i) {
      CHECK(clipped.y[i] == doctest::Approx(wide.y[i] * clipped.y_rescale).epsilon(1e-12));
    }
  }
}

TEST_CASE("bound boxes match the closed forms on the distancing game") {
  auto env = example_one_env(0.6);
  REQUIRE(env.r_abs_max == doctest::Approx(1.5));
  REQUIRE(env.c_abs_max == doctest::Approx(1.0));

  auto box = make_bound_box(env, 0.1);
  CHECK(box.beta_lambda == doctest::Approx(15.0));  // floored margin 0.2
  CHECK(box.beta_y == doctest::Approx(99.0));       // 2*3*1.5 * (1 + 2/0.2)
  CHECK(box.beta_z == doctest::Approx(264.0));      // 4*4*1.5 * 11
  CHECK(box.delta == 0.1);
  CHECK(box.gamma0 == env.gamma0);

  auto loose = make_bound_box(env, 0.5);
  CHECK(loose.beta_lambda == doctest::Approx(6.0));
  CHECK(loose.beta_y == doctest::Approx(45.0));  // fac = 5

  auto pop = make_population_bound_box(env);
  CHECK(pop.beta_y == doctest::Approx(9.0));
  CHECK(pop.beta_z == doctest::Approx(24.0));
  CHECK(pop.beta_lambda == 0.0);

  auto free = make_bound_box(drop_constraints(env), 0.0);
  CHECK(free.beta_y == doctest::Approx(9.0));  // no constraint inflation
  CHECK(free.beta_lambda == 0.0);
}

TEST_CASE("solver recovers the closed-form distancing equilibrium") {
  SolveConfig cfg;
  cfg.coeffs = {1.0, 1.0, 3.0, 1.0, 1.0};
  cfg.learning_rate = 5e-3;
  cfg.max_iters = 20000;
  cfg.gap_trace_every = 0;

  SUBCASE("interior mix") {
    auto env = example_one_env(0.725);
    auto res = solve(env, cfg);
    double alpha = res.policy.at(0, 1, 0);
    CHECK(alpha == doctest::Approx(std::sqrt(0.5)).epsilon(1e-2));
    CHECK(res.delta_measured == doctest::Approx(0.225).epsilon(1e-9));
    auto rep = gaps(env, res.policy);
    CHECK(rep.g_fea <= 1e-3);
    CHECK(std::abs(rep.g_opt) <= 2e-2);
  }

  SUBCASE("cap past the unconstrained point saturates at going out") {
    auto env = example_one_env(0.95);
    auto res = solve(env, cfg);
    CHECK(res.policy.at(0, 1, 0) == doctest::Approx(1.0).epsilon(1e-2));
  }

  SUBCASE("unreachable threshold leaves a plateau") {
    auto env = example_one_env(0.5);
    auto res = solve(env, cfg);
    CHECK_FALSE(res.converged);
    CHECK(res.state.objective > 1e-2);
  }
}

TEST_CASE("tightening shifts the working threshold but reports against the original") {
  auto env = example_one_env(0.725);
  SolveConfig cfg;
  cfg.coeffs = {1.0, 1.0, 3.0, 1.0, 1.0};
  cfg.max_iters = 3000;
  cfg.tighten_eps0 = 0.05;
  cfg.gap_trace_every = 0;
  auto res = solve(env, cfg);
  CHECK(res.box.gamma0[0] == doctest::Approx(0.675).epsilon(1e-12));
  CHECK(res.delta_measured == doctest::Approx(0.175).epsilon(1e-9));
  CHECK(gaps(env, res.policy).g_fea == 0.0);
}

TEST_CASE("finite-difference mode finds the same equilibrium") {
  auto env = example_one_env(0.725);
  SolveConfig cfg;
  cfg.coeffs = {1.0, 1.0, 3.0, 1.0, 1.0};
  cfg.max_iters = 20000;
  cfg.gap_trace_every = 0;
  cfg.gradient_mode = GradientMode::finite_diff;
  auto res = solve(env, cfg);
  CHECK(res.policy.at(0, 1, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-2));
}

TEST_CASE("population solve matches the unconstrained game when the cap is slack") {
  auto pop_env = builtin_sis(2, 0.5, 0.9, ConstraintKind::pop_state);
  REQUIRE(pop_env.population_level);
  SolveConfig cfg;
  cfg.max_iters = 5000;
  cfg.gap_trace_every = 0;
  auto pop = solve_population(pop_env, cfg);

  auto free_env = drop_constraints(pop_env);
  auto agent = solve(free_env, cfg);
  for (int j = 0; j < pop_env.dims.flat_size(); ++j) {
    CHECK(pop.state.L.values[j] == doctest::Approx(agent.state.L.values[j]).epsilon(2e-2));
  }
  for (double l : pop.state.lambda) CHECK(l == 0.0);
  CHECK(pop.box.beta_lambda == 0.0);
}

TEST_CASE("population solve refuses agent-level environments") {
  auto env = builtin_sis(2, 0.5, 0.5, ConstraintKind::agent_state);
  CHECK_THROWS_AS(solve_population(env, SolveConfig{}), ValidationError);
}

TEST_CASE("solve validates its configuration") {
  auto env = builtin_sis(1, 0.5, 0.5, ConstraintKind::agent_state);
  SolveConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(solve(env, cfg), ValidationError);
  cfg = SolveConfig{};
  cfg.max_iters = 0;
  CHECK_THROWS_AS(solve(env, cfg), ValidationError);
  cfg = SolveConfig{};
  cfg.tighten_eps0 = -0.1;
  CHECK_THROWS_AS(solve(env, cfg), ValidationError);
  cfg = SolveConfig{};
  cfg.coeffs.c3 = 0.0;
  CHECK_THROWS_AS(solve(env, cfg), ValidationError);
}

TEST_CASE("trace is reproducible and the kept state is the best seen") {
  auto env = builtin_sis(3, 0.4, 0.3, ConstraintKind::agent_state);
  SolveConfig cfg;
  cfg.max_iters = 300;
  cfg.gap_trace_every = 100;
  auto res = solve(env, cfg);

  REQUIRE(static_cast<int>(res.trace.size()) == res.iterations);
  double best = res.trace[0].objective;
  for (int i = 0; i < res.iterations; ++i) {
    const auto& row = res.trace[i];
    CHECK(row.iter == i);
    CHECK(row.has_gaps == (i % 100 == 0));
    if (row.has_gaps) CHECK(row.g_fea >= 0.0);
    CHECK(row.objective ==
          doctest::Approx(row.term1 + row.term2 + row.term3 + row.term4 + row.term5)
              .epsilon(1e-12));
    best = std::min(best, row.objective);
  }
  CHECK(res.state.objective == best);

  auto rerun = solve(env, cfg);
  REQUIRE(rerun.trace.size() == res.trace.size());
  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    CHECK(rerun.trace[i].objective == res.trace[i].objective);
  }
  CHECK(rerun.state.L.values == res.state.L.values);
  CHECK(rerun.state.lambda == res.state.lambda);
}

TEST_CASE("certificates at and around the closed-form equilibrium") {
  auto env = example_one_env(0.725);
  const double alpha_star = std::sqrt(0.5);

  SUBCASE("the equilibrium certifies to nearly zero") {
    auto rep = certify_from_policy(env, example_one_policy(env.dims, alpha_star));
    CHECK(rep.objective_actual <= 1e-8);
    CHECK(rep.eps1 <= 1e-10);
    CHECK(rep.eps2 <= 1e-12);
    CHECK(rep.objective_bound <= 1e-8);
    CHECK(rep.delta == doctest::Approx(0.225).epsilon(1e-9));
  }

  SUBCASE("a timid mix is feasible but exploitable") {
    auto rep = certify_from_policy(env, example_one_policy(env.dims, 0.5));
    CHECK(rep.eps1 > 1e-3);
    CHECK(rep.eps2 == 0.0);
    CHECK(rep.objective_actual <= rep.objective_bound + 1e-8);
    CHECK(rep.objective_actual > 1e-3);
  }

  SUBCASE("an overshooting mix pays the feasibility term") {
    auto rep = certify_from_policy(env, example_one_policy(env.dims, 0.9));
    CHECK(rep.eps2 == doctest::Approx(0.5 + 0.45 * 0.81 - 0.725).epsilon(1e-9));
    CHECK(rep.objective_actual <= rep.objective_bound + 1e-8);
  }

  SUBCASE("a boundary threshold marks the bound vacuous") {
    auto tight = example_one_env(0.5);
    auto rep = certify_from_policy(tight, example_one_policy(tight.dims, 0.0));
    CHECK(rep.delta <= 1e-12);
    CHECK(std::isinf(rep.objective_bound));
  }

  SUBCASE("an unreachable threshold is a validation error") {
    auto broken = example_one_env(0.2);
    CHECK_THROWS_AS(certify_from_policy(broken, example_one_policy(broken.dims, 0.5)),
                    ValidationError);
  }
}

TEST_CASE("grid scan of certificates pins the equilibrium and nothing else") {
  auto env = example_one_env(0.725);
  const double alpha_star = std::sqrt(0.5);
  double best_alpha = -1.0, best_obj = 1e300;
  for (int i = 0; i <= 20; ++i) {
    double alpha = 0.05 * i;
    auto rep = certify_from_policy(env, example_one_policy(env.dims, alpha));
    if (rep.objective_actual < best_obj) {
      best_obj = rep.objective_actual;
      best_alpha = alpha;
    }
    if (std::abs(alpha - alpha_star) >= 0.05) CHECK(rep.objective_actual > 1e-3);
  }
  CHECK(best_alpha == doctest::Approx(0.70));
}

}  // namespace cmfg
