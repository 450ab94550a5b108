#pragma once

#include <cmfg/core.hpp>
#include <cmfg/lp.hpp>

#include <vector>

namespace cmfg {

struct CmfomoCoeffs {
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  double c4 = 1.0;
  double c5 = 1.0;  // unused by the population-level variant
};

// Feasible box of the reformulated problem. beta_y / beta_z bound the l1
// norms of the dual blocks, beta_lambda caps the multipliers.
struct BoundBox {
  double beta_y = 0.0;
  double beta_z = 0.0;
  double beta_lambda = 0.0;
  double delta = 0.0;  // measured strict-feasibility margin, kept as reported
  std::vector<double> gamma0;
};

// The multiplier cap divides by max(delta, 0.2): with a tiny or negative
// margin the untruncated cap explodes and a nonexistent equilibrium would
// look like slow convergence instead of a plateau.
BoundBox make_bound_box(const EnvironmentModel& env, double delta);
BoundBox make_population_bound_box(const EnvironmentModel& env);

struct CmfomoState {
  MeanFieldFlow L;
  std::vector<double> y;
  std::vector<double> z;
  std::vector<double> lambda;
  std::vector<double> w;
  int iteration = 0;
  double objective = 0.0;
  std::vector<double> m_L, v_L;            // Adam moments for L
  std::vector<double> m_lambda, v_lambda;  // Adam moments for lambda
};

enum class GradientMode { analytic, finite_diff };

struct SolveConfig {
  CmfomoCoeffs coeffs;
  double learning_rate = 5e-3;
  int max_iters = 1000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double tolerance = 1e-8;
  double tighten_eps0 = 0.0;  // solve under gamma0 - eps0
  unsigned long long seed = 0;
  GradientMode gradient_mode = GradientMode::analytic;
  int gap_trace_every = 100;  // gap columns need a simplex solve; <= 0 disables
};

struct ObjectiveBreakdown {
  double total = 0.0;
  double term1 = 0.0;  // dual feasibility residual
  double term2 = 0.0;  // flow consistency residual
  double term3 = 0.0;  // complementary slackness z^T L
  double term4 = 0.0;  // constraint slack residual
  double term5 = 0.0;  // multiplier coupling
};

ObjectiveBreakdown objective(const EnvironmentModel& env, const CmfomoState& state,
                             const CmfomoCoeffs& coeffs);

struct Gradients {
  std::vector<double> d_L;
  std::vector<double> d_lambda;
};

// Gradient of the objective in (L, lambda) holding (y, z, w) fixed. Norm
// terms use subgradient 0 at exact zero; |.| uses sign with sign(0) = 0.
Gradients gradient(const EnvironmentModel& env, const CmfomoState& state,
                   const CmfomoCoeffs& coeffs);
Gradients gradient_fd(const EnvironmentModel& env, const CmfomoState& state,
                      const CmfomoCoeffs& coeffs, double h = 1e-6);

struct InnerDualResult {
  std::vector<double> y;
  std::vector<double> z;
  std::vector<double> w;
  double y_rescale = 1.0;  // < 1 when the l1 ball clipped the backward duals
  double z_rescale = 1.0;
};

InnerDualResult inner_dual_update(const EnvironmentModel& env, const MeanFieldFlow& L,
                                  const std::vector<double>& lambda, const BoundBox& box);

struct TraceRow {
  int iter = 0;
  double objective = 0.0;
  double term1 = 0.0, term2 = 0.0, term3 = 0.0, term4 = 0.0, term5 = 0.0;
  bool has_gaps = false;
  double g_opt = 0.0;
  double g_fea = 0.0;
};

struct SolveResult {
  CmfomoState state;  // best-objective state seen, not the last iterate
  Policy policy;
  std::vector<TraceRow> trace;
  bool converged = false;
  int iterations = 0;
  BoundBox box;
  double delta_measured = 0.0;
};

SolveResult solve(const EnvironmentModel& env, const SolveConfig& config);

// Same loop with lambda pinned to zero and the population bound box.
SolveResult solve_population(const EnvironmentModel& env, const SolveConfig& config);

struct CertifyReport {
  CmfomoState state;
  ObjectiveBreakdown breakdown;
  double objective_actual = 0.0;
  double objective_bound = 0.0;
  double eps1 = 0.0;   // |optimality gap| of the policy
  double eps2 = 0.0;   // feasibility gap of the policy
  double delta = 0.0;  // strict-feasibility margin at the policy's flow
};

// Builds the feasible tuple induced by a policy (exact duals at its flow) and
// checks the construction bound; violation is a logic error, not an input one.
CertifyReport certify_from_policy(const EnvironmentModel& env, const Policy& pi,
                                  const CmfomoCoeffs& coeffs = {});

}  // namespace cmfg
