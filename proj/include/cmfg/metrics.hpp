#pragma once

#include <cmfg/cmfomo.hpp>
#include <cmfg/core.hpp>
#include <cmfg/lp.hpp>

#include <vector>

namespace cmfg {

// Equilibrium quality of a policy: exploitability against the best response
// in the flow it induces, and the feasibility shortfall of that flow.
struct GapReport {
  double g_opt = 0.0;
  double g_fea = 0.0;
  double v_star = 0.0;
  double v_pi = 0.0;
  std::vector<double> cost_vector;  // constraint left-hand sides at the flow
  bool v_star_defined = true;       // false when no feasible response exists
};

GapReport gaps(const EnvironmentModel& env, const Policy& pi);

struct BoundSet {
  double alpha = 0.0;
  double zeta1 = 0.0, zeta2 = 0.0, zeta3 = 0.0, zeta4 = 0.0;
  double zeta1_tilde = 0.0, zeta2_tilde = 0.0, zeta3_tilde = 0.0, zeta4_tilde = 0.0;
  double c_tilde = 0.0;  // finite-population coupling constant
  double c_psa = 0.0;
  double eps1 = 0.0;  // per-unit-epsilon multiplier for the exploitability bound
  double eps2 = 0.0;  // per-unit-epsilon multiplier for the feasibility bound
};

// Closed-form constants tying the objective value to the gap sizes; the
// tilde variants evaluate at the tightened margin delta - eps0.
BoundSet bound_constants(const EnvironmentModel& env, const CmfomoCoeffs& coeffs, double delta,
                         double eps0 = 0.0);

struct MonotonicityReport {
  double max_value = 0.0;  // largest sampled correlation; <= 0 means monotone so far
  int violations = 0;
  int samples = 0;
};

// Samples flow pairs and checks sum (r(L1)-r(L2)).(L1-L2) <= 0. Only
// meaningful when transitions and costs ignore the flow.
MonotonicityReport check_monotonicity(const EnvironmentModel& env, int n_samples,
                                      unsigned long long seed = 0);

struct TwinnedReport {
  double max_abs_diff = 0.0;
  bool twinned = false;
  int samples = 0;
};

// Compares aggregated population cost against aggregated agent cost on
// random flows.
TwinnedReport check_twinned(const EnvironmentModel& env_pop, const EnvironmentModel& env_agent,
                            int n_samples, unsigned long long seed = 0);

// Verifies the threshold-perturbation bound |V*(g1) - V*(g2)| <=
// ||g1-g2||_1 H r_abs / delta with two exact solves.
bool sensitivity_check(const EnvironmentModel& env, const MeanFieldFlow& L,
                       const std::vector<double>& gamma1, const std::vector<double>& gamma2);

}  // namespace cmfg
