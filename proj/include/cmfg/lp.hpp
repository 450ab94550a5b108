#pragma once

#include <cmfg/core.hpp>

#include <limits>
#include <string>
#include <vector>

namespace cmfg {

struct ToleranceConfig {
  double pivot = 1e-9;         // smallest pivot magnitude the tableau accepts
  double reduced_cost = 1e-9;  // dual feasibility threshold
  double artificial = 1e-9;    // phase-1 mass below which the program counts as feasible
  double feasibility = 1e-8;   // primal feasibility slack on returned solutions
  long max_pivots = 0;         // 0 = derive from problem size
};

// Equality-form LP over occupation measures. Row blocks 0..H-2 couple slice t
// to slice t+1; the last block pins the slice-0 state marginal to mu0.
struct LpData {
  GameDims dims;
  std::vector<double> A;  // (S*H) x (S*A*H), row-major
  std::vector<double> b;  // S*H
  std::vector<double> r;  // S*A*H
  std::vector<double> C;  // k x (S*A*H), row-major

  int rows() const { return dims.n_states * dims.horizon_len; }
  int cols() const { return dims.n_states * dims.n_actions * dims.horizon_len; }
  double a_at(int i, int j) const { return A[static_cast<std::size_t>(i) * cols() + j]; }
  double c_at(int i, int j) const { return C[static_cast<std::size_t>(i) * cols() + j]; }
};

LpData assemble(const EnvironmentModel& env, const MeanFieldFlow& L);

// Backward-induction solution of the flow-conditioned MDP with reward
// r - C^T lambda. y holds the value functions shifted by one slice; the last
// block holds -V_0. z is the per-(t,s,a) Bellman slack, always >= 0.
struct DualSolution {
  std::vector<double> y;
  std::vector<double> z;
  double value = 0.0;
};

DualSolution solve_dual_backward(const EnvironmentModel& env, const MeanFieldFlow& L,
                                 const std::vector<double>& lambda);

enum class LpStatus { optimal, infeasible, unbounded };

std::string to_string(LpStatus status);

struct SimplexResult {
  OccupationMeasure d_opt;
  double objective = 0.0;  // r^T d at the optimum
  LpStatus status = LpStatus::optimal;
  std::vector<double> lambda_opt;  // nonnegative duals of the k cost rows
  std::vector<int> basis;          // basic columns of the slack-augmented program
};

SimplexResult solve_cmdp_simplex(const EnvironmentModel& env, const MeanFieldFlow& L,
                                 const ToleranceConfig& tol = {});

// Per-constraint slack margins: margins[i] = gamma0[i] minus the smallest
// cumulative cost i attainable while the other constraints stay satisfied.
struct FeasibilityReport {
  double delta = 0.0;
  bool satisfied = true;
  double min_margin = std::numeric_limits<double>::infinity();
  std::vector<double> margins;
  std::vector<double> min_costs;
};

FeasibilityReport check_strict_feasibility(const EnvironmentModel& env, const MeanFieldFlow& L,
                                           double delta);

namespace detail {

// Two-phase dense simplex with Bland's rule on: min c^T x, M x = q, x >= 0.
// Row duals solve B^T u = c_B over the original columns; rows dropped as
// redundant in phase 1 report a zero dual.
struct SimplexRawResult {
  LpStatus status = LpStatus::optimal;
  std::vector<double> x;
  std::vector<double> duals;
  std::vector<int> basis;
  double objective = 0.0;
};

SimplexRawResult simplex_two_phase(int m, int n, std::vector<double> M, std::vector<double> q,
                                   const std::vector<double>& c, const ToleranceConfig& tol = {});

// Solves B^T u = c_B by Gaussian elimination with partial pivoting.
std::vector<double> gauss_solve(int n, std::vector<double> M, std::vector<double> rhs);

}  // namespace detail

}  // namespace cmfg
