#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmfg {

// Everything is stored as dense (t, s, a) row-major tensors; the flat index
// t*|S||A| + s*|A| + a lines a flattened flow up with the LP block layout.

struct GameDims {
  int n_states = 0;
  int n_actions = 0;
  int horizon_len = 0;  // |T| = T+1, time indices 0..T
  int n_constraints = 0;

  int slice_size() const { return n_states * n_actions; }
  int flat_size() const { return horizon_len * slice_size(); }
  int dual_size() const { return horizon_len * n_states; }
  int idx(int t, int s, int a) const { return (t * n_states + s) * n_actions + a; }
  int sa(int s, int a) const { return s * n_actions + a; }
  bool operator==(const GameDims&) const = default;
};

// Thrown on malformed inputs (bad dims, invalid specs, unparseable files).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void validate_dims(const GameDims& d);

struct MeanFieldFlow {
  GameDims dims;
  std::vector<double> values;  // one simplex per time slice
  double at(int t, int s, int a) const { return values[dims.idx(t, s, a)]; }
  double& at(int t, int s, int a) { return values[dims.idx(t, s, a)]; }
};

struct Policy {
  GameDims dims;
  std::vector<double> values;  // every (t, s) action row sums to 1
  double at(int t, int s, int a) const { return values[dims.idx(t, s, a)]; }
  double& at(int t, int s, int a) { return values[dims.idx(t, s, a)]; }
};

struct OccupationMeasure {
  GameDims dims;
  std::vector<double> values;
  double at(int t, int s, int a) const { return values[dims.idx(t, s, a)]; }
  double& at(int t, int s, int a) { return values[dims.idx(t, s, a)]; }
};

void validate_flow(const MeanFieldFlow& L, double tol = 1e-9);
void validate_policy(const Policy& pi, double tol = 1e-9);

struct LipschitzConstants {
  double cp = 0.0;
  double cr = 0.0;
  double cc = 0.0;
};

// Affine-in-L environment family: for each (t,s,a),
//   p(s'|s,a,L_t) = p_base[t,s,a,s'] + p_coeff[t,s,a,s',:] . vec(L_t)
// and the same shape for the reward scalar and each cost component.
struct AffineEnvSpec {
  GameDims dims;
  std::vector<double> mu0;     // |S|
  std::vector<double> gamma0;  // k thresholds, <= convention
  std::vector<double> p_base;  // [t][s][a][s']
  std::vector<double> p_coeff; // [t][s][a][s'][j]
  std::vector<double> r_base;  // [t][s][a]
  std::vector<double> r_coeff; // [t][s][a][j]
  std::vector<double> c_base;  // [i][t][s][a]
  std::vector<double> c_coeff; // [i][t][s][a][j]
  bool population_level = false;
  std::optional<LipschitzConstants> lipschitz;

  int pb(int t, int s, int a, int sp) const { return dims.idx(t, s, a) * dims.n_states + sp; }
  int pc(int t, int s, int a, int sp, int j) const { return pb(t, s, a, sp) * dims.slice_size() + j; }
  int rb(int t, int s, int a) const { return dims.idx(t, s, a); }
  int rc(int t, int s, int a, int j) const { return rb(t, s, a) * dims.slice_size() + j; }
  int cb(int i, int t, int s, int a) const { return i * dims.flat_size() + dims.idx(t, s, a); }
  int cc_(int i, int t, int s, int a, int j) const { return cb(i, t, s, a) * dims.slice_size() + j; }
};

struct EnvironmentModel {
  GameDims dims;
  std::vector<double> mu0;
  std::vector<double> gamma0;
  bool population_level = false;
  double r_abs_max = 0.0;  // max |reward| over the flow simplex
  double c_abs_max = 0.0;  // max |cost component| over the flow simplex
  LipschitzConstants lipschitz;
  AffineEnvSpec spec;  // coefficient blocks double as the exact Jacobians in L_t

  // Lt points at the |S||A| entries of one flow slice.
  void transition(int t, int s, int a, const double* Lt, double* out) const;
  double reward(int t, int s, int a, const double* Lt) const;
  void cost(int t, int s, int a, const double* Lt, double* out) const;

  // Jacobian rows with respect to vec(L_t), length |S||A| each.
  const double* p_jac(int t, int s, int a, int sp) const { return &spec.p_coeff[spec.pc(t, s, a, sp, 0)]; }
  const double* r_jac(int t, int s, int a) const { return &spec.r_coeff[spec.rc(t, s, a, 0)]; }
  const double* c_jac(int i, int t, int s, int a) const { return &spec.c_coeff[spec.cc_(i, t, s, a, 0)]; }
};

// Batch evaluation at a full flow.
std::vector<double> transition_all(const EnvironmentModel& env, const MeanFieldFlow& L);  // [t,s,a,s']
std::vector<double> reward_all(const EnvironmentModel& env, const MeanFieldFlow& L);      // flat
std::vector<double> cost_all(const EnvironmentModel& env, const MeanFieldFlow& L);        // k x flat
std::vector<double> cost_lhs(const EnvironmentModel& env, const MeanFieldFlow& L);        // C_L L, length k

// Self-consistent flow recursion: slice t+1 is slice t pushed through
// transitions evaluated at the flow being built.
MeanFieldFlow flow_from_policy(const Policy& pi, const EnvironmentModel& env);

// Same recursion with transitions evaluated at the supplied fixed L.
OccupationMeasure occupation_from_policy(const Policy& pi, const MeanFieldFlow& L,
                                         const EnvironmentModel& env);

// Row normalization; uniform row where the state marginal is < 1e-12.
Policy policy_from_occupation(const OccupationMeasure& d);
Policy policy_from_flow(const MeanFieldFlow& L);

Policy uniform_policy(const GameDims& dims);

// Euclidean projection of every time slice onto the probability simplex
// (sort-and-threshold); idempotent. Throws on non-finite input.
MeanFieldFlow project_flow(const GameDims& dims, std::vector<double> raw);

// Validates the spec on the simplex vertices (sufficient by affinity) and
// fills r_abs_max / c_abs_max / Lipschitz constants from the affine blocks.
EnvironmentModel load_affine_env(const AffineEnvSpec& spec);

enum class ConstraintKind { agent_state, agent_action, pop_state };

// Example SIS epidemic game. States {S=0, I=1}, actions {U=0 go out, D=1
// distance}. agent_state: E[sum_t 1{s_t=I}]/|T| <= gamma0. agent_action is the
// >= constraint on going out, encoded by negating cost and threshold.
// pop_state carries the same per-agent cost flagged population-level.
EnvironmentModel builtin_sis(int T, double mu0_I, double gamma0, ConstraintKind kind);

ConstraintKind constraint_kind_from_string(const std::string& name);

// JSON (de)serialization of AffineEnvSpec. Parse errors report the line,
// semantic errors the offending key path.
AffineEnvSpec affine_env_from_json(const std::string& text);
AffineEnvSpec affine_env_from_file(const std::string& path);
std::string affine_env_to_json(const AffineEnvSpec& spec);

// Small dense helpers shared by the numeric modules.
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm1(const std::vector<double>& v);
double norm2(const std::vector<double>& v);
double norminf(const std::vector<double>& v);

}  // namespace cmfg
