#include "cmfg/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

namespace cmfg {

void validate_dims(const GameDims& d) {
  if (d.n_states <= 0 || d.n_actions <= 0 || d.horizon_len <= 0)
    throw ValidationError("dims: n_states, n_actions, horizon_len must be positive");
  if (d.n_constraints < 0) throw ValidationError("dims: n_constraints must be >= 0");
  long long total = 1LL * d.horizon_len * d.n_states * d.n_actions;
  if (total > (1LL << 30)) throw ValidationError("dims: |S||A||T| too large");
}

void validate_flow(const MeanFieldFlow& L, double tol) {
  validate_dims(L.dims);
  if ((int)L.values.size() != L.dims.flat_size())
    throw ValidationError("flow: wrong number of entries");
  for (int t = 0; t < L.dims.horizon_len; ++t) {
    double sum = 0.0;
    for (int q = 0; q < L.dims.slice_size(); ++q) {
      double v = L.values[t * L.dims.slice_size() + q];
      if (!std::isfinite(v) || v < -tol || v > 1.0 + tol)
        throw ValidationError("flow: entry outside [0,1] at slice " + std::to_string(t));
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol)
      throw ValidationError("flow: slice " + std::to_string(t) + " sums to " + std::to_string(sum));
  }
}

void validate_policy(const Policy& pi, double tol) {
  validate_dims(pi.dims);
  if ((int)pi.values.size() != pi.dims.flat_size())
    throw ValidationError("policy: wrong number of entries");
  for (int t = 0; t < pi.dims.horizon_len; ++t)
    for (int s = 0; s < pi.dims.n_states; ++s) {
      double sum = 0.0;
      for (int a = 0; a < pi.dims.n_actions; ++a) {
        double v = pi.at(t, s, a);
        if (!std::isfinite(v) || v < -tol)
          throw ValidationError("policy: negative entry at (t,s) = (" + std::to_string(t) + "," +
                                std::to_string(s) + ")");
        sum += v;
      }
      if (std::abs(sum - 1.0) > tol)
        throw ValidationError("policy: row (t,s) = (" + std::to_string(t) + "," +
                              std::to_string(s) + ") sums to " + std::to_string(sum));
    }
}

void EnvironmentModel::transition(int t, int s, int a, const double* Lt, double* out) const {
  int n = dims.slice_size();
  for (int sp = 0; sp < dims.n_states; ++sp) {
    double v = spec.p_base[spec.pb(t, s, a, sp)];
    const double* row = &spec.p_coeff[spec.pc(t, s, a, sp, 0)];
    for (int j = 0; j < n; ++j) v += row[j] * Lt[j];
    out[sp] = v;
  }
}

double EnvironmentModel::reward(int t, int s, int a, const double* Lt) const {
  int n = dims.slice_size();
  double v = spec.r_base[spec.rb(t, s, a)];
  const double* row = &spec.r_coeff[spec.rc(t, s, a, 0)];
  for (int j = 0; j < n; ++j) v += row[j] * Lt[j];
  return v;
}

void EnvironmentModel::cost(int t, int s, int a, const double* Lt, double* out) const {
  int n = dims.slice_size();
  for (int i = 0; i < dims.n_constraints; ++i) {
    double v = spec.c_base[spec.cb(i, t, s, a)];
    const double* row = &spec.c_coeff[spec.cc_(i, t, s, a, 0)];
    for (int j = 0; j < n; ++j) v += row[j] * Lt[j];
    out[i] = v;
  }
}

std::vector<double> transition_all(const EnvironmentModel& env, const MeanFieldFlow& L) {
  const GameDims& d = env.dims;
  std::vector<double> P((size_t)d.flat_size() * d.n_states);
  for (int t = 0; t < d.horizon_len; ++t) {
    const double* Lt = &L.values[t * d.slice_size()];
    for (int s = 0; s < d.n_states; ++s)
      for (int a = 0; a < d.n_actions; ++a)
        env.transition(t, s, a, Lt, &P[(size_t)d.idx(t, s, a) * d.n_states]);
  }
  return P;
}

std::vector<double> reward_all(const EnvironmentModel& env, const MeanFieldFlow& L) {
  const GameDims& d = env.dims;
  std::vector<double> r(d.flat_size());
  for (int t = 0; t < d.horizon_len; ++t) {
    const double* Lt = &L.values[t * d.slice_size()];
    for (int s = 0; s < d.n_states; ++s)
      for (int a = 0; a < d.n_actions; ++a) r[d.idx(t, s, a)] = env.reward(t, s, a, Lt);
  }
  return r;
}

std::vector<double> cost_all(const EnvironmentModel& env, const MeanFieldFlow& L) {
  const GameDims& d = env.dims;
  std::vector<double> C((size_t)d.n_constraints * d.flat_size());
  std::vector<double> tmp(d.n_constraints);
  for (int t = 0; t < d.horizon_len; ++t) {
    const double* Lt = &L.values[t * d.slice_size()];
    for (int s = 0; s < d.n_states; ++s)
      for (int a = 0; a < d.n_actions; ++a) {
        env.cost(t, s, a, Lt, tmp.data());
        for (int i = 0; i < d.n_constraints; ++i)
          C[(size_t)i * d.flat_size() + d.idx(t, s, a)] = tmp[i];
      }
  }
  return C;
}

std::vector<double> cost_lhs(const EnvironmentModel& env, const MeanFieldFlow& L) {
  const GameDims& d = env.dims;
  std::vector<double> C = cost_all(env, L);
  std::vector<double> lhs(d.n_constraints, 0.0);
  for (int i = 0; i < d.n_constraints; ++i)
    for (int u = 0; u < d.flat_size(); ++u) lhs[i] += C[(size_t)i * d.flat_size() + u] * L.values[u];
  return lhs;
}

MeanFieldFlow flow_from_policy(const Policy& pi, const EnvironmentModel& env) {
  if (!(pi.dims == env.dims)) throw ValidationError("flow_from_policy: dims mismatch");
  const GameDims& d = env.dims;
  MeanFieldFlow L{d, std::vector<double>(d.flat_size(), 0.0)};
  std::vector<double> mu = env.mu0;
  std::vector<double> next(d.n_states), prow(d.n_states);
  for (int t = 0; t < d.horizon_len; ++t) {
    for (int s = 0; s < d.n_states; ++s)
      for (int a = 0; a < d.n_actions; ++a) L.at(t, s, a) = mu[s] * pi.at(t, s, a);
    if (t + 1 == d.horizon_len) break;
    const double* Lt = &L.values[t * d.slice_size()];
    std::fill(next.begin(), next.end(), 0.0);
    for (int s = 0; s < d.n_states; ++s)
      for (int a = 0; a < d.n_actions; ++a) {
        double mass = L.at(t, s, a);
        if (mass == 0.0) continue;
        env.transition(t, s, a, Lt, prow.data());
        for (int sp = 0; sp < d.n_states; ++sp) next[sp] += mass * prow[sp];
      }
    mu = next;
  }
  return L;
}

OccupationMeasure occupation_from_policy(const Policy& pi, const MeanFieldFlow& L,
                                         const EnvironmentModel& env) {
  if (!(pi.dims == env.dims) || !(L.dims == env.dims))
    throw ValidationError("occupation_from_policy: dims mismatch");
  const GameDims& d = env.dims;
  OccupationMeasure occ{d, std::vector<double>(d.flat_size(), 0.0)};
  std::vector<double> mu = env.mu0;
  std::vector<double> next(d.n_states), prow(d.n_states);
  for (int t = 0; t < d.horizon_len; ++t) {
    for (int s = 0; s < d.n_states; ++s)
      for (int a = 0; a < d.n_actions; ++a) occ.at(t, s, a) = mu[s] * pi.at(t, s, a);
    if (t + 1 == d.horizon_len) break;
    const double* Lt = &L.values[t * d.slice_size()];
    std::fill(next.begin(), next.end(), 0.0);
    for (int s = 0; s < d.n_states; ++s)
      for (int a = 0; a < d.n_actions; ++a) {
        double mass = occ.at(t, s, a);
        if (mass == 0.0) continue;
        env.transition(t, s, a, Lt, prow.data());
        for (int sp = 0; sp < d.n_states; ++sp) next[sp] += mass * prow[sp];
      }
    mu = next;
  }
  return occ;
}

static Policy normalize_rows(const GameDims& d, const std::vector<double>& vals) {
  Policy pi{d, std::vector<double>(d.flat_size(), 0.0)};
  for (int t = 0; t < d.horizon_len; ++t)
    for (int s = 0; s < d.n_states; ++s) {
      double m = 0.0;
      for (int a = 0; a < d.n_actions; ++a) m += vals[d.idx(t, s, a)];
      if (m < 1e-12) {
        for (int a = 0; a < d.n_actions; ++a) pi.at(t, s, a) = 1.0 / d.n_actions;
      } else {
        for (int a = 0; a < d.n_actions; ++a) pi.at(t, s, a) = vals[d.idx(t, s, a)] / m;
      }
    }
  return pi;
}

Policy policy_from_occupation(const OccupationMeasure& d) { return normalize_rows(d.dims, d.values); }
Policy policy_from_flow(const MeanFieldFlow& L) { return normalize_rows(L.dims, L.values); }

Policy uniform_policy(const GameDims& dims) {
  return Policy{dims, std::vector<double>(dims.flat_size(), 1.0 / dims.n_actions)};
}

static void project_slice(double* x, int n) {
  std::vector<double> u(x, x + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  int k = 0;
  for (int i = 0; i < n; ++i) {
    css += u[i];
    if (u[i] - (css - 1.0) / (i + 1) > 0.0) {
      k = i + 1;
      theta = (css - 1.0) / k;
    }
  }
  (void)k;
  for (int i = 0; i < n; ++i) x[i] = std::max(x[i] - theta, 0.0);
}

MeanFieldFlow project_flow(const GameDims& dims, std::vector<double> raw) {
  validate_dims(dims);
  if ((int)raw.size() != dims.flat_size()) throw ValidationError("project_flow: wrong size");
  for (double v : raw)
    if (!std::isfinite(v)) throw ValidationError("project_flow: non-finite entry");
  for (int t = 0; t < dims.horizon_len; ++t) project_slice(&raw[t * dims.slice_size()], dims.slice_size());
  return MeanFieldFlow{dims, std::move(raw)};
}

static LipschitzConstants derive_lipschitz(const AffineEnvSpec& spec) {
  // Induced l1 norms of the stacked coefficient blocks: for each t and each
  // input coordinate j, sum |coeff| over all stacked output coordinates, then
  // take the max over (t, j).
  const GameDims& d = spec.dims;
  LipschitzConstants lc;
  for (int t = 0; t < d.horizon_len; ++t)
    for (int j = 0; j < d.slice_size(); ++j) {
      double cp = 0.0, cr = 0.0, cc = 0.0;
      for (int s = 0; s < d.n_states; ++s)
        for (int a = 0; a < d.n_actions; ++a) {
          for (int sp = 0; sp < d.n_states; ++sp) cp += std::abs(spec.p_coeff[spec.pc(t, s, a, sp, j)]);
          cr += std::abs(spec.r_coeff[spec.rc(t, s, a, j)]);
          for (int i = 0; i < d.n_constraints; ++i) cc += std::abs(spec.c_coeff[spec.cc_(i, t, s, a, j)]);
        }
      lc.cp = std::max(lc.cp, cp);
      lc.cr = std::max(lc.cr, cr);
      lc.cc = std::max(lc.cc, cc);
    }
  return lc;
}

EnvironmentModel load_affine_env(const AffineEnvSpec& spec) {
  const GameDims& d = spec.dims;
  validate_dims(d);
  auto need = [](size_t got, size_t want, const char* what) {
    if (got != want) throw ValidationError(std::string("affine spec: bad ") + what + " size");
  };
  need(spec.mu0.size(), d.n_states, "mu0");
  need(spec.gamma0.size(), d.n_constraints, "gamma0");
  need(spec.p_base.size(), (size_t)d.flat_size() * d.n_states, "transition base");
  need(spec.p_coeff.size(), (size_t)d.flat_size() * d.n_states * d.slice_size(), "transition coeff");
  need(spec.r_base.size(), (size_t)d.flat_size(), "reward base");
  need(spec.r_coeff.size(), (size_t)d.flat_size() * d.slice_size(), "reward coeff");
  need(spec.c_base.size(), (size_t)d.n_constraints * d.flat_size(), "cost base");
  need(spec.c_coeff.size(), (size_t)d.n_constraints * d.flat_size() * d.slice_size(), "cost coeff");

  double msum = 0.0;
  for (double v : spec.mu0) {
    if (!std::isfinite(v) || v < -1e-9) throw ValidationError("affine spec: mu0 entry negative");
    msum += v;
  }
  if (std::abs(msum - 1.0) > 1e-9) throw ValidationError("affine spec: mu0 does not sum to 1");

  // Vertex validation: transitions must be distributions at every simplex
  // vertex of L_t, which by affinity covers the whole simplex.
  for (int t = 0; t < d.horizon_len; ++t)
    for (int s = 0; s < d.n_states; ++s)
      for (int a = 0; a < d.n_actions; ++a)
        for (int j = 0; j < d.slice_size(); ++j) {
          double sum = 0.0;
          for (int sp = 0; sp < d.n_states; ++sp) {
            double v = spec.p_base[spec.pb(t, s, a, sp)] + spec.p_coeff[spec.pc(t, s, a, sp, j)];
            if (!std::isfinite(v) || v < -1e-9 || v > 1.0 + 1e-9)
              throw ValidationError("affine spec: transition out of [0,1] at (t,s,a) = (" +
                                    std::to_string(t) + "," + std::to_string(s) + "," +
                                    std::to_string(a) + "), vertex " + std::to_string(j));
            sum += v;
          }
          if (std::abs(sum - 1.0) > 1e-9)
            throw ValidationError("affine spec: transition row sums to " + std::to_string(sum) +
                                  " at (t,s,a) = (" + std::to_string(t) + "," + std::to_string(s) +
                                  "," + std::to_string(a) + "), vertex " + std::to_string(j));
        }

  EnvironmentModel env;
  env.dims = d;
  env.mu0 = spec.mu0;
  env.gamma0 = spec.gamma0;
  env.population_level = spec.population_level;
  env.spec = spec;

  // Affine forms attain their extrema over the simplex at vertices.
  double rmax = 0.0, cmax = 0.0;
  for (int t = 0; t < d.horizon_len; ++t)
    for (int s = 0; s < d.n_states; ++s)
      for (int a = 0; a < d.n_actions; ++a)
        for (int j = 0; j < d.slice_size(); ++j) {
          rmax = std::max(rmax, std::abs(spec.r_base[spec.rb(t, s, a)] + spec.r_coeff[spec.rc(t, s, a, j)]));
          for (int i = 0; i < d.n_constraints; ++i)
            cmax = std::max(cmax, std::abs(spec.c_base[spec.cb(i, t, s, a)] + spec.c_coeff[spec.cc_(i, t, s, a, j)]));
        }
  env.r_abs_max = rmax;
  env.c_abs_max = cmax;
  env.lipschitz = spec.lipschitz ? *spec.lipschitz : derive_lipschitz(spec);
  return env;
}

EnvironmentModel builtin_sis(int T, double mu0_I, double gamma0, ConstraintKind kind) {
  if (T < 1) throw ValidationError("builtin_sis: T must be >= 1");
  if (mu0_I < 0.0 || mu0_I > 1.0) throw ValidationError("builtin_sis: mu0_I must be in [0,1]");
  const int S = 0, I = 1, U = 0, D = 1;
  GameDims dims{2, 2, T + 1, 1};
  AffineEnvSpec sp;
  sp.dims = dims;
  sp.mu0 = {1.0 - mu0_I, mu0_I};
  sp.p_base.assign((size_t)dims.flat_size() * 2, 0.0);
  sp.p_coeff.assign((size_t)dims.flat_size() * 2 * 4, 0.0);
  sp.r_base.assign(dims.flat_size(), 0.0);
  sp.r_coeff.assign((size_t)dims.flat_size() * 4, 0.0);
  sp.c_base.assign(dims.flat_size(), 0.0);
  sp.c_coeff.assign((size_t)dims.flat_size() * 4, 0.0);
  int jIU = dims.sa(I, U);
  for (int t = 0; t <= T; ++t) {
    // susceptible going out: infected with probability 0.9 L(I,U)
    sp.p_base[sp.pb(t, S, U, S)] = 1.0;
    sp.p_coeff[sp.pc(t, S, U, S, jIU)] = -0.9;
    sp.p_coeff[sp.pc(t, S, U, I, jIU)] = 0.9;
    // susceptible distancing: never infected
    sp.p_base[sp.pb(t, S, D, S)] = 1.0;
    // infected distancing: recovers with probability 0.5
    sp.p_base[sp.pb(t, I, D, S)] = 0.5;
    sp.p_base[sp.pb(t, I, D, I)] = 0.5;
    // infected going out: recovery damped by the infected-out mass
    sp.p_base[sp.pb(t, I, U, S)] = 0.5;
    sp.p_coeff[sp.pc(t, I, U, S, jIU)] = -0.45;
    sp.p_base[sp.pb(t, I, U, I)] = 0.5;
    sp.p_coeff[sp.pc(t, I, U, I, jIU)] = 0.45;
    for (int a = 0; a < 2; ++a) sp.r_base[sp.rb(t, I, a)] += -1.0;
    for (int s = 0; s < 2; ++s) sp.r_base[sp.rb(t, s, D)] += -0.5;
  }
  double nT = T + 1;
  switch (kind) {
    case ConstraintKind::agent_state:
      for (int t = 0; t <= T; ++t)
        for (int a = 0; a < 2; ++a) sp.c_base[sp.cb(0, t, I, a)] = 1.0 / nT;
      sp.gamma0 = {gamma0};
      break;
    case ConstraintKind::agent_action:
      for (int t = 0; t <= T; ++t)
        for (int s = 0; s < 2; ++s) sp.c_base[sp.cb(0, t, s, U)] = -1.0 / nT;
      sp.gamma0 = {-gamma0};
      break;
    case ConstraintKind::pop_state:
      for (int t = 0; t <= T; ++t)
        for (int a = 0; a < 2; ++a) sp.c_base[sp.cb(0, t, I, a)] = 1.0 / nT;
      sp.gamma0 = {gamma0};
      sp.population_level = true;
      break;
    default:
      throw ValidationError("builtin_sis: invalid constraint kind");
  }
  return load_affine_env(sp);
}

ConstraintKind constraint_kind_from_string(const std::string& name) {
  if (name == "agent_state") return ConstraintKind::agent_state;
  if (name == "agent_action") return ConstraintKind::agent_action;
  if (name == "pop_state") return ConstraintKind::pop_state;
  throw ValidationError("unknown constraint kind: " + name);
}

using nlohmann::json;

namespace {

int line_of_byte(const std::string& text, size_t pos) {
  int line = 1;
  for (size_t i = 0; i < pos && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

void flatten_into(const json& node, std::vector<double>& out, const std::string& path) {
  if (node.is_array()) {
    for (size_t i = 0; i < node.size(); ++i)
      flatten_into(node[i], out, path + "[" + std::to_string(i) + "]");
  } else if (node.is_number()) {
    out.push_back(node.get<double>());
  } else {
    throw ValidationError("env json: expected number or array at " + path);
  }
}

std::vector<double> flat_array(const json& j, const char* key, size_t want) {
  if (!j.contains(key)) throw ValidationError(std::string("env json: missing key ") + key);
  std::vector<double> out;
  out.reserve(want);
  flatten_into(j.at(key), out, key);
  if (out.size() != want)
    throw ValidationError(std::string("env json: key ") + key + " has " + std::to_string(out.size()) +
                          " entries, expected " + std::to_string(want));
  return out;
}

json nest(const std::vector<double>& flat, const std::vector<int>& shape) {
  // Rebuild nested lists in row-major order.
  size_t idx = 0;
  std::function<json(int)> go = [&](int depth) -> json {
    json arr = json::array();
    if (depth + 1 == (int)shape.size()) {
      for (int i = 0; i < shape[depth]; ++i) arr.push_back(flat[idx++]);
    } else {
      for (int i = 0; i < shape[depth]; ++i) arr.push_back(go(depth + 1));
    }
    return arr;
  };
  return shape.empty() ? json(flat) : go(0);
}

}  // namespace

AffineEnvSpec affine_env_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("env json: parse error at line " + std::to_string(line_of_byte(text, e.byte)) +
                          ": " + e.what());
  }
  AffineEnvSpec sp;
  if (!j.contains("dims")) throw ValidationError("env json: missing key dims");
  const json& jd = j.at("dims");
  for (const char* k : {"n_states", "n_actions", "horizon_len"})
    if (!jd.contains(k)) throw ValidationError(std::string("env json: dims missing ") + k);
  sp.dims.n_states = jd.at("n_states").get<int>();
  sp.dims.n_actions = jd.at("n_actions").get<int>();
  sp.dims.horizon_len = jd.at("horizon_len").get<int>();
  validate_dims(sp.dims);
  const GameDims& d = sp.dims;

  sp.mu0 = flat_array(j, "mu0", d.n_states);
  if (!j.contains("transition")) throw ValidationError("env json: missing key transition");
  sp.p_base = flat_array(j.at("transition"), "base", (size_t)d.flat_size() * d.n_states);
  sp.p_coeff = flat_array(j.at("transition"), "coeff", (size_t)d.flat_size() * d.n_states * d.slice_size());
  if (!j.contains("reward")) throw ValidationError("env json: missing key reward");
  sp.r_base = flat_array(j.at("reward"), "base", d.flat_size());
  sp.r_coeff = flat_array(j.at("reward"), "coeff", (size_t)d.flat_size() * d.slice_size());

  const json& jc = j.contains("costs") ? j.at("costs") : json::array();
  if (!jc.is_array()) throw ValidationError("env json: costs must be an array");
  sp.dims.n_constraints = (int)jc.size();
  sp.gamma0 = flat_array(j, "gamma0", sp.dims.n_constraints);
  sp.c_base.clear();
  sp.c_coeff.clear();
  for (size_t i = 0; i < jc.size(); ++i) {
    auto base = flat_array(jc[i], "base", d.flat_size());
    auto coeff = flat_array(jc[i], "coeff", (size_t)d.flat_size() * d.slice_size());
    sp.c_base.insert(sp.c_base.end(), base.begin(), base.end());
    sp.c_coeff.insert(sp.c_coeff.end(), coeff.begin(), coeff.end());
  }
  sp.population_level = j.value("population_level", false);
  if (j.contains("lipschitz")) {
    const json& jl = j.at("lipschitz");
    LipschitzConstants lc;
    lc.cp = jl.value("cp", 0.0);
    lc.cr = jl.value("cr", 0.0);
    lc.cc = jl.value("cc", 0.0);
    sp.lipschitz = lc;
  }
  return sp;
}

AffineEnvSpec affine_env_from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open env file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return affine_env_from_json(ss.str());
}

std::string affine_env_to_json(const AffineEnvSpec& sp) {
  const GameDims& d = sp.dims;
  json j;
  j["dims"] = {{"n_states", d.n_states}, {"n_actions", d.n_actions}, {"horizon_len", d.horizon_len}};
  j["mu0"] = sp.mu0;
  j["gamma0"] = sp.gamma0;
  int T = d.horizon_len, S = d.n_states, A = d.n_actions, J = d.slice_size();
  j["transition"] = {{"base", nest(sp.p_base, {T, S, A, S})}, {"coeff", nest(sp.p_coeff, {T, S, A, S, J})}};
  j["reward"] = {{"base", nest(sp.r_base, {T, S, A})}, {"coeff", nest(sp.r_coeff, {T, S, A, J})}};
  json costs = json::array();
  for (int i = 0; i < d.n_constraints; ++i) {
    std::vector<double> base(sp.c_base.begin() + (size_t)i * d.flat_size(),
                             sp.c_base.begin() + (size_t)(i + 1) * d.flat_size());
    std::vector<double> coeff(sp.c_coeff.begin() + (size_t)i * d.flat_size() * J,
                              sp.c_coeff.begin() + (size_t)(i + 1) * d.flat_size() * J);
    costs.push_back({{"base", nest(base, {T, S, A})}, {"coeff", nest(coeff, {T, S, A, J})}});
  }
  j["costs"] = costs;
  j["population_level"] = sp.population_level;
  if (sp.lipschitz)
    j["lipschitz"] = {{"cp", sp.lipschitz->cp}, {"cr", sp.lipschitz->cr}, {"cc", sp.lipschitz->cc}};
  return j.dump(2);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm1(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double norminf(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

}  // namespace cmfg
