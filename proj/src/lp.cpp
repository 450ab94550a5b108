#include <cmfg/lp.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace cmfg {

LpData assemble(const EnvironmentModel& env, const MeanFieldFlow& L) {
  if (!(L.dims == env.dims)) throw ValidationError("assemble: flow dimensions do not match env");
  validate_flow(L);
  const GameDims& d = env.dims;
  const int S = d.n_states, A = d.n_actions, H = d.horizon_len, k = d.n_constraints;
  const int n = S * A * H;

  LpData lp;
  lp.dims = d;
  lp.A.assign(static_cast<std::size_t>(S) * H * n, 0.0);
  lp.b.assign(static_cast<std::size_t>(S) * H, 0.0);
  lp.r.assign(n, 0.0);
  lp.C.assign(static_cast<std::size_t>(k) * n, 0.0);

  std::vector<double> pbuf(S), cbuf(k);
  for (int t = 0; t < H; ++t) {
    const double* Lt = &L.values[static_cast<std::size_t>(t) * S * A];
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const int col = d.idx(t, s, a);
        lp.r[col] = env.reward(t, s, a, Lt);
        env.cost(t, s, a, Lt, cbuf.data());
        for (int i = 0; i < k; ++i) {
          lp.C[static_cast<std::size_t>(i) * n + col] = cbuf[i];
        }
        if (t + 1 < H) {
          env.transition(t, s, a, Lt, pbuf.data());
          for (int sn = 0; sn < S; ++sn) {
            lp.A[static_cast<std::size_t>(t * S + sn) * n + col] = pbuf[sn];
          }
        }
      }
    }
    if (t + 1 < H) {
      for (int sn = 0; sn < S; ++sn) {
        for (int a = 0; a < A; ++a) {
          lp.A[static_cast<std::size_t>(t * S + sn) * n + d.idx(t + 1, sn, a)] = -1.0;
        }
      }
    }
  }
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      lp.A[static_cast<std::size_t>((H - 1) * S + s) * n + d.idx(0, s, a)] = 1.0;
    }
    lp.b[(H - 1) * S + s] = env.mu0[s];
  }
  return lp;
}

DualSolution solve_dual_backward(const EnvironmentModel& env, const MeanFieldFlow& L,
                                 const std::vector<double>& lambda) {
  if (!(L.dims == env.dims)) {
    throw ValidationError("solve_dual_backward: flow dimensions do not match env");
  }
  validate_flow(L);
  const GameDims& d = env.dims;
  const int S = d.n_states, A = d.n_actions, H = d.horizon_len, k = d.n_constraints;
  if (static_cast<int>(lambda.size()) != k) {
    throw ValidationError("solve_dual_backward: lambda has length " +
                          std::to_string(lambda.size()) + ", expected " + std::to_string(k));
  }
  for (int i = 0; i < k; ++i) {
    if (!(lambda[i] >= 0.0)) {
      throw ValidationError("solve_dual_backward: lambda[" + std::to_string(i) +
                            "] = " + std::to_string(lambda[i]) + " is negative");
    }
  }

  DualSolution out;
  out.y.assign(static_cast<std::size_t>(S) * H, 0.0);
  out.z.assign(static_cast<std::size_t>(S) * A * H, 0.0);
  std::vector<double> V(static_cast<std::size_t>(S) * H, 0.0);
  std::vector<double> q(A, 0.0), pbuf(S), cbuf(k);

  for (int t = H - 1; t >= 0; --t) {
    const double* Lt = &L.values[static_cast<std::size_t>(t) * S * A];
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        double v = env.reward(t, s, a, Lt);
        env.cost(t, s, a, Lt, cbuf.data());
        for (int i = 0; i < k; ++i) v -= lambda[i] * cbuf[i];
        if (t + 1 < H) {
          env.transition(t, s, a, Lt, pbuf.data());
          for (int sn = 0; sn < S; ++sn) v += pbuf[sn] * V[(t + 1) * S + sn];
        }
        q[a] = v;
        if (v > best) best = v;
      }
      V[t * S + s] = best;
      for (int a = 0; a < A; ++a) out.z[d.idx(t, s, a)] = best - q[a];
    }
  }
  for (int t = 0; t + 1 < H; ++t) {
    for (int s = 0; s < S; ++s) out.y[t * S + s] = V[(t + 1) * S + s];
  }
  for (int s = 0; s < S; ++s) out.y[(H - 1) * S + s] = -V[s];
  out.value = 0.0;
  for (int s = 0; s < S; ++s) out.value += env.mu0[s] * V[s];
  return out;
}

std::string to_string(LpStatus status) {
  switch (status) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

namespace detail {

std::vector<double> gauss_solve(int n, std::vector<double> M, std::vector<double> rhs) {
  for (int col = 0; col < n; ++col) {
    int p = col;
    for (int i = col + 1; i < n; ++i) {
      if (std::abs(M[static_cast<std::size_t>(i) * n + col]) >
          std::abs(M[static_cast<std::size_t>(p) * n + col])) {
        p = i;
      }
    }
    if (std::abs(M[static_cast<std::size_t>(p) * n + col]) < 1e-12) {
      throw std::logic_error("gauss_solve: singular matrix at column " + std::to_string(col));
    }
    if (p != col) {
      for (int j = 0; j < n; ++j) {
        std::swap(M[static_cast<std::size_t>(p) * n + j], M[static_cast<std::size_t>(col) * n + j]);
      }
      std::swap(rhs[p], rhs[col]);
    }
    const double piv = M[static_cast<std::size_t>(col) * n + col];
    for (int i = col + 1; i < n; ++i) {
      const double f = M[static_cast<std::size_t>(i) * n + col] / piv;
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j) {
        M[static_cast<std::size_t>(i) * n + j] -= f * M[static_cast<std::size_t>(col) * n + j];
      }
      rhs[i] -= f * rhs[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (int i = n - 1; i >= 0; --i) {
    double v = rhs[i];
    for (int j = i + 1; j < n; ++j) v -= M[static_cast<std::size_t>(i) * n + j] * x[j];
    x[i] = v / M[static_cast<std::size_t>(i) * n + i];
  }
  return x;
}

namespace {

struct Tableau {
  int live;       // live row count
  int n;          // structural columns
  int width;      // n + artificials + 1 (rhs)
  std::vector<double> t;
  std::vector<double> obj;  // reduced-cost row, obj[width-1] = -objective value
  std::vector<int> basis;   // basis[i] = column basic in row i
  std::vector<int> orig;    // orig[i] = original row id of tableau row i

  double& at(int i, int j) { return t[static_cast<std::size_t>(i) * width + j]; }
  double rhs(int i) const { return t[static_cast<std::size_t>(i) * width + width - 1]; }

  void pivot(int row, int col) {
    const double piv = at(row, col);
    const double inv = 1.0 / piv;
    for (int j = 0; j < width; ++j) at(row, j) *= inv;
    at(row, col) = 1.0;
    for (int i = 0; i < live; ++i) {
      if (i == row) continue;
      const double f = at(i, col);
      if (f == 0.0) continue;
      for (int j = 0; j < width; ++j) at(i, j) -= f * at(row, j);
      at(i, col) = 0.0;
    }
    const double f = obj[col];
    if (f != 0.0) {
      for (int j = 0; j < width; ++j) obj[j] -= f * at(row, j);
      obj[col] = 0.0;
    }
    basis[row] = col;
  }

  void drop_row(int row) {
    const int last = live - 1;
    if (row != last) {
      for (int j = 0; j < width; ++j) at(row, j) = at(last, j);
      basis[row] = basis[last];
      orig[row] = orig[last];
    }
    --live;
  }
};

// Bland entering rule: lowest structural column with negative reduced cost.
int entering_column(const Tableau& tab, double tol) {
  for (int j = 0; j < tab.n; ++j) {
    if (tab.obj[j] < -tol) return j;
  }
  return -1;
}

// Min-ratio row; ratio ties broken by the lowest basic variable index.
int leaving_row(Tableau& tab, int col, double pivot_tol) {
  int row = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < tab.live; ++i) {
    const double e = tab.at(i, col);
    if (e <= pivot_tol) continue;
    const double ratio = tab.rhs(i) / e;
    if (ratio < best - 1e-12 ||
        (ratio < best + 1e-12 && (row < 0 || tab.basis[i] < tab.basis[row]))) {
      best = ratio;
      row = i;
    }
  }
  return row;
}

}  // namespace

SimplexRawResult simplex_two_phase(int m, int n, std::vector<double> M, std::vector<double> q,
                                   const std::vector<double>& c, const ToleranceConfig& tol) {
  if (static_cast<int>(c.size()) != n || static_cast<int>(q.size()) != m ||
      static_cast<int>(M.size()) != m * n) {
    throw ValidationError("simplex_two_phase: inconsistent dimensions");
  }
  const std::vector<double> M0 = M;  // duals are taken against the unflipped rows
  const long pivot_cap = tol.max_pivots > 0 ? tol.max_pivots : 10000L * (m + n + 1);

  Tableau tab;
  tab.live = m;
  tab.n = n;
  tab.width = n + m + 1;
  tab.t.assign(static_cast<std::size_t>(m) * tab.width, 0.0);
  tab.basis.resize(m);
  tab.orig.resize(m);
  for (int i = 0; i < m; ++i) {
    const double sign = q[i] < 0.0 ? -1.0 : 1.0;
    for (int j = 0; j < n; ++j) tab.at(i, j) = sign * M[static_cast<std::size_t>(i) * n + j];
    tab.at(i, n + i) = 1.0;
    tab.at(i, tab.width - 1) = sign * q[i];
    tab.basis[i] = n + i;
    tab.orig[i] = i;
  }

  // Phase 1: minimize artificial mass. Reduced costs = -(column sums).
  tab.obj.assign(tab.width, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) tab.obj[j] -= tab.at(i, j);
    tab.obj[tab.width - 1] -= tab.rhs(i);
  }
  long pivots = 0;
  for (;;) {
    const int col = entering_column(tab, tol.reduced_cost);
    if (col < 0) break;
    const int row = leaving_row(tab, col, tol.pivot);
    if (row < 0) throw std::logic_error("simplex_two_phase: phase 1 unbounded");
    tab.pivot(row, col);
    if (++pivots > pivot_cap) throw std::logic_error("simplex_two_phase: pivot cap exceeded");
  }
  SimplexRawResult res;
  if (-tab.obj[tab.width - 1] > tol.artificial) {
    res.status = LpStatus::infeasible;
    return res;
  }

  // Drive leftover artificials out of the basis; rows that cannot pivot on any
  // structural column are redundant and get dropped.
  for (int i = 0; i < tab.live;) {
    if (tab.basis[i] < n) {
      ++i;
      continue;
    }
    int col = -1;
    for (int j = 0; j < n; ++j) {
      if (std::abs(tab.at(i, j)) > tol.pivot) {
        col = j;
        break;
      }
    }
    if (col >= 0) {
      tab.pivot(i, col);
      ++i;
    } else {
      tab.drop_row(i);
    }
  }

  // Phase 2 objective row.
  tab.obj.assign(tab.width, 0.0);
  for (int j = 0; j < n; ++j) tab.obj[j] = c[j];
  for (int i = 0; i < tab.live; ++i) {
    const double cb = c[tab.basis[i]];
    if (cb == 0.0) continue;
    for (int j = 0; j < tab.width; ++j) tab.obj[j] -= cb * tab.at(i, j);
  }
  for (;;) {
    const int col = entering_column(tab, tol.reduced_cost);
    if (col < 0) break;
    const int row = leaving_row(tab, col, tol.pivot);
    if (row < 0) {
      res.status = LpStatus::unbounded;
      return res;
    }
    tab.pivot(row, col);
    if (++pivots > pivot_cap) throw std::logic_error("simplex_two_phase: pivot cap exceeded");
  }

  res.status = LpStatus::optimal;
  res.x.assign(n, 0.0);
  for (int i = 0; i < tab.live; ++i) res.x[tab.basis[i]] = tab.rhs(i);
  res.objective = 0.0;
  for (int j = 0; j < n; ++j) res.objective += c[j] * res.x[j];
  res.basis.assign(tab.basis.begin(), tab.basis.begin() + tab.live);
  std::sort(res.basis.begin(), res.basis.end());

  // B^T u = c_B over the retained original rows; dropped rows keep dual 0.
  const int nb = tab.live;
  std::vector<double> bt(static_cast<std::size_t>(nb) * nb, 0.0);
  std::vector<double> cb(nb, 0.0);
  for (int ci = 0; ci < nb; ++ci) {
    const int col = res.basis[ci];
    cb[ci] = c[col];
    for (int ri = 0; ri < nb; ++ri) {
      bt[static_cast<std::size_t>(ci) * nb + ri] =
          M0[static_cast<std::size_t>(tab.orig[ri]) * n + col];
    }
  }
  const std::vector<double> u = gauss_solve(nb, std::move(bt), std::move(cb));
  res.duals.assign(m, 0.0);
  for (int ri = 0; ri < nb; ++ri) res.duals[tab.orig[ri]] = u[ri];
  return res;
}

}  // namespace detail

SimplexResult solve_cmdp_simplex(const EnvironmentModel& env, const MeanFieldFlow& L,
                                 const ToleranceConfig& tol) {
  const LpData lp = assemble(env, L);
  const int mA = lp.rows(), n = lp.cols(), k = env.dims.n_constraints;
  const int m = mA + k, ncol = n + k;

  std::vector<double> M(static_cast<std::size_t>(m) * ncol, 0.0);
  std::vector<double> q(m, 0.0);
  std::vector<double> c(ncol, 0.0);
  for (int i = 0; i < mA; ++i) {
    for (int j = 0; j < n; ++j) M[static_cast<std::size_t>(i) * ncol + j] = lp.a_at(i, j);
    q[i] = lp.b[i];
  }
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n; ++j) M[static_cast<std::size_t>(mA + i) * ncol + j] = lp.c_at(i, j);
    M[static_cast<std::size_t>(mA + i) * ncol + n + i] = 1.0;
    q[mA + i] = env.gamma0[i];
  }
  for (int j = 0; j < n; ++j) c[j] = -lp.r[j];

  const detail::SimplexRawResult raw = detail::simplex_two_phase(m, ncol, M, q, c, tol);
  SimplexResult res;
  res.status = raw.status;
  res.d_opt.dims = env.dims;
  res.d_opt.values.assign(n, 0.0);
  res.lambda_opt.assign(k, 0.0);
  if (raw.status == LpStatus::unbounded) {
    throw std::logic_error(
        "solve_cmdp_simplex: LP reported unbounded, but the feasible region is a polytope");
  }
  if (raw.status != LpStatus::optimal) return res;

  for (int j = 0; j < n; ++j) res.d_opt.values[j] = raw.x[j];
  res.objective = dot(lp.r, res.d_opt.values);
  for (int i = 0; i < k; ++i) res.lambda_opt[i] = std::max(0.0, -raw.duals[mA + i]);
  res.basis = raw.basis;
  return res;
}

FeasibilityReport check_strict_feasibility(const EnvironmentModel& env, const MeanFieldFlow& L,
                                           double delta) {
  if (!(delta >= 0.0)) {
    throw ValidationError("check_strict_feasibility: delta must be >= 0, got " +
                          std::to_string(delta));
  }
  FeasibilityReport rep;
  rep.delta = delta;
  const int k = env.dims.n_constraints;
  if (k == 0) return rep;

  const LpData lp = assemble(env, L);
  const int mA = lp.rows(), n = lp.cols();
  for (int i = 0; i < k; ++i) {
    const int m = mA + (k - 1), ncol = n + (k - 1);
    std::vector<double> M(static_cast<std::size_t>(m) * ncol, 0.0);
    std::vector<double> q(m, 0.0);
    std::vector<double> c(ncol, 0.0);
    for (int ri = 0; ri < mA; ++ri) {
      for (int j = 0; j < n; ++j) M[static_cast<std::size_t>(ri) * ncol + j] = lp.a_at(ri, j);
      q[ri] = lp.b[ri];
    }
    int slot = 0;
    for (int other = 0; other < k; ++other) {
      if (other == i) continue;
      for (int j = 0; j < n; ++j) {
        M[static_cast<std::size_t>(mA + slot) * ncol + j] = lp.c_at(other, j);
      }
      M[static_cast<std::size_t>(mA + slot) * ncol + n + slot] = 1.0;
      q[mA + slot] = env.gamma0[other];
      ++slot;
    }
    for (int j = 0; j < n; ++j) c[j] = lp.c_at(i, j);

    const detail::SimplexRawResult raw = detail::simplex_two_phase(m, ncol, M, q, c);
    if (raw.status != LpStatus::optimal) {
      throw ValidationError("check_strict_feasibility: assumption violated at constraint " +
                            std::to_string(i) + " (subproblem " + to_string(raw.status) + ")");
    }
    rep.min_costs.push_back(raw.objective);
    rep.margins.push_back(env.gamma0[i] - raw.objective);
  }
  rep.min_margin = *std::min_element(rep.margins.begin(), rep.margins.end());
  rep.satisfied = rep.min_margin >= delta;
  return rep;
}

}  // namespace cmfg
