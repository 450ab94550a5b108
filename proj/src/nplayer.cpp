#include <cmfg/lp.hpp>
#include <cmfg/metrics.hpp>
#include <cmfg/nplayer.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

namespace cmfg {

namespace detail {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t episode, std::uint64_t agent,
                       std::uint64_t step, std::uint64_t purpose) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ episode);
  h = mix64(h ^ agent);
  h = mix64(h ^ step);
  h = mix64(h ^ purpose);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

int sample_index(const double* probs, int n, double u) {
  double cum = 0.0;
  for (int i = 0; i < n; ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  return n - 1;  // guards rounding shortfall in the final bucket
}

}  // namespace detail

namespace {

constexpr std::uint64_t kDrawInit = 0, kDrawAction = 1, kDrawStep = 2;

struct EpisodeRecord {
  double v1 = 0.0;
  std::vector<double> cost1;  // k
  std::vector<double> dev;    // per-slice l1 distance from the induced flow
};

void validate_np(const EnvironmentModel& env, const Policy& pi_shared,
                 const NPlayerConfig& cfg) {
  if (!(pi_shared.dims == env.dims)) throw ValidationError("nplayer: policy dims mismatch");
  validate_policy(pi_shared);
  if (cfg.n_players < 1) throw ValidationError("nplayer: n_players must be >= 1");
  if (cfg.n_episodes < 1) throw ValidationError("nplayer: n_episodes must be >= 1");
  if (cfg.deviation_policy) {
    if (!(cfg.deviation_policy->dims == env.dims)) {
      throw ValidationError("nplayer: deviation policy dims mismatch");
    }
    validate_policy(*cfg.deviation_policy);
  }
}

// player-1 cost contribution of one slice: own sample for agent-level
// constraints, the empirical aggregate for population-level ones
void add_slice_cost(const EnvironmentModel& env, int t, int s0, int a0, const double* L,
                    std::vector<double>& cbuf, std::vector<double>& cost1) {
  const GameDims& d = env.dims;
  const int k = d.n_constraints;
  if (k == 0) return;
  if (env.population_level) {
    for (int s = 0; s < d.n_states; ++s) {
      for (int a = 0; a < d.n_actions; ++a) {
        const double mass = L[d.sa(s, a)];
        if (mass == 0.0) continue;
        env.cost(t, s, a, L, cbuf.data());
        for (int i = 0; i < k; ++i) cost1[i] += cbuf[i] * mass;
      }
    }
  } else {
    env.cost(t, s0, a0, L, cbuf.data());
    for (int i = 0; i < k; ++i) cost1[i] += cbuf[i];
  }
}

EpisodeRecord run_episode(const EnvironmentModel& env, const Policy& pi_shared,
                          const Policy* pi_dev, int N, std::uint64_t seed, std::uint64_t e,
                          const MeanFieldFlow& induced) {
  const GameDims& d = env.dims;
  const int S = d.n_states, A = d.n_actions, H = d.horizon_len, k = d.n_constraints;
  const int J = d.slice_size();

  EpisodeRecord rec;
  rec.cost1.assign(k, 0.0);
  rec.dev.assign(H, 0.0);

  std::vector<int> st(N), act(N), cnt(J);
  std::vector<double> L(J), pbuf(S), cbuf(k);
  for (int i = 0; i < N; ++i) {
    st[i] = detail::sample_index(env.mu0.data(), S,
                                 detail::counter_uniform(seed, e, i, 0, kDrawInit));
  }
  for (int t = 0; t < H; ++t) {
    std::fill(cnt.begin(), cnt.end(), 0);
    for (int i = 0; i < N; ++i) {
      const Policy& p = (i == 0 && pi_dev) ? *pi_dev : pi_shared;
      act[i] = detail::sample_index(&p.values[d.idx(t, st[i], 0)], A,
                                    detail::counter_uniform(seed, e, i, t, kDrawAction));
      ++cnt[d.sa(st[i], act[i])];
    }
    for (int j = 0; j < J; ++j) L[j] = static_cast<double>(cnt[j]) / N;
    double dist = 0.0;
    for (int j = 0; j < J; ++j) dist += std::abs(L[j] - induced.values[t * J + j]);
    rec.dev[t] = dist;
    rec.v1 += env.reward(t, st[0], act[0], L.data());
    add_slice_cost(env, t, st[0], act[0], L.data(), cbuf, rec.cost1);
    if (t + 1 < H) {
      for (int i = 0; i < N; ++i) {
        env.transition(t, st[i], act[i], L.data(), pbuf.data());
        st[i] = detail::sample_index(pbuf.data(), S,
                                     detail::counter_uniform(seed, e, i, t, kDrawStep));
      }
    }
  }
  return rec;
}

long long checked_pow(int base, int exp, long long cap) {
  long long v = 1;
  for (int i = 0; i < exp; ++i) {
    v *= base;
    if (v > cap) return cap + 1;
  }
  return v;
}

// Exact expectations by dynamic programming over the joint state distribution;
// agent i occupies mixed-radix digit i.
EpisodeRecord run_exact(const EnvironmentModel& env, const Policy& pi_shared,
                        const Policy* pi_dev, int N, const MeanFieldFlow& induced) {
  const GameDims& d = env.dims;
  const int S = d.n_states, A = d.n_actions, H = d.horizon_len, k = d.n_constraints;
  const int J = d.slice_size();
  const long long SN = checked_pow(S, N, 1 << 20);
  const long long AN = checked_pow(A, N, 1 << 20);
  if (SN * AN * SN > (1ll << 26)) {
    throw ValidationError("nplayer: game too large for exhaustive enumeration");
  }

  EpisodeRecord rec;
  rec.cost1.assign(k, 0.0);
  rec.dev.assign(H, 0.0);

  std::vector<double> dist(SN, 0.0), next(SN, 0.0);
  std::vector<int> sd(N), ad(N), cnt(J);
  std::vector<double> L(J), cbuf(k), rows(static_cast<std::size_t>(N) * S);
  for (long long js = 0; js < SN; ++js) {
    double pr = 1.0;
    for (long long i = 0, r = js; i < N; ++i, r /= S) pr *= env.mu0[r % S];
    dist[js] = pr;
  }

  for (int t = 0; t < H; ++t) {
    std::fill(next.begin(), next.end(), 0.0);
    for (long long js = 0; js < SN; ++js) {
      if (dist[js] == 0.0) continue;
      for (long long i = 0, r = js; i < N; ++i, r /= S) sd[i] = static_cast<int>(r % S);
      for (long long ja = 0; ja < AN; ++ja) {
        double w = dist[js];
        for (long long i = 0, r = ja; i < N; ++i, r /= A) {
          ad[i] = static_cast<int>(r % A);
          const Policy& p = (i == 0 && pi_dev) ? *pi_dev : pi_shared;
          w *= p.at(t, sd[i], ad[i]);
        }
        if (w == 0.0) continue;
        std::fill(cnt.begin(), cnt.end(), 0);
        for (int i = 0; i < N; ++i) ++cnt[d.sa(sd[i], ad[i])];
        for (int j = 0; j < J; ++j) L[j] = static_cast<double>(cnt[j]) / N;

        double dl = 0.0;
        for (int j = 0; j < J; ++j) dl += std::abs(L[j] - induced.values[t * J + j]);
        rec.dev[t] += w * dl;
        rec.v1 += w * env.reward(t, sd[0], ad[0], L.data());
        std::vector<double> slice_cost(k, 0.0);
        add_slice_cost(env, t, sd[0], ad[0], L.data(), cbuf, slice_cost);
        for (int i = 0; i < k; ++i) rec.cost1[i] += w * slice_cost[i];

        if (t + 1 < H) {
          for (int i = 0; i < N; ++i) {
            env.transition(t, sd[i], ad[i], L.data(), &rows[static_cast<std::size_t>(i) * S]);
          }
          for (long long js2 = 0; js2 < SN; ++js2) {
            double w2 = w;
            for (long long i = 0, r = js2; i < N && w2 != 0.0; ++i, r /= S) {
              w2 *= rows[static_cast<std::size_t>(i) * S + r % S];
            }
            if (w2 != 0.0) next[js2] += w2;
          }
        }
      }
    }
    dist.swap(next);
  }
  return rec;
}

void for_each_episode(int M, int n_threads, const std::function<void(int)>& body) {
  int T = n_threads > 0 ? n_threads : static_cast<int>(std::thread::hardware_concurrency());
  T = std::clamp(T, 1, M);
  if (T == 1) {
    for (int e = 0; e < M; ++e) body(e);
    return;
  }
  std::atomic<int> cursor{0};
  std::vector<std::thread> pool;
  pool.reserve(T);
  for (int w = 0; w < T; ++w) {
    pool.emplace_back([&] {
      for (int e; (e = cursor.fetch_add(1)) < M;) body(e);
    });
  }
  for (auto& th : pool) th.join();
}

std::vector<EpisodeRecord> run_batch(const EnvironmentModel& env, const Policy& pi_shared,
                                     const Policy* pi_dev, const NPlayerConfig& cfg,
                                     const MeanFieldFlow& induced) {
  if (cfg.exhaustive) {
    return {run_exact(env, pi_shared, pi_dev, cfg.n_players, induced)};
  }
  std::vector<EpisodeRecord> recs(cfg.n_episodes);
  for_each_episode(cfg.n_episodes, cfg.n_threads, [&](int e) {
    recs[e] = run_episode(env, pi_shared, pi_dev, cfg.n_players, cfg.seed, e, induced);
  });
  return recs;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stderr_of(const std::vector<double>& xs, double mean) {
  const std::size_t m = xs.size();
  if (m < 2) return 0.0;
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return std::sqrt(s / (static_cast<double>(m) * (m - 1)));
}

double fea_gap(const EnvironmentModel& env, const std::vector<double>& cost) {
  double s = 0.0;
  for (int i = 0; i < env.dims.n_constraints; ++i) {
    const double viol = std::min(0.0, env.gamma0[i] - cost[i]);
    s += viol * viol;
  }
  return std::sqrt(s);
}

EpisodeBatchStats stats_of(const EnvironmentModel& env, const std::vector<EpisodeRecord>& recs) {
  const int H = env.dims.horizon_len, k = env.dims.n_constraints;
  const std::size_t M = recs.size();
  EpisodeBatchStats st;
  std::vector<double> v1(M);
  for (std::size_t e = 0; e < M; ++e) v1[e] = recs[e].v1;
  st.v1_mean = mean_of(v1);
  st.v1_stderr = stderr_of(v1, st.v1_mean);

  st.cost1_mean.assign(k, 0.0);
  st.cost1_stderr.assign(k, 0.0);
  std::vector<double> ci(M);
  for (int i = 0; i < k; ++i) {
    for (std::size_t e = 0; e < M; ++e) ci[e] = recs[e].cost1[i];
    st.cost1_mean[i] = mean_of(ci);
    st.cost1_stderr[i] = stderr_of(ci, st.cost1_mean[i]);
  }

  std::vector<double> slice(M);
  for (int t = 0; t < H; ++t) {
    for (std::size_t e = 0; e < M; ++e) slice[e] = recs[e].dev[t];
    const double m = mean_of(slice);
    if (m > st.flow_deviation) {
      st.flow_deviation = m;
      st.flow_deviation_stderr = stderr_of(slice, m);
    }
  }
  st.g_fea_1 = fea_gap(env, st.cost1_mean);
  return st;
}

Policy best_response_policy(const EnvironmentModel& env, const MeanFieldFlow& L) {
  if (env.population_level || env.dims.n_constraints == 0) {
    const DualSolution dual =
        solve_dual_backward(env, L, std::vector<double>(env.dims.n_constraints, 0.0));
    Policy pi;
    pi.dims = env.dims;
    pi.values.assign(env.dims.flat_size(), 0.0);
    for (int t = 0; t < env.dims.horizon_len; ++t) {
      for (int s = 0; s < env.dims.n_states; ++s) {
        int arg = 0;
        for (int a = 1; a < env.dims.n_actions; ++a) {
          if (dual.z[env.dims.idx(t, s, a)] < dual.z[env.dims.idx(t, s, arg)]) arg = a;
        }
        pi.values[env.dims.idx(t, s, arg)] = 1.0;
      }
    }
    return pi;
  }
  const SimplexResult res = solve_cmdp_simplex(env, L);
  if (res.status != LpStatus::optimal) {
    throw ValidationError("nplayer: no feasible best response under the policy's flow (" +
                          to_string(res.status) + ")");
  }
  return policy_from_occupation(res.d_opt);
}

Policy det_policy(const GameDims& d, long long code) {
  Policy pi;
  pi.dims = d;
  pi.values.assign(d.flat_size(), 0.0);
  long long r = code;
  for (int t = 0; t < d.horizon_len; ++t) {
    for (int s = 0; s < d.n_states; ++s) {
      pi.values[d.idx(t, s, static_cast<int>(r % d.n_actions))] = 1.0;
      r /= d.n_actions;
    }
  }
  return pi;
}

}  // namespace

EpisodeBatchStats simulate(const EnvironmentModel& env, const Policy& pi_shared,
                           const NPlayerConfig& config) {
  validate_np(env, pi_shared, config);
  const MeanFieldFlow induced = flow_from_policy(pi_shared, env);
  const Policy* dev = config.deviation_policy ? &*config.deviation_policy : nullptr;
  return stats_of(env, run_batch(env, pi_shared, dev, config, induced));
}

DeviationGain deviation_gain(const EnvironmentModel& env, const Policy& pi_shared,
                             const Policy& pi_dev, const NPlayerConfig& config) {
  NPlayerConfig cfg = config;
  cfg.deviation_policy.reset();
  validate_np(env, pi_shared, cfg);
  if (!(pi_dev.dims == env.dims)) throw ValidationError("nplayer: deviation policy dims mismatch");
  validate_policy(pi_dev);

  const MeanFieldFlow induced = flow_from_policy(pi_shared, env);
  const auto base = run_batch(env, pi_shared, nullptr, cfg, induced);
  const auto devd = run_batch(env, pi_shared, &pi_dev, cfg, induced);

  std::vector<double> diff(base.size());
  for (std::size_t e = 0; e < base.size(); ++e) diff[e] = devd[e].v1 - base[e].v1;

  DeviationGain out;
  out.gain = mean_of(diff);
  out.stderr = stderr_of(diff, out.gain);
  out.g_fea_dev = fea_gap(env, stats_of(env, devd).cost1_mean);
  return out;
}

EpsNeCertificate epsilon_ne_certificate(const EnvironmentModel& env, const Policy& pi_star,
                                        double target_eps, double delta,
                                        const NPlayerConfig* mc) {
  if (!(delta > 0.0) || !(target_eps > 0.0) || target_eps > delta) {
    throw ValidationError(
        "epsilon_ne_certificate: need 0 < target_eps <= delta (strict feasibility margin)");
  }
  if (!(pi_star.dims == env.dims)) throw ValidationError("nplayer: policy dims mismatch");
  validate_policy(pi_star);

  const BoundSet bs = bound_constants(env, CmfomoCoeffs{}, delta);
  EpsNeCertificate cert;
  cert.c_tilde = bs.c_tilde;

  const auto coupling = [&](long long n) {
    return cert.c_tilde * (0.5 / std::sqrt(static_cast<double>(n)) + 2.0 / n);
  };
  long long n = 2;
  if (cert.c_tilde > 0.0) {
    // Smallest n with q >= x/2 + 2x^2 at x = 1/sqrt(n); the root is written in
    // its cancellation-free form so the estimate stays within a few units even
    // when q is tiny, keeping the correction loops O(1).
    const double q = target_eps / cert.c_tilde;
    const double x = 2.0 * q / (0.5 + std::sqrt(0.25 + 8.0 * q));
    const double n_real = 1.0 / (x * x);
    if (!(n_real < static_cast<double>(std::numeric_limits<int>::max()))) {
      throw ValidationError("epsilon_ne_certificate: required player count overflows");
    }
    n = std::max<long long>(2, static_cast<long long>(std::ceil(n_real - 1e-9)));
    while (coupling(n) > target_eps) ++n;
    while (n > 2 && coupling(n - 1) <= target_eps) --n;
  }
  if (n > std::numeric_limits<int>::max()) {
    throw ValidationError("epsilon_ne_certificate: required player count overflows");
  }
  cert.n_required = static_cast<int>(n);
  cert.eps_coupling = coupling(n);
  cert.eps1_theory = cert.eps_coupling * bs.eps1;
  cert.eps2_theory = cert.eps_coupling * bs.eps2;

  if (mc) {
    if (cert.n_required > 100000) {
      throw ValidationError("epsilon_ne_certificate: required player count too large to simulate");
    }
    NPlayerConfig run = *mc;
    run.n_players = cert.n_required;
    run.deviation_policy.reset();
    const EpisodeBatchStats base = simulate(env, pi_star, run);
    cert.eps2_measured = base.g_fea_1;
    cert.eps2_measured_stderr = norm2(base.cost1_stderr);

    const GameDims& d = env.dims;
    std::vector<Policy> menu;
    if (d.n_states * d.n_actions * d.horizon_len <= 16) {
      long long count = 1;
      for (int i = 0; i < d.n_states * d.horizon_len; ++i) count *= d.n_actions;
      menu.reserve(count);
      for (long long code = 0; code < count; ++code) menu.push_back(det_policy(d, code));
    } else {
      menu.push_back(best_response_policy(env, flow_from_policy(pi_star, env)));
    }
    bool any = false;
    for (const Policy& dev : menu) {
      const DeviationGain g = deviation_gain(env, pi_star, dev, run);
      if (g.g_fea_dev > cert.eps2_theory + 1e-12) continue;
      if (!any || g.gain > cert.eps1_measured) {
        cert.eps1_measured = g.gain;
        cert.eps1_measured_stderr = g.stderr;
      }
      any = true;
    }
    // an empty feasible menu leaves the zero defaults: a vacuous equilibrium
    cert.measured = true;
  }
  return cert;
}

RateStudy rate_study(const EnvironmentModel& env, const Policy& pi_star,
                     const std::vector<int>& ns, const NPlayerConfig& config) {
  if (ns.size() < 3) throw ValidationError("rate_study: need at least 3 player counts");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < 1 || (i > 0 && ns[i] <= ns[i - 1])) {
      throw ValidationError("rate_study: player counts must be ascending and positive");
    }
  }
  if (!(pi_star.dims == env.dims)) throw ValidationError("nplayer: policy dims mismatch");
  validate_policy(pi_star);

  const Policy br = best_response_policy(env, flow_from_policy(pi_star, env));
  RateStudy out;
  out.rows.reserve(ns.size());
  for (int n : ns) {
    NPlayerConfig run = config;
    run.n_players = n;
    run.deviation_policy.reset();
    const EpisodeBatchStats st = simulate(env, pi_star, run);
    const DeviationGain g = deviation_gain(env, pi_star, br, run);
    out.rows.push_back({n, st.flow_deviation, st.flow_deviation_stderr, g.gain, g.stderr});
  }

  double mx = 0.0, my = 0.0;
  std::vector<double> xs(ns.size()), ys(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    xs[i] = std::log(static_cast<double>(ns[i]));
    ys[i] = std::log(std::max(out.rows[i].deviation_mean, 1e-300));
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(ns.size());
  my /= static_cast<double>(ns.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  out.slope = num / den;
  return out;
}

}  // namespace cmfg
