#pragma once

#include <cmfg/core.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace cmfg {

struct NPlayerConfig {
  int n_players = 2;
  int n_episodes = 1;
  std::uint64_t seed = 0;
  std::optional<Policy> deviation_policy;  // player 1 plays this when set
  bool exhaustive = false;  // exact path enumeration instead of Monte Carlo
  int n_threads = 0;        // 0 = hardware concurrency; results do not depend on it
};

struct EpisodeBatchStats {
  double v1_mean = 0.0;
  double v1_stderr = 0.0;
  std::vector<double> cost1_mean;    // player-1 cumulative cost per constraint
  std::vector<double> cost1_stderr;
  double flow_deviation = 0.0;         // max_t E ||empirical flow_t - induced flow_t||_1
  double flow_deviation_stderr = 0.0;  // stderr at the slice attaining the max
  double g_fea_1 = 0.0;                // player-1 feasibility gap at the mean cost
};

// M episodes of the N-player game under a shared policy; all agents interact
// through the per-step empirical state-action distribution. Per-(episode,
// agent, step) counter-based random streams make the result independent of
// thread scheduling and identical for matching seeds.
EpisodeBatchStats simulate(const EnvironmentModel& env, const Policy& pi_shared,
                           const NPlayerConfig& config);

struct DeviationGain {
  double gain = 0.0;     // player-1 value change from deviating
  double stderr = 0.0;   // 0 in exhaustive mode
  double g_fea_dev = 0.0;
};

// Both runs share random streams (common random numbers), so a null deviation
// yields an exact zero.
DeviationGain deviation_gain(const EnvironmentModel& env, const Policy& pi_shared,
                             const Policy& pi_dev, const NPlayerConfig& config);

struct EpsNeCertificate {
  double eps1_theory = 0.0;
  double eps2_theory = 0.0;
  double eps1_measured = 0.0;  // largest feasible-deviation gain in the menu
  double eps1_measured_stderr = 0.0;
  double eps2_measured = 0.0;  // feasibility gap of the shared policy itself
  double eps2_measured_stderr = 0.0;
  bool measured = false;  // measured fields are filled only when a config is supplied
  int n_required = 0;
  double eps_coupling = 0.0;  // flow coupling level achieved at n_required
  double c_tilde = 0.0;
};

// Smallest N whose flow-coupling bound c_tilde (1/(2 sqrt N) + 2/N) stays
// under target_eps, with the per-unit multipliers turning that into value and
// feasibility tolerances. When mc is given, plays a deviation menu (all
// deterministic policies for tiny games, otherwise the mean-field best
// response) at that N to fill the measured fields.
EpsNeCertificate epsilon_ne_certificate(const EnvironmentModel& env, const Policy& pi_star,
                                        double target_eps, double delta,
                                        const NPlayerConfig* mc = nullptr);

struct RateRow {
  int n_players = 0;
  double deviation_mean = 0.0;
  double deviation_stderr = 0.0;
  double gain_mean = 0.0;
  double gain_stderr = 0.0;
};

struct RateStudy {
  std::vector<RateRow> rows;
  double slope = 0.0;  // least-squares slope of log deviation against log N
};

// Empirical flow-deviation decay over ascending player counts, with the
// best-response deviation gain measured at each N.
RateStudy rate_study(const EnvironmentModel& env, const Policy& pi_star,
                     const std::vector<int>& ns, const NPlayerConfig& config);

namespace detail {

// splitmix64 finalizer chain over (seed, episode, agent, step, purpose);
// uniform in [0, 1).
double counter_uniform(std::uint64_t seed, std::uint64_t episode, std::uint64_t agent,
                       std::uint64_t step, std::uint64_t purpose);

// index of the first cumulative bucket exceeding u
int sample_index(const double* probs, int n, double u);

}  // namespace detail

}  // namespace cmfg
