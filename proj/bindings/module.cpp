#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmfg/cmfomo.hpp>
#include <cmfg/core.hpp>
#include <cmfg/io.hpp>
#include <cmfg/lp.hpp>
#include <cmfg/metrics.hpp>
#include <cmfg/nplayer.hpp>

namespace py = pybind11;
using namespace cmfg;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Constrained mean-field game solver: equilibrium search, gap "
            "certificates, and finite-population validation.";
  m.attr("__version__") = build_version();

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  py::class_<GameDims>(m, "GameDims")
      .def(py::init([](int n_states, int n_actions, int horizon_len, int n_constraints) {
             GameDims d{n_states, n_actions, horizon_len, n_constraints};
             validate_dims(d);
             return d;
           }),
           py::arg("n_states"), py::arg("n_actions"), py::arg("horizon_len"),
           py::arg("n_constraints") = 0)
      .def_readonly("n_states", &GameDims::n_states)
      .def_readonly("n_actions", &GameDims::n_actions)
      .def_readonly("horizon_len", &GameDims::horizon_len)
      .def_readonly("n_constraints", &GameDims::n_constraints)
      .def("flat_size", &GameDims::flat_size)
      .def("idx", &GameDims::idx, py::arg("t"), py::arg("s"), py::arg("a"))
      .def("__eq__", [](const GameDims& a, const GameDims& b) { return a == b; })
      .def("__repr__", [](const GameDims& d) {
        return "GameDims(n_states=" + std::to_string(d.n_states) +
               ", n_actions=" + std::to_string(d.n_actions) +
               ", horizon_len=" + std::to_string(d.horizon_len) +
               ", n_constraints=" + std::to_string(d.n_constraints) + ")";
      });

  py::class_<Policy>(m, "Policy")
      .def(py::init([](const GameDims& dims, std::vector<double> values) {
             Policy pi{dims, std::move(values)};
             validate_policy(pi);
             return pi;
           }),
           py::arg("dims"), py::arg("values"))
      .def_readonly("dims", &Policy::dims)
      .def_readonly("values", &Policy::values)
      .def("at", [](const Policy& p, int t, int s, int a) { return p.at(t, s, a); },
           py::arg("t"), py::arg("s"), py::arg("a"))
      .def("to_json", [](const Policy& p) { return policy_to_json(p); })
      .def_static("from_json", &policy_from_json_text, py::arg("text"));

  py::class_<MeanFieldFlow>(m, "MeanFieldFlow")
      .def_readonly("dims", &MeanFieldFlow::dims)
      .def_readonly("values", &MeanFieldFlow::values)
      .def("at", [](const MeanFieldFlow& f, int t, int s, int a) { return f.at(t, s, a); },
           py::arg("t"), py::arg("s"), py::arg("a"));

  py::class_<OccupationMeasure>(m, "OccupationMeasure")
      .def_readonly("dims", &OccupationMeasure::dims)
      .def_readonly("values", &OccupationMeasure::values);

  py::class_<EnvironmentModel>(m, "EnvironmentModel")
      .def_readonly("dims", &EnvironmentModel::dims)
      .def_readonly("gamma0", &EnvironmentModel::gamma0)
      .def_readonly("population_level", &EnvironmentModel::population_level)
      .def_readonly("r_abs_max", &EnvironmentModel::r_abs_max)
      .def_readonly("c_abs_max", &EnvironmentModel::c_abs_max)
      .def("to_json", [](const EnvironmentModel& e) { return affine_env_to_json(e.spec); });

  m.def("builtin_sis",
        [](int T, double mu0_I, double gamma0, const std::string& constraint) {
          return builtin_sis(T, mu0_I, gamma0, constraint_kind_from_string(constraint));
        },
        py::arg("T"), py::arg("mu0_I"), py::arg("gamma0"), py::arg("constraint") = "agent_state",
        "Epidemic benchmark with two states (susceptible, infected) and two "
        "actions (go out, distance).");
  m.def("env_from_json",
        [](const std::string& text) { return load_affine_env(affine_env_from_json(text)); },
        py::arg("text"));
  m.def("env_from_file",
        [](const std::string& path) { return load_affine_env(affine_env_from_file(path)); },
        py::arg("path"));

  m.def("uniform_policy", &uniform_policy, py::arg("dims"));
  m.def("flow_from_policy", &flow_from_policy, py::arg("policy"), py::arg("env"));
  m.def("policy_from_flow", &policy_from_flow, py::arg("flow"));
  m.def("occupation_from_policy", &occupation_from_policy, py::arg("policy"), py::arg("flow"),
        py::arg("env"));
  m.def("cost_lhs", &cost_lhs, py::arg("env"), py::arg("flow"),
        "Constraint left-hand sides at a flow, one value per constraint.");

  py::class_<CmfomoCoeffs>(m, "CmfomoCoeffs")
      .def(py::init([](double c1, double c2, double c3, double c4, double c5) {
             return CmfomoCoeffs{c1, c2, c3, c4, c5};
           }),
           py::arg("c1") = 1.0, py::arg("c2") = 1.0, py::arg("c3") = 1.0, py::arg("c4") = 1.0,
           py::arg("c5") = 1.0)
      .def_readwrite("c1", &CmfomoCoeffs::c1)
      .def_readwrite("c2", &CmfomoCoeffs::c2)
      .def_readwrite("c3", &CmfomoCoeffs::c3)
      .def_readwrite("c4", &CmfomoCoeffs::c4)
      .def_readwrite("c5", &CmfomoCoeffs::c5);

  py::class_<SolveConfig>(m, "SolveConfig")
      .def(py::init<>())
      .def_readwrite("coeffs", &SolveConfig::coeffs)
      .def_readwrite("learning_rate", &SolveConfig::learning_rate)
      .def_readwrite("max_iters", &SolveConfig::max_iters)
      .def_readwrite("tolerance", &SolveConfig::tolerance)
      .def_readwrite("tighten_eps0", &SolveConfig::tighten_eps0)
      .def_readwrite("seed", &SolveConfig::seed)
      .def_readwrite("gap_trace_every", &SolveConfig::gap_trace_every);

  py::class_<TraceRow>(m, "TraceRow")
      .def_readonly("iter", &TraceRow::iter)
      .def_readonly("objective", &TraceRow::objective)
      .def_readonly("term1", &TraceRow::term1)
      .def_readonly("term2", &TraceRow::term2)
      .def_readonly("term3", &TraceRow::term3)
      .def_readonly("term4", &TraceRow::term4)
      .def_readonly("term5", &TraceRow::term5)
      .def_readonly("has_gaps", &TraceRow::has_gaps)
      .def_readonly("g_opt", &TraceRow::g_opt)
      .def_readonly("g_fea", &TraceRow::g_fea);

  py::class_<SolveResult>(m, "SolveResult")
      .def_readonly("policy", &SolveResult::policy)
      .def_readonly("trace", &SolveResult::trace)
      .def_readonly("converged", &SolveResult::converged)
      .def_readonly("iterations", &SolveResult::iterations)
      .def_readonly("delta_measured", &SolveResult::delta_measured)
      .def_property_readonly("objective",
                             [](const SolveResult& r) { return r.state.objective; })
      .def_property_readonly("flow", [](const SolveResult& r) { return r.state.L; })
      .def_property_readonly("multipliers",
                             [](const SolveResult& r) { return r.state.lambda; });

  m.def("solve", &solve, py::arg("env"), py::arg("config") = SolveConfig{},
        py::call_guard<py::gil_scoped_release>(),
        "Search for an equilibrium by minimizing the reformulated objective.");
  m.def("solve_population", &solve_population, py::arg("env"), py::arg("config") = SolveConfig{},
        py::call_guard<py::gil_scoped_release>(),
        "Equilibrium search for aggregate-only constraints (multipliers pinned).");

  py::class_<GapReport>(m, "GapReport")
      .def_readonly("g_opt", &GapReport::g_opt)
      .def_readonly("g_fea", &GapReport::g_fea)
      .def_readonly("v_star", &GapReport::v_star)
      .def_readonly("v_pi", &GapReport::v_pi)
      .def_readonly("cost_vector", &GapReport::cost_vector)
      .def_readonly("v_star_defined", &GapReport::v_star_defined);

  m.def("gaps", &gaps, py::arg("env"), py::arg("policy"),
        py::call_guard<py::gil_scoped_release>(),
        "Optimality and feasibility gaps of a policy in the flow it induces.");

  py::class_<BoundSet>(m, "BoundSet")
      .def_readonly("alpha", &BoundSet::alpha)
      .def_readonly("zeta1", &BoundSet::zeta1)
      .def_readonly("zeta2", &BoundSet::zeta2)
      .def_readonly("zeta3", &BoundSet::zeta3)
      .def_readonly("zeta4", &BoundSet::zeta4)
      .def_readonly("zeta1_tilde", &BoundSet::zeta1_tilde)
      .def_readonly("zeta2_tilde", &BoundSet::zeta2_tilde)
      .def_readonly("zeta3_tilde", &BoundSet::zeta3_tilde)
      .def_readonly("zeta4_tilde", &BoundSet::zeta4_tilde)
      .def_readonly("c_tilde", &BoundSet::c_tilde)
      .def_readonly("c_psa", &BoundSet::c_psa)
      .def_readonly("eps1", &BoundSet::eps1)
      .def_readonly("eps2", &BoundSet::eps2);

  m.def("bound_constants", &bound_constants, py::arg("env"), py::arg("coeffs"), py::arg("delta"),
        py::arg("eps0") = 0.0,
        "Closed-form constants tying the objective value to the gap sizes.");

  py::class_<CertifyReport>(m, "CertifyReport")
      .def_readonly("objective_actual", &CertifyReport::objective_actual)
      .def_readonly("objective_bound", &CertifyReport::objective_bound)
      .def_readonly("eps1", &CertifyReport::eps1)
      .def_readonly("eps2", &CertifyReport::eps2)
      .def_readonly("delta", &CertifyReport::delta);

  m.def("certify_from_policy", &certify_from_policy, py::arg("env"), py::arg("policy"),
        py::arg("coeffs") = CmfomoCoeffs{}, py::call_guard<py::gil_scoped_release>(),
        "Builds the feasible tuple induced by a policy and checks the "
        "construction bound on its objective.");

  py::class_<FeasibilityReport>(m, "FeasibilityReport")
      .def_readonly("delta", &FeasibilityReport::delta)
      .def_readonly("satisfied", &FeasibilityReport::satisfied)
      .def_readonly("min_margin", &FeasibilityReport::min_margin)
      .def_readonly("margins", &FeasibilityReport::margins)
      .def_readonly("min_costs", &FeasibilityReport::min_costs);

  m.def("check_strict_feasibility", &check_strict_feasibility, py::arg("env"), py::arg("flow"),
        py::arg("delta") = 0.0, py::call_guard<py::gil_scoped_release>());

  py::class_<NPlayerConfig>(m, "NPlayerConfig")
      .def(py::init<>())
      .def_readwrite("n_players", &NPlayerConfig::n_players)
      .def_readwrite("n_episodes", &NPlayerConfig::n_episodes)
      .def_readwrite("seed", &NPlayerConfig::seed)
      .def_readwrite("deviation_policy", &NPlayerConfig::deviation_policy)
      .def_readwrite("exhaustive", &NPlayerConfig::exhaustive)
      .def_readwrite("n_threads", &NPlayerConfig::n_threads);

  py::class_<EpisodeBatchStats>(m, "EpisodeBatchStats")
      .def_readonly("v1_mean", &EpisodeBatchStats::v1_mean)
      .def_readonly("v1_stderr", &EpisodeBatchStats::v1_stderr)
      .def_readonly("cost1_mean", &EpisodeBatchStats::cost1_mean)
      .def_readonly("cost1_stderr", &EpisodeBatchStats::cost1_stderr)
      .def_readonly("flow_deviation", &EpisodeBatchStats::flow_deviation)
      .def_readonly("flow_deviation_stderr", &EpisodeBatchStats::flow_deviation_stderr)
      .def_readonly("g_fea_1", &EpisodeBatchStats::g_fea_1);

  m.def("simulate", &simulate, py::arg("env"), py::arg("policy"), py::arg("config"),
        py::call_guard<py::gil_scoped_release>(),
        "Finite-population episodes under a shared policy; agents interact "
        "through the empirical state-action distribution.");

  py::class_<DeviationGain>(m, "DeviationGain")
      .def_readonly("gain", &DeviationGain::gain)
      .def_readonly("stderr", &DeviationGain::stderr)
      .def_readonly("g_fea_dev", &DeviationGain::g_fea_dev);

  m.def("deviation_gain", &deviation_gain, py::arg("env"), py::arg("shared"),
        py::arg("deviation"), py::arg("config"), py::call_guard<py::gil_scoped_release>(),
        "Player-1 value change from deviating, under common random numbers.");

  py::class_<EpsNeCertificate>(m, "EpsNeCertificate")
      .def_readonly("eps1_theory", &EpsNeCertificate::eps1_theory)
      .def_readonly("eps2_theory", &EpsNeCertificate::eps2_theory)
      .def_readonly("eps1_measured", &EpsNeCertificate::eps1_measured)
      .def_readonly("eps1_measured_stderr", &EpsNeCertificate::eps1_measured_stderr)
      .def_readonly("eps2_measured", &EpsNeCertificate::eps2_measured)
      .def_readonly("eps2_measured_stderr", &EpsNeCertificate::eps2_measured_stderr)
      .def_readonly("measured", &EpsNeCertificate::measured)
      .def_readonly("n_required", &EpsNeCertificate::n_required)
      .def_readonly("eps_coupling", &EpsNeCertificate::eps_coupling)
      .def_readonly("c_tilde", &EpsNeCertificate::c_tilde);

  m.def("epsilon_ne_certificate",
        [](const EnvironmentModel& env, const Policy& pi_star, double target_eps, double delta,
           std::optional<NPlayerConfig> mc) {
          py::gil_scoped_release release;
          return epsilon_ne_certificate(env, pi_star, target_eps, delta,
                                        mc ? &*mc : nullptr);
        },
        py::arg("env"), py::arg("policy"), py::arg("target_eps"), py::arg("delta"),
        py::arg("mc") = py::none(),
        "Smallest player count meeting a target coupling level; optionally "
        "plays a deviation menu at that count to fill the measured fields.");

  py::class_<RateRow>(m, "RateRow")
      .def_readonly("n_players", &RateRow::n_players)
      .def_readonly("deviation_mean", &RateRow::deviation_mean)
      .def_readonly("deviation_stderr", &RateRow::deviation_stderr)
      .def_readonly("gain_mean", &RateRow::gain_mean)
      .def_readonly("gain_stderr", &RateRow::gain_stderr);

  py::class_<RateStudy>(m, "RateStudy")
      .def_readonly("rows", &RateStudy::rows)
      .def_readonly("slope", &RateStudy::slope);

  m.def("rate_study", &rate_study, py::arg("env"), py::arg("policy"), py::arg("ns"),
        py::arg("config"), py::call_guard<py::gil_scoped_release>(),
        "Empirical flow-deviation decay over ascending player counts.");
}
