#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sprk/control.hpp"
#include "sprk/convergence.hpp"
#include "sprk/errors.hpp"
#include "sprk/ode.hpp"
#include "sprk/problems.hpp"
#include "sprk/reports.hpp"
#include "sprk/reverse.hpp"
#include "sprk/tableau.hpp"
#include "sprk/variational.hpp"
#include "sprk/zero_weight.hpp"

namespace py = pybind11;

namespace {

using sprk::Mat;
using sprk::TimeGrid;
using sprk::Vec;

TimeGrid make_grid(double t0, double T, double h) {
  if (!(h > 0.0)) throw sprk::Error("step size must be positive");
  if (!(T > t0)) throw sprk::Error("the time interval is empty");
  const double span = T - t0;
  const int n = static_cast<int>(std::lround(span / h));
  if (n < 1 || std::abs(n * h - span) > 1e-9 * std::max(1.0, span))
    throw sprk::Error("step size does not divide the interval");
  return TimeGrid::uniform(t0, T, n);
}

sprk::RkTableau as_rk(const std::string& id) {
  auto tv = sprk::resolve_tableau(id);
  if (std::holds_alternative<sprk::PrkTableau>(tv))
    throw sprk::Error("'" + id + "' is a tableau pair; this operation takes a single-block scheme");
  return std::get<sprk::RkTableau>(std::move(tv));
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

struct OdeProblem {
  sprk::OdeSystem sys;
  Vec start;
};

OdeProblem ode_problem(const std::string& name) {
  if (name == "lotka") return {sprk::lotka_volterra(), sprk::lotka_start()};
  if (name == "harmonic") return {sprk::harmonic_oscillator(), vec2(1.0, 0.0)};
  if (name == "forced-rotation") return {sprk::forced_rotation(), vec2(1.0, 0.0)};
  throw sprk::Error(
      "unknown problem '" + name +
      "'; single-block problems: lotka, harmonic, forced-rotation");
}

struct PairProblem {
  sprk::PartitionedSystem sys;
  Vec q0, p0;
};

bool is_pair_problem(const std::string& name) {
  return name == "separable-oscillator" || name == "forced-oscillator" ||
         name == "bilinear-qp";
}

PairProblem pair_problem(const std::string& name) {
  Vec one(1), zero(1);
  one << 1.0;
  zero << 0.0;
  if (name == "separable-oscillator") return {sprk::separable_oscillator(), one, zero};
  if (name == "forced-oscillator") return {sprk::forced_oscillator(), one, zero};
  if (name == "bilinear-qp")
    return {sprk::bilinear_qp(), vec2(1.0, 0.5), vec2(0.25, -1.0)};
  throw sprk::Error(
      "unknown problem '" + name +
      "'; partitioned problems: separable-oscillator, forced-oscillator, bilinear-qp");
}

sprk::TerminalCost pick_cost(const std::string& name, int dim) {
  if (name == "half-x1-sq")
    return {[](const Vec& x) { return 0.5 * x[0] * x[0]; },
            [dim](const Vec& x) {
              Vec g = Vec::Zero(dim);
              g[0] = x[0];
              return g;
            }};
  if (name == "x1")
    return {[](const Vec& x) { return x[0]; },
            [dim](const Vec&) {
              Vec g = Vec::Zero(dim);
              g[0] = 1.0;
              return g;
            }};
  if (name == "sum")
    return {[](const Vec& x) { return x.sum(); },
            [dim](const Vec&) { return Vec(Vec::Ones(dim)); }};
  throw sprk::Error("unknown cost '" + name + "'; costs: half-x1-sq, x1, sum");
}

// rows are time nodes, columns are components
Mat stack(const std::vector<Vec>& nodes) {
  if (nodes.empty()) return Mat(0, 0);
  Mat m(static_cast<Eigen::Index>(nodes.size()), nodes.front().size());
  for (std::size_t n = 0; n < nodes.size(); ++n) m.row(static_cast<Eigen::Index>(n)) = nodes[n];
  return m;
}

Vec times(const TimeGrid& grid) {
  return Eigen::Map<const Vec>(grid.nodes.data(),
                               static_cast<Eigen::Index>(grid.nodes.size()));
}

py::dict fit_dict(const std::optional<sprk::SlopeFit>& fit) {
  py::dict d;
  d["slope"] = fit ? py::cast(fit->slope) : py::none();
  d["r_squared"] = fit ? py::cast(fit->r_squared) : py::none();
  return d;
}

py::dict run_integrate(const std::string& tableau, const std::string& problem,
                       double h, double T, double t0) {
  const TimeGrid grid = make_grid(t0, T, h);
  auto tv = sprk::resolve_tableau(tableau);
  py::dict d;
  d["t"] = times(grid);
  if (std::holds_alternative<sprk::RkTableau>(tv)) {
    const OdeProblem prob = ode_problem(problem);
    const auto traj =
        sprk::rk_integrate(prob.sys, std::get<sprk::RkTableau>(tv), prob.start, grid);
    d["x"] = stack(traj.nodes);
  } else {
    const PairProblem prob = pair_problem(problem);
    const auto traj = sprk::prk_integrate(prob.sys, std::get<sprk::PrkTableau>(tv),
                                          prob.q0, prob.p0, grid);
    d["q"] = stack(traj.nodes_q);
    d["p"] = stack(traj.nodes_p);
  }
  return d;
}

py::dict run_sensitivity(const std::string& tableau, const std::string& problem,
                         const Vec& eta, const Vec& omega, double h, double T,
                         double t0, const std::optional<std::string>& upper,
                         bool auto_adjoint) {
  if (upper && auto_adjoint)
    throw sprk::Error("pass either upper or auto_adjoint, not both");
  const sprk::RkTableau tab = as_rk(tableau);
  const OdeProblem prob = ode_problem(problem);
  if (eta.size() != prob.sys.dim || omega.size() != prob.sys.dim)
    throw sprk::Error("eta and omega must match the state dimension");

  sprk::SensitivityProblem sp;
  sp.system = prob.sys;
  sp.alpha = prob.start;
  sp.eta = eta;
  sp.omega = omega;
  sp.grid = make_grid(t0, T, h);

  const sprk::RkTableau up =
      auto_adjoint ? sprk::adjoint_partner(tab).upper : (upper ? as_rk(*upper) : tab);
  const auto res = sprk::sensitivity_pair(sp, tab, up);

  py::dict d;
  d["lambda0_eta"] = res.reverse_value;
  d["omega_deltaN"] = res.forward_value;
  d["gap"] = res.gap;
  d["delta"] = stack(res.variational.nodes);
  d["lam"] = stack(res.adjoint.nodes);
  d["pairing"] = sprk::pairing_history(res.adjoint, res.variational);
  return d;
}

py::dict run_gradient(const std::string& tableau, const std::string& problem,
                      const std::string& cost, double h, double T, double t0) {
  const sprk::RkTableau tab = as_rk(tableau);
  const OdeProblem prob = ode_problem(problem);
  const TimeGrid grid = make_grid(t0, T, h);
  const sprk::TerminalCost tc = pick_cost(cost, prob.sys.dim);

  const auto tape = sprk::build_rk_tape(prob.sys, tab, grid, tc);
  const auto taped = sprk::rk_tape_gradient(tape, prob.start);

  const auto base = sprk::rk_integrate(prob.sys, tab, prob.start, grid);
  const Vec adjoint = sprk::gradient_of_terminal_cost(
      base, prob.sys, sprk::adjoint_partner(tab).upper, tc.gradient);

  py::dict d;
  d["value"] = taped.value;
  d["tape"] = Vec(taped.gradient);
  d["adjoint"] = adjoint;
  d["gap"] = (taped.gradient - adjoint).lpNorm<Eigen::Infinity>();
  return d;
}

const char* mode_name(sprk::BoundaryMode mode) {
  switch (mode) {
    case sprk::BoundaryMode::FreeInitial: return "free";
    case sprk::BoundaryMode::FixedBoth: return "both";
    default: return "fixed";
  }
}

py::dict run_control(const std::string& method, const std::string& tableau,
                     const std::string& problem, double h, double T, double t0,
                     const std::optional<std::string>& mode,
                     const std::optional<Vec>& alpha, const std::optional<Vec>& beta) {
  if (method != "direct" && method != "indirect")
    throw sprk::Error("unknown method '" + method + "'; methods: direct, indirect");
  const sprk::RkTableau tab = as_rk(tableau);
  const TimeGrid grid = make_grid(t0, T, h);

  sprk::ControlSolution sol;
  if (problem == "lq") {
    const std::string mode_str = mode.value_or("fixed");
    sprk::BoundaryMode bm = sprk::BoundaryMode::FixedInitial;
    if (mode_str == "free") bm = sprk::BoundaryMode::FreeInitial;
    else if (mode_str == "both") bm = sprk::BoundaryMode::FixedBoth;
    else if (mode_str != "fixed")
      throw sprk::Error("unknown mode '" + mode_str + "'; modes: fixed, free, both");
    const Vec a = alpha.value_or(Vec(Vec::Ones(1)));
    const Vec b = beta ? *beta
                       : (bm == sprk::BoundaryMode::FixedBoth ? Vec(Vec::Constant(1, 0.5))
                                                              : Vec());
    if (method == "direct") {
      sol = sprk::solve_direct(sprk::lq_dynamics(), sprk::lq_cost(), tab, grid, bm, a, b);
    } else {
      const auto dos = sprk::assemble_discrete_system(
          sprk::lq_dynamics(), sprk::lq_cost(), sprk::adjoint_partner(tab), grid, bm, a, b);
      sol = sprk::solve_indirect(dos);
    }
  } else if (problem == "pendulum-action") {
    if (mode && *mode != "both")
      throw sprk::Error("pendulum-action pins both endpoints; drop mode or pass 'both'");
    if (method == "direct")
      throw sprk::Error("pendulum-action drives the coupled solver; use method 'indirect'");
    const Vec a = alpha.value_or(Vec(Vec::Constant(1, 0.3)));
    const Vec b = beta.value_or(Vec(Vec::Constant(1, 0.8)));
    sol = sprk::mechanics_demo(sprk::pendulum_action(), tab, grid, a, b);
  } else {
    throw sprk::Error("unknown problem '" + problem +
                      "'; control problems: lq, pendulum-action");
  }

  py::dict diag;
  diag["residual"] = sol.diag.residual;
  diag["newton_iterations"] = sol.diag.newton_iterations;
  diag["kkt_residual"] = sol.diag.kkt ? py::cast(*sol.diag.kkt) : py::none();
  diag["stationarity"] = sol.diag.stationarity;
  diag["hamiltonian"] = sol.diag.hamiltonian;
  diag["momentum_gap"] = sol.diag.momentum_gap;

  py::dict d;
  d["t"] = times(sol.grid);
  d["x"] = stack(sol.x);
  d["lam"] = stack(sol.lam);
  d["u"] = stack(sol.u);
  d["mode"] = mode_name(sol.mode);
  d["diagnostics"] = diag;
  return d;
}

py::dict run_zero_weight(const std::vector<double>& eps, double h, double T,
                         double t0) {
  const auto sys = sprk::special_bilinear();
  const auto scheme = sprk::make_scheme(sprk::builtin_rk("runge1895"));
  const Vec q0 = vec2(1.0, 0.5), p0 = vec2(0.25, -1.0);
  const TimeGrid grid = make_grid(t0, T, h);

  const auto run = sprk::fancy_integrate(sys, scheme, q0, p0, grid);
  double drift = 0.0;
  const double start = q0.dot(p0);
  for (std::size_t n = 0; n < run.nodes_q.size(); ++n)
    drift = std::max(drift, std::abs(run.nodes_q[n].dot(run.nodes_p[n]) - start));

  const auto rep = sprk::limit_validation(sys, scheme, q0, p0, grid, eps);

  std::vector<double> es, gaps;
  for (const auto& row : rep.rows) {
    es.push_back(row.eps);
    gaps.push_back(row.gap);
  }

  py::dict d;
  d["qp_drift"] = drift;
  d["eps"] = es;
  d["gap"] = gaps;
  d["fit"] = fit_dict(rep.fit);
  d["t"] = times(grid);
  d["q"] = stack(run.nodes_q);
  d["p"] = stack(run.nodes_p);
  return d;
}

py::dict run_convergence(const std::string& tableau, const std::string& problem,
                         const std::vector<double>& h_list, double T, double t0,
                         int ref_refine) {
  const sprk::RkTableau tab = as_rk(tableau);
  const OdeProblem prob = ode_problem(problem);
  const auto study =
      sprk::self_convergence(prob.sys, tab, prob.start, t0, T, h_list, ref_refine);

  std::vector<double> hs, errs;
  for (const auto& row : study.rows) {
    hs.push_back(row.h);
    errs.push_back(row.error);
  }
  py::dict d;
  d["h"] = hs;
  d["error"] = errs;
  d["fit"] = fit_dict(study.fit);
  return d;
}

py::dict run_table1(double raw_tol) {
  sprk::Table1Config cfg;
  cfg.raw_tol = raw_tol;
  const auto rep = sprk::reproduce_table1(cfg);

  py::list rows;
  for (const auto& row : rep.rows) {
    py::dict r;
    r["h"] = row.h;
    r["lambda0_eta"] = row.reverse;
    r["omega_deltaN"] = row.forward;
    r["lambda0_eta_minus_limit"] = row.reverse_gap;
    r["omega_deltaN_minus_limit"] = row.forward_gap;
    r["radau_reverse"] = row.variant_reverse;
    rows.append(r);
  }
  py::dict d;
  d["rows"] = rows;
  d["reference"] = rep.reference_reverse;
  d["csv"] = rep.csv();
  return d;
}

py::dict run_fig1(double h, double eta_scale) {
  sprk::Fig1Config cfg;
  cfg.fine_h = h;
  cfg.eta_scale = eta_scale;
  const auto bundle = sprk::reproduce_fig1(cfg);

  py::dict d;
  d["t"] = times(bundle.run.base.grid);
  d["x"] = stack(bundle.run.base.nodes);
  d["x_perturbed"] = stack(bundle.perturbed.nodes);
  d["lam"] = stack(bundle.run.adjoint.nodes);
  d["mark_times"] = bundle.mark_times;
  d["marks"] = stack(bundle.marks);
  d["omega_deltaN"] = bundle.forward_value;
  d["lambda0_eta"] = bundle.reverse_value;
  d["gap"] = std::abs(bundle.forward_value - bundle.reverse_value);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "symplectic Runge-Kutta integration, discrete sensitivities, and "
      "Runge-Kutta optimal control";
  m.attr("__version__") = "0.1.0";

  py::register_exception<sprk::Error>(m, "Error");

  py::class_<sprk::RkTableau>(m, "RkTableau")
      .def_readonly("name", &sprk::RkTableau::name)
      .def_readonly("s", &sprk::RkTableau::s)
      .def_readonly("a", &sprk::RkTableau::a)
      .def_readonly("b", &sprk::RkTableau::b)
      .def_readonly("c", &sprk::RkTableau::c)
      .def("explicit_stages", &sprk::RkTableau::explicit_stages)
      .def("__repr__", [](const sprk::RkTableau& t) {
        return "<RkTableau " + t.name + ", " + std::to_string(t.s) + " stages>";
      });

  py::class_<sprk::PrkTableau>(m, "PrkTableau")
      .def_readonly("name", &sprk::PrkTableau::name)
      .def_readonly("lower", &sprk::PrkTableau::lower)
      .def_readonly("upper", &sprk::PrkTableau::upper)
      .def("__repr__", [](const sprk::PrkTableau& t) {
        return "<PrkTableau " + t.name + ">";
      });

  py::class_<sprk::SymplecticnessReport>(m, "SymplecticnessReport")
      .def_readonly("coupling", &sprk::SymplecticnessReport::coupling)
      .def_readonly("weight_defect", &sprk::SymplecticnessReport::weight_defect)
      .def_readonly("abscissa_defect", &sprk::SymplecticnessReport::abscissa_defect)
      .def_readonly("max_defect", &sprk::SymplecticnessReport::max_defect)
      .def_readonly("max_defect_full", &sprk::SymplecticnessReport::max_defect_full)
      .def("symplectic", &sprk::SymplecticnessReport::symplectic,
           py::arg("tol") = 1e-14)
      .def("symplectic_nonautonomous",
           &sprk::SymplecticnessReport::symplectic_nonautonomous,
           py::arg("tol") = 1e-14);

  m.def("catalog", [] {
    std::vector<std::string> names = sprk::catalog_rk();
    const auto& pairs = sprk::catalog_prk();
    names.insert(names.end(), pairs.begin(), pairs.end());
    return names;
  });
  m.def("tableau", &sprk::resolve_tableau, py::arg("name_or_path"),
        "look up a builtin scheme or load one from a json file");
  m.def("reflect", &sprk::reflect, py::arg("tab"));
  m.def("transpose", &sprk::transpose, py::arg("tab"));
  m.def("adjoint_partner", &sprk::adjoint_partner, py::arg("tab"),
        "pair tab with the scheme that makes the discrete pairing exact");
  m.def("symplectic_defect",
        py::overload_cast<const sprk::RkTableau&>(&sprk::symplectic_defect),
        py::arg("tab"));
  m.def("symplectic_defect",
        py::overload_cast<const sprk::PrkTableau&>(&sprk::symplectic_defect),
        py::arg("ptab"));
  m.def("order_residuals",
        py::overload_cast<const sprk::RkTableau&>(&sprk::order_residuals),
        py::arg("tab"));
  m.def("order_residuals",
        py::overload_cast<const sprk::PrkTableau&>(&sprk::order_residuals),
        py::arg("ptab"));
  m.def("random_symplectic", &sprk::random_symplectic, py::arg("s"),
        py::arg("seed"));
  m.def("tableau_json",
        py::overload_cast<const sprk::RkTableau&, int>(&sprk::to_json),
        py::arg("tab"), py::arg("indent") = 2);
  m.def("tableau_json",
        py::overload_cast<const sprk::PrkTableau&, int>(&sprk::to_json),
        py::arg("ptab"), py::arg("indent") = 2);

  m.def("integrate", &run_integrate, py::arg("tableau"), py::arg("problem"),
        py::arg("h"), py::arg("T"), py::arg("t0") = 0.0,
        "run a named problem on a uniform grid; single tableaus return t and "
        "x, pairs return t, q and p");
  m.def("sensitivity", &run_sensitivity, py::arg("tableau"), py::arg("problem"),
        py::arg("eta"), py::arg("omega"), py::arg("h"), py::arg("T"),
        py::arg("t0") = 0.0, py::arg("upper") = py::none(),
        py::arg("auto_adjoint") = false,
        "propagate eta forward and omega backward around one recorded run and "
        "report both pairings");
  m.def("gradient", &run_gradient, py::arg("tableau"), py::arg("problem"),
        py::arg("cost"), py::arg("h"), py::arg("T"), py::arg("t0") = 0.0,
        "terminal-cost gradient by the recorded-tape sweep and by the adjoint "
        "scheme, with their gap");
  m.def("control_solve", &run_control, py::arg("method"), py::arg("tableau"),
        py::arg("problem"), py::arg("h"), py::arg("T"), py::arg("t0") = 0.0,
        py::arg("mode") = py::none(), py::arg("alpha") = py::none(),
        py::arg("beta") = py::none(),
        "solve a named optimal control problem; methods direct and indirect, "
        "modes fixed, free and both");
  m.def("zero_weight_demo", &run_zero_weight,
        py::arg("eps") = std::vector<double>{1e-1, 1e-2, 1e-3, 1e-4},
        py::arg("h") = 0.01, py::arg("T") = 1.0, py::arg("t0") = 0.0,
        "integrate the bilinear testbed with the zero-weight scheme and "
        "measure the regularized-pair gap at each eps");
  m.def("convergence", &run_convergence, py::arg("tableau"), py::arg("problem"),
        py::arg("h_list"), py::arg("T"), py::arg("t0") = 0.0,
        py::arg("ref_refine") = 16,
        "endpoint self-convergence study against a refined run of the same "
        "scheme");
  m.def("reproduce_table1", &run_table1, py::arg("raw_tol") = 5e-5,
        "benchmark sensitivity table; raises Error when the frozen prints are "
        "not reproduced");
  m.def("reproduce_fig1", &run_fig1, py::arg("h") = 1e-4,
        py::arg("eta_scale") = 1.0,
        "fine-grid trajectory bundle behind the forward/reverse pairing "
        "figure");
}
