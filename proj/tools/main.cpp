#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sprk/control.hpp"
#include "sprk/convergence.hpp"
#include "sprk/problems.hpp"
#include "sprk/reports.hpp"
#include "sprk/reverse.hpp"
#include "sprk/variational.hpp"
#include "sprk/zero_weight.hpp"

namespace {

using nlohmann::json;
using namespace sprk;

// ---------------------------------------------------------------------------
// output plumbing

// SPRK_OUT_DIR reroutes relative output paths; directories are created
std::filesystem::path resolve_out(const std::string& name) {
  std::filesystem::path p(name);
  const char* dir = std::getenv("SPRK_OUT_DIR");
  if (dir && *dir && p.is_relative()) p = std::filesystem::path(dir) / p;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  return p;
}

// empty name means stdout
void emit(const std::string& name, const std::string& text) {
  if (name.empty()) {
    std::cout << text;
    return;
  }
  const std::filesystem::path path = resolve_out(name);
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << text;
}

std::string num(double v) {
  char buf[32];  // shortest text that parses back to the same double
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

TimeGrid make_grid(double t0, double T, double h) {
  if (!(h > 0.0)) throw Error("step size must be positive");
  if (!(T > t0)) throw Error("the time interval is empty");
  const double span = T - t0;
  const int n = static_cast<int>(std::lround(span / h));
  if (n < 1 || std::abs(n * h - span) > 1e-9 * std::max(1.0, span))
    throw Error("step size " + num(h) + " does not divide the interval");
  return TimeGrid::uniform(t0, T, n);
}

// ---------------------------------------------------------------------------
// selector registries

std::variant<RkTableau, PrkTableau> pick_tableau(const std::string& id) {
  try {
    return resolve_tableau(id);
  } catch (const UnknownTableau&) {
    std::string msg = "unknown tableau '" + id + "'; catalog:";
    for (const auto& n : catalog_rk()) msg += " " + n;
    msg += " | pairs:";
    for (const auto& n : catalog_prk()) msg += " " + n;
    throw Error(msg + " | or a path to a tableau json file");
  }
}

RkTableau pick_rk(const std::string& id) {
  auto tv = pick_tableau(id);
  if (std::holds_alternative<PrkTableau>(tv))
    throw Error("'" + id + "' is a tableau pair; this subcommand takes a single-block scheme");
  return std::get<RkTableau>(std::move(tv));
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

constexpr const char* kOdeProblems = "lotka, harmonic, forced-rotation";
constexpr const char* kPairProblems =
    "separable-oscillator, forced-oscillator, bilinear-qp";

struct OdeProblem {
  OdeSystem sys;
  Vec start;
};

OdeProblem ode_problem(const std::string& name) {
  if (name == "lotka") return {lotka_volterra(), lotka_start()};
  if (name == "harmonic") return {harmonic_oscillator(), vec2(1.0, 0.0)};
  if (name == "forced-rotation") return {forced_rotation(), vec2(1.0, 0.0)};
  throw Error("unknown problem '" + name + "'; single-block problems: " +
              std::string(kOdeProblems));
}

bool is_pair_problem(const std::string& name) {
  return name == "separable-oscillator" || name == "forced-oscillator" ||
         name == "bilinear-qp";
}

struct PairProblem {
  PartitionedSystem sys;
  Vec q0, p0;
};

PairProblem pair_problem(const std::string& name) {
  Vec one(1);
  one << 1.0;
  Vec zero(1);
  zero << 0.0;
  if (name == "separable-oscillator") return {separable_oscillator(), one, zero};
  if (name == "forced-oscillator") return {forced_oscillator(), one, zero};
  if (name == "bilinear-qp")
    return {bilinear_qp(), vec2(1.0, 0.5), vec2(0.25, -1.0)};
  throw Error("unknown problem '" + name + "'; partitioned problems: " +
              std::string(kPairProblems));
}

struct TerminalCostEntry {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> grad;
};

TerminalCostEntry pick_cost(const std::string& name, int dim) {
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
            [dim](const Vec&) { return Vec::Ones(dim); }};
  throw Error("unknown cost '" + name + "'; costs: half-x1-sq, x1, sum");
}

// ---------------------------------------------------------------------------
// shared option state

struct Global {
  std::string format = "csv";
  bool format_given = false;
  std::int64_t seed = 0;  // reserved for randomized sweeps; all current
                          // subcommands are deterministic
};

// quantity/value rows, the house style for small stdout reports
struct Rows {
  std::ostringstream csv;
  json obj = json::object();

  Rows() { csv << "quantity,value\n"; }
  void add(const std::string& name, double v) {
    csv << name << ',' << num(v) << '\n';
    std::string key = name;
    std::replace(key.begin(), key.end(), '.', '_');
    obj[key] = v;
  }
  void print(const Global& g) const {
    if (g.format == "json")
      std::cout << obj.dump(2) << '\n';
    else
      std::cout << csv.str();
  }
};

// ---------------------------------------------------------------------------
// check-tableau

void describe_rk(const RkTableau& tab, json& j) {
  j["name"] = tab.name;
  j["kind"] = "rk";
  j["stages"] = tab.s;
  const SymplecticnessReport rep = symplectic_defect(tab);
  j["max_defect"] = rep.max_defect;
  j["max_defect_full"] = rep.max_defect_full;
  j["symplectic"] = rep.symplectic();
  j["symplectic_nonautonomous"] = rep.symplectic_nonautonomous();
  json conds = json::array();
  for (const auto& [label, value] : order_residuals(tab))
    conds.push_back({{"condition", label}, {"residual", value}});
  j["order_residuals"] = std::move(conds);
}

void describe_prk(const PrkTableau& ptab, json& j) {
  j["name"] = ptab.name;
  j["kind"] = "pair";
  j["stages"] = ptab.lower.s;
  const SymplecticnessReport rep = symplectic_defect(ptab);
  j["max_defect"] = rep.max_defect;
  j["max_defect_full"] = rep.max_defect_full;
  j["symplectic"] = rep.symplectic();
  j["symplectic_nonautonomous"] = rep.symplectic_nonautonomous();
  j["weight_defect"] = std::vector<double>(
      rep.weight_defect.data(), rep.weight_defect.data() + rep.weight_defect.size());
  j["abscissa_defect"] = std::vector<double>(
      rep.abscissa_defect.data(),
      rep.abscissa_defect.data() + rep.abscissa_defect.size());
  json conds = json::array();
  for (const auto& [label, value] : order_residuals(ptab))
    conds.push_back({{"condition", label}, {"residual", value}});
  j["order_residuals"] = std::move(conds);
}

void run_check_tableau(const Global& g, const std::string& id) {
  json j;
  std::visit([&](const auto& tab) {
    using T = std::decay_t<decltype(tab)>;
    if constexpr (std::is_same_v<T, RkTableau>)
      describe_rk(tab, j);
    else
      describe_prk(tab, j);
  }, pick_tableau(id));

  if (g.format_given && g.format == "json") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  if (g.format_given && g.format == "csv") {
    std::ostringstream os;
    os << "quantity,value\n";
    os << "name," << j["name"].get<std::string>() << '\n';
    os << "kind," << j["kind"].get<std::string>() << '\n';
    os << "stages," << j["stages"].get<int>() << '\n';
    os << "max_defect," << num(j["max_defect"].get<double>()) << '\n';
    os << "max_defect_full," << num(j["max_defect_full"].get<double>()) << '\n';
    os << "symplectic," << (j["symplectic"].get<bool>() ? 1 : 0) << '\n';
    for (const auto& c : j["order_residuals"])
      os << c["condition"].get<std::string>() << ','
         << num(c["residual"].get<double>()) << '\n';
    std::cout << os.str();
    return;
  }

  // aligned text, the default
  std::size_t width = 0;
  for (const auto& c : j["order_residuals"])
    width = std::max(width, c["condition"].get<std::string>().size());
  std::cout << j["name"].get<std::string>() << ": " << j["stages"].get<int>()
            << "-stage " << (j["kind"] == "rk" ? "tableau" : "tableau pair")
            << '\n';
  std::cout << "  symplectic defect        " << std::scientific
            << std::setprecision(3) << j["max_defect"].get<double>() << '\n';
  std::cout << "  with abscissa coupling   " << j["max_defect_full"].get<double>()
            << '\n';
  std::cout << "  preserves quadratic invariants: "
            << (j["symplectic"].get<bool>() ? "yes" : "no") << '\n';
  std::cout << "  order residuals\n";
  for (const auto& c : j["order_residuals"])
    std::cout << "    " << std::left << std::setw(static_cast<int>(width) + 2)
              << c["condition"].get<std::string>() << std::right
              << c["residual"].get<double>() << '\n';
  std::cout.unsetf(std::ios::scientific | std::ios::left);
}

// ---------------------------------------------------------------------------
// integrate

struct IntegrateOpts {
  std::string tableau, problem, out, stages;
  double h = 0.0, T = 1.0, t0 = 0.0;
};

std::string trajectory_csv(const std::vector<double>& times,
                           const std::vector<Vec>& nodes) {
  std::ostringstream os;
  os << 't';
  for (int j = 0; j < nodes.front().size(); ++j) os << ",x" << j + 1;
  os << '\n';
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    os << num(times[n]);
    for (int j = 0; j < nodes[n].size(); ++j) os << ',' << num(nodes[n][j]);
    os << '\n';
  }
  return os.str();
}

std::string stage_csv(const Trajectory& traj) {
  std::ostringstream os;
  os << "n,i,c_i";
  for (int j = 0; j < traj.nodes.front().size(); ++j) os << ",X" << j + 1;
  os << '\n';
  for (std::size_t n = 0; n < traj.stages.size(); ++n)
    for (int i = 0; i < traj.tableau.s; ++i) {
      os << n << ',' << i + 1 << ',' << num(traj.tableau.c[i]);
      for (int j = 0; j < traj.stages[n].rows(); ++j)
        os << ',' << num(traj.stages[n](j, i));
      os << '\n';
    }
  return os.str();
}

void run_integrate(const Global& g, const IntegrateOpts& o) {
  const TimeGrid grid = make_grid(o.t0, o.T, o.h);
  auto tv = pick_tableau(o.tableau);

  std::vector<double> times = grid.nodes;
  std::vector<Vec> nodes;
  std::optional<Trajectory> rk_run;

  if (std::holds_alternative<RkTableau>(tv)) {
    if (is_pair_problem(o.problem))
      throw Error("problem '" + o.problem +
                  "' is partitioned; pick a tableau pair (e.g. verlet) or a "
                  "single-block problem: " + std::string(kOdeProblems));
    const OdeProblem prob = ode_problem(o.problem);
    rk_run = rk_integrate(prob.sys, std::get<RkTableau>(tv), prob.start, grid);
    nodes = rk_run->nodes;
  } else {
    if (!is_pair_problem(o.problem))
      throw Error("tableau pair '" + o.tableau +
                  "' integrates partitioned problems: " + std::string(kPairProblems));
    const PairProblem prob = pair_problem(o.problem);
    const PrkTrajectory run =
        prk_integrate(prob.sys, std::get<PrkTableau>(tv), prob.q0, prob.p0, grid);
    for (std::size_t n = 0; n < run.nodes_q.size(); ++n) {
      Vec x(run.nodes_q[n].size() + run.nodes_p[n].size());
      x << run.nodes_q[n], run.nodes_p[n];
      nodes.push_back(std::move(x));
    }
  }

  if (!o.stages.empty()) {
    if (!rk_run)
      throw Error("the stage dump is wired for single-block runs only");
    emit(o.stages, stage_csv(*rk_run));
  }

  if (g.format == "json") {
    json j;
    j["t"] = times;
    json xs = json::array();
    for (const Vec& x : nodes)
      xs.push_back(std::vector<double>(x.data(), x.data() + x.size()));
    j["x"] = std::move(xs);
    emit(o.out, j.dump(2) + "\n");
  } else {
    emit(o.out, trajectory_csv(times, nodes));
  }
}

// ---------------------------------------------------------------------------
// sensitivity

struct SensitivityOpts {
  std::string tableau, upper, problem = "lotka";
  bool auto_adjoint = false;
  std::vector<double> eta, omega;
  double h = 0.0, T = 1.0, t0 = 0.0;
};

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void run_sensitivity(const Global& g, const SensitivityOpts& o) {
  const RkTableau tab = pick_rk(o.tableau);
  RkTableau upper = tab;
  if (o.auto_adjoint && !o.upper.empty())
    throw Error("--upper and --auto-adjoint are mutually exclusive");
  if (o.auto_adjoint)
    upper = adjoint_partner(tab).upper;
  else if (!o.upper.empty())
    upper = pick_rk(o.upper);

  const OdeProblem prob = ode_problem(o.problem);
  SensitivityProblem sp;
  sp.system = prob.sys;
  sp.alpha = prob.start;
  sp.eta = to_vec(o.eta);
  sp.omega = to_vec(o.omega);
  if (sp.eta.size() != prob.sys.dim || sp.omega.size() != prob.sys.dim)
    throw Error("eta and omega must have " + std::to_string(prob.sys.dim) +
                " components for problem '" + o.problem + "'");
  sp.grid = make_grid(o.t0, o.T, o.h);

  const SensitivityResult res = sensitivity_pair(sp, tab, upper);
  Rows rows;
  rows.add("lambda0.eta", res.reverse_value);
  rows.add("omega.deltaN", res.forward_value);
  rows.add("gap", res.gap);
  rows.print(g);
}

// ---------------------------------------------------------------------------
// grad

struct GradOpts {
  std::string via, tableau, problem, cost;
  double h = 0.0, T = 1.0, t0 = 0.0;
};

void run_grad(const Global& g, const GradOpts& o) {
  const RkTableau tab = pick_rk(o.tableau);
  const OdeProblem prob = ode_problem(o.problem);
  const TimeGrid grid = make_grid(o.t0, o.T, o.h);
  const TerminalCostEntry cost = pick_cost(o.cost, prob.sys.dim);

  const RkTape tape =
      build_rk_tape(prob.sys, tab, grid, TerminalCost{cost.value, cost.grad});
  const RkTapeGradient taped = rk_tape_gradient(tape, prob.start);

  const Trajectory base = rk_integrate(prob.sys, tab, prob.start, grid);
  const Vec adjoint = gradient_of_terminal_cost(
      base, prob.sys, adjoint_partner(tab).upper, cost.grad);

  const double gap = (taped.gradient - adjoint).lpNorm<Eigen::Infinity>();

  if (g.format == "json") {
    json j;
    j["via"] = o.via;
    j["value"] = taped.value;
    j["tape"] = std::vector<double>(taped.gradient.data(),
                                    taped.gradient.data() + taped.gradient.size());
    j["adjoint"] =
        std::vector<double>(adjoint.data(), adjoint.data() + adjoint.size());
    j["gap"] = gap;
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ostringstream os;
  os << "quantity,value\n";
  os << "via," << o.via << '\n';
  os << "value," << num(taped.value) << '\n';
  for (int j = 0; j < taped.gradient.size(); ++j)
    os << "grad_tape.x" << j + 1 << ',' << num(taped.gradient[j]) << '\n';
  for (int j = 0; j < adjoint.size(); ++j)
    os << "grad_adjoint.x" << j + 1 << ',' << num(adjoint[j]) << '\n';
  os << "gap," << num(gap) << '\n';
  std::cout << os.str();
}

// ---------------------------------------------------------------------------
// reproduce-table1

struct Table1Opts {
  std::string out;
  double tol = 5e-5;
};

void run_table1(const Global& g, const Table1Opts& o) {
  Table1Config cfg;
  cfg.raw_tol = o.tol;
  const Table1Report rep = reproduce_table1(cfg);  // MismatchReport on failure

  emit(o.out, rep.csv());
  if (g.format == "json") {
    json j;
    j["pass"] = true;
    j["reference_reverse"] = rep.reference_reverse;
    j["reference_forward"] = rep.reference_forward;
    json jrows = json::array();
    for (const Table1Row& r : rep.rows)
      jrows.push_back({{"h", r.h},
                       {"lambda0_eta", r.reverse},
                       {"omega_deltaN", r.forward},
                       {"lambda0_eta_minus_limit", r.reverse_gap},
                       {"omega_deltaN_minus_limit", r.forward_gap},
                       {"variant_lambda0_eta", r.variant_reverse}});
    j["rows"] = std::move(jrows);
    std::cout << j.dump(2) << '\n';
    return;
  }
  for (const Table1Row& r : rep.rows)
    std::cout << "h=" << round_away(r.h, 3) << ": lambda0.eta "
              << round_away(r.reverse, 4) << ", omega.deltaN "
              << round_away(r.forward, 4) << ", radau-paired reverse "
              << num(r.variant_reverse) << " -- ok\n";
  std::cout << "limit value " << num(rep.reference_reverse) << '\n';
  std::cout << "table1: PASS (all cells match the reference prints; the "
               "radau-paired reverse column coincides with the forward column)\n";
}

// ---------------------------------------------------------------------------
// reproduce-fig1

struct Fig1Opts {
  std::string out_dir = "fig1";
  double h = 1e-4;
  double eta_scale = 1.0;
};

void run_fig1(const Global& g, const Fig1Opts& o) {
  Fig1Config cfg;
  cfg.fine_h = o.h;
  cfg.eta_scale = o.eta_scale;
  const Fig1Bundle fig = reproduce_fig1(cfg);

  if (o.eta_scale == 1.0) {
    std::vector<std::string> bad;
    const double pair_gap = std::abs(fig.forward_value - fig.reverse_value);
    if (pair_gap > 1e-10)
      bad.push_back("omega.delta_final and lambda0.eta differ by " +
                    num(pair_gap) + " (allowed 1e-10)");
    for (double v : {fig.forward_value, fig.reverse_value})
      if (std::abs(v - (-0.1786)) > 5e-4)
        bad.push_back("scalar " + num(v) + " is not within 5e-4 of -0.1786");
    if (!bad.empty()) throw MismatchReport(std::move(bad));
  }

  const auto& base = fig.run.base;
  std::ostringstream traj;
  traj << "t,x1,x2,x1_perturbed,x2_perturbed\n";
  for (std::size_t n = 0; n < base.nodes.size(); ++n)
    traj << num(base.grid.nodes[n]) << ',' << num(base.nodes[n][0]) << ','
         << num(base.nodes[n][1]) << ',' << num(fig.perturbed.nodes[n][0])
         << ',' << num(fig.perturbed.nodes[n][1]) << '\n';
  emit(o.out_dir + "/trajectory.csv", traj.str());

  std::ostringstream var;
  var << "t,delta1,delta2\n";
  for (std::size_t k = 0; k < fig.marks.size(); ++k)
    var << num(fig.mark_times[k]) << ',' << num(fig.marks[k][0]) << ','
        << num(fig.marks[k][1]) << '\n';
  emit(o.out_dir + "/variational.csv", var.str());

  std::ostringstream lam;
  lam << "t,lambda1,lambda2\n";
  for (std::size_t n = 0; n < fig.run.adjoint.nodes.size(); ++n)
    lam << num(base.grid.nodes[n]) << ',' << num(fig.run.adjoint.nodes[n][0])
        << ',' << num(fig.run.adjoint.nodes[n][1]) << '\n';
  emit(o.out_dir + "/lambda.csv", lam.str());

  std::ostringstream sum;
  sum << "quantity,value\n";
  sum << "omega.delta_final," << num(fig.forward_value) << '\n';
  sum << "lambda0.eta," << num(fig.reverse_value) << '\n';
  sum << "gap," << num(std::abs(fig.forward_value - fig.reverse_value)) << '\n';
  sum << "reference_print,-0.1786\n";
  emit(o.out_dir + "/summary.csv", sum.str());

  if (g.format == "json") {
    json j;
    j["omega_delta_final"] = fig.forward_value;
    j["lambda0_eta"] = fig.reverse_value;
    j["gap"] = std::abs(fig.forward_value - fig.reverse_value);
    j["out_dir"] = resolve_out(o.out_dir).string();
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::cout << "omega.delta_final " << num(fig.forward_value)
            << " coincides with lambda0.eta " << num(fig.reverse_value) << '\n';
  std::cout << "bundle written to " << resolve_out(o.out_dir).string() << '\n';
}

// ---------------------------------------------------------------------------
// control-solve

struct ControlOpts {
  std::string method, tableau, problem, mode = "fixed", out, diag;
  bool mode_given = false;
  std::vector<double> alpha, beta;
  double h = 0.0, T = 1.0, t0 = 0.0;
};

std::string control_csv(const ControlSolution& sol) {
  const int d = static_cast<int>(sol.x.front().size());
  const int m = static_cast<int>(sol.u.front().size());
  std::ostringstream os;
  os << 't';
  for (int j = 0; j < d; ++j) os << ",x" << j + 1;
  for (int j = 0; j < d; ++j) os << ",lam" << j + 1;
  for (int j = 0; j < m; ++j) os << ",u" << j + 1;
  os << '\n';
  for (std::size_t n = 0; n < sol.x.size(); ++n) {
    os << num(sol.grid.nodes[n]);
    for (int j = 0; j < d; ++j) os << ',' << num(sol.x[n][j]);
    for (int j = 0; j < d; ++j) os << ',' << num(sol.lam[n][j]);
    for (int j = 0; j < m; ++j) os << ',' << num(sol.u[n][j]);
    os << '\n';
  }
  return os.str();
}

const char* mode_name(BoundaryMode m) {
  switch (m) {
    case BoundaryMode::FixedInitial: return "fixed";
    case BoundaryMode::FreeInitial: return "free";
    case BoundaryMode::FixedBoth: return "both";
  }
  return "?";
}

json control_diag(const ControlSolution& sol, const ControlOpts& o) {
  json j;
  j["schema"] = "sprk-diagnostics/1";
  j["method"] = o.method;
  j["tableau"] = o.tableau;
  j["problem"] = o.problem;
  j["mode"] = mode_name(sol.mode);
  j["steps"] = sol.grid.n_steps();
  j["residual"] = sol.diag.residual;
  j["newton_iterations"] = sol.diag.newton_iterations;
  if (sol.diag.kkt)
    j["kkt_residual"] = *sol.diag.kkt;
  else
    j["kkt_residual"] = nullptr;
  j["stationarity"] = sol.diag.stationarity;
  j["momentum_gap"] = sol.diag.momentum_gap;
  j["hamiltonian"] = sol.diag.hamiltonian;
  return j;
}

void run_control(const Global&, const ControlOpts& o) {
  const RkTableau tab = pick_rk(o.tableau);
  const TimeGrid grid = make_grid(o.t0, o.T, o.h);

  ControlSolution sol;
  if (o.problem == "lq") {
    const ControlSystem sys = lq_dynamics();
    const CostSpec cost = lq_cost();
    BoundaryMode mode = BoundaryMode::FixedInitial;
    if (o.mode == "free") mode = BoundaryMode::FreeInitial;
    if (o.mode == "both") mode = BoundaryMode::FixedBoth;
    Vec alpha = o.alpha.empty() ? Vec(Vec::Ones(1)) : to_vec(o.alpha);
    Vec beta = o.beta.empty()
                   ? (o.mode == "both" ? Vec(Vec::Constant(1, 0.5)) : Vec())
                   : to_vec(o.beta);
    if (o.method == "direct") {
      sol = solve_direct(sys, cost, tab, grid, mode, alpha, beta);
    } else {
      const DiscreteOptimalitySystem dos = assemble_discrete_system(
          sys, cost, adjoint_partner(tab), grid, mode, alpha, beta);
      sol = solve_indirect(dos);
    }
  } else if (o.problem == "pendulum-action") {
    if (o.mode_given && o.mode != "both")
      throw Error("pendulum-action pins both endpoints; drop --mode or pass 'both'");
    if (o.method == "direct")
      throw Error("pendulum-action drives the coupled solver; use --method indirect");
    const Vec alpha = o.alpha.empty() ? Vec(Vec::Constant(1, 0.3)) : to_vec(o.alpha);
    const Vec beta = o.beta.empty() ? Vec(Vec::Constant(1, 0.8)) : to_vec(o.beta);
    sol = mechanics_demo(pendulum_action(), tab, grid, alpha, beta);
  } else {
    throw Error("unknown problem '" + o.problem +
                "'; control problems: lq, pendulum-action");
  }

  emit(o.out, control_csv(sol));
  emit(o.diag, control_diag(sol, o).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// zero-weight-demo

struct ZeroWeightOpts {
  std::vector<double> eps{1e-1, 1e-2, 1e-3, 1e-4};
  std::string out;
  double h = 0.01, T = 1.0, t0 = 0.0;
};

void run_zero_weight(const Global& g, const ZeroWeightOpts& o) {
  const SpecialPartitionedSystem sys = special_bilinear();
  const ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  const Vec q0 = vec2(1.0, 0.5), p0 = vec2(0.25, -1.0);
  const TimeGrid grid = make_grid(o.t0, o.T, o.h);

  const FancyTrajectory run = fancy_integrate(sys, scheme, q0, p0, grid);
  double drift = 0.0;
  const double start = q0.dot(p0);
  for (std::size_t n = 0; n < run.nodes_q.size(); ++n)
    drift = std::max(drift, std::abs(run.nodes_q[n].dot(run.nodes_p[n]) - start));

  const LimitReport rep = limit_validation(sys, scheme, q0, p0, grid, o.eps);

  std::ostringstream csv;
  csv << "eps,gap\n";
  for (const LimitRow& row : rep.rows)
    csv << num(row.eps) << ',' << num(row.gap) << '\n';
  emit(o.out, csv.str());

  if (g.format == "json") {
    json j;
    j["qp_drift"] = drift;
    json jrows = json::array();
    for (const LimitRow& row : rep.rows)
      jrows.push_back({{"eps", row.eps}, {"gap", row.gap}});
    j["rows"] = std::move(jrows);
    if (rep.fit) {
      j["slope"] = rep.fit->slope;
      j["r_squared"] = rep.fit->r_squared;
    } else {
      j["slope"] = nullptr;
    }
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::cout << "q.p drift " << num(drift) << " over " << grid.n_steps()
            << " steps\n";
  if (rep.fit)
    std::cout << "limit-approach slope " << num(rep.fit->slope) << " (r^2 "
              << num(rep.fit->r_squared) << ")\n";
  else
    std::cout << "limit-approach slope: not available (need two eps values)\n";
}

// ---------------------------------------------------------------------------
// convergence

struct ConvergenceOpts {
  std::string tableau, problem, out;
  std::vector<double> h_list;
  double T = 1.0, t0 = 0.0;
  int ref_refine = 16;
};

void run_convergence(const Global& g, const ConvergenceOpts& o) {
  const RkTableau tab = pick_rk(o.tableau);
  const OdeProblem prob = ode_problem(o.problem);
  const ConvergenceStudy study = self_convergence(
      prob.sys, tab, prob.start, o.t0, o.T, o.h_list, o.ref_refine);

  std::ostringstream csv;
  csv << "h,error\n";
  for (const ConvergenceRow& row : study.rows)
    csv << num(row.h) << ',' << num(row.error) << '\n';

  if (g.format == "json") {
    json j;
    json jrows = json::array();
    for (const ConvergenceRow& row : study.rows)
      jrows.push_back({{"h", row.h}, {"error", row.error}});
    j["rows"] = std::move(jrows);
    if (study.fit) {
      j["slope"] = study.fit->slope;
      j["r_squared"] = study.fit->r_squared;
    } else {
      j["slope"] = nullptr;
    }
    if (!o.out.empty()) emit(o.out, csv.str());
    std::cout << j.dump(2) << '\n';
    return;
  }
  emit(o.out, csv.str());
  if (study.fit)
    std::cout << "slope " << num(study.fit->slope) << " (r^2 "
              << num(study.fit->r_squared) << ")\n";
  else
    std::cout << "slope: not available (need at least two step sizes)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"symplectic Runge-Kutta integration, sensitivities, and "
               "discrete optimal control"};
  app.require_subcommand(1);
  app.fallthrough();
  // the step-size option is spelled --h, so help must not claim -h
  auto add_sub = [&app](const std::string& name, const std::string& desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->set_help_flag("--help", "print help");
    return sub;
  };

  Global g;
  auto* format_opt =
      app.add_option("--format", g.format, "stdout report format")
          ->check(CLI::IsMember({"csv", "json"}))
          ->capture_default_str();
  app.add_option("--seed", g.seed,
                 "seed for randomized sweeps (current subcommands are "
                 "deterministic)")
      ->capture_default_str();

  // check-tableau
  std::string check_id;
  auto* check = add_sub("check-tableau", "symplecticness defects and order residuals");
  check->add_option("scheme", check_id, "catalog name or tableau json file")
      ->required();
  check->callback([&] {
    g.format_given = format_opt->count() > 0;
    run_check_tableau(g, check_id);
  });

  // integrate
  IntegrateOpts io;
  auto* integ = add_sub("integrate", "run one trajectory, dump csv");
  integ->add_option("--tableau", io.tableau, "catalog name or json file")->required();
  integ->add_option("--problem", io.problem, "problem name")->required();
  integ->add_option("--h", io.h, "step size")->required();
  integ->add_option("--T", io.T, "final time")->required();
  integ->add_option("--t0", io.t0, "start time")->capture_default_str();
  integ->add_option("--out", io.out, "trajectory csv path (stdout if omitted)");
  integ->add_option("--stages", io.stages, "also dump internal stages here");
  integ->callback([&] { run_integrate(g, io); });

  // sensitivity
  SensitivityOpts so;
  auto* sens = add_sub("sensitivity", "forward variational and backward multiplier pairing");
  sens->add_option("--tableau", so.tableau, "scheme for the state run")->required();
  sens->add_option("--upper", so.upper, "scheme for the multiplier run");
  sens->add_flag("--auto-adjoint", so.auto_adjoint,
                 "pair with the partner scheme that closes the gap");
  sens->add_option("--problem", so.problem, "problem name")->capture_default_str();
  sens->add_option("--eta", so.eta, "initial perturbation")
      ->required()->delimiter(',');
  sens->add_option("--omega", so.omega, "terminal weight")
      ->required()->delimiter(',');
  sens->add_option("--h", so.h, "step size")->required();
  sens->add_option("--T", so.T, "final time")->capture_default_str();
  sens->add_option("--t0", so.t0, "start time")->capture_default_str();
  sens->callback([&] { run_sensitivity(g, so); });

  // grad
  GradOpts go;
  auto* grad = add_sub("grad", "terminal-cost gradient, taped and multiplier-swept");
  grad->add_option("--via", go.via, "primary engine")
      ->required()->check(CLI::IsMember({"tape", "adjoint"}));
  grad->add_option("--tableau", go.tableau, "scheme")->required();
  grad->add_option("--problem", go.problem, "problem name")->required();
  grad->add_option("--cost", go.cost, "terminal cost name")->required();
  grad->add_option("--h", go.h, "step size")->required();
  grad->add_option("--T", go.T, "final time")->capture_default_str();
  grad->add_option("--t0", go.t0, "start time")->capture_default_str();
  grad->callback([&] { run_grad(g, go); });

  // reproduce-table1
  Table1Opts to;
  auto* t1 = add_sub("reproduce-table1", "sensitivity benchmark rows against their prints");
  t1->add_option("--out", to.out, "csv path (stdout if omitted)");
  t1->add_option("--tol", to.tol, "raw cell tolerance")->capture_default_str();
  t1->callback([&] { run_table1(g, to); });

  // reproduce-fig1
  Fig1Opts fo;
  auto* f1 = add_sub("reproduce-fig1", "perturbation study bundle for the benchmark figure");
  f1->add_option("--out-dir", fo.out_dir, "bundle directory")->capture_default_str();
  f1->add_option("--h", fo.h, "fine step size")->capture_default_str();
  f1->add_option("--eta-scale", fo.eta_scale, "perturbation scale")
      ->capture_default_str();
  f1->callback([&] { run_fig1(g, fo); });

  // control-solve
  ControlOpts co;
  auto* ctl = add_sub("control-solve",
                                 "discrete optimal control two-point solve");
  ctl->add_option("--method", co.method, "solver")
      ->required()->check(CLI::IsMember({"direct", "indirect"}));
  ctl->add_option("--tableau", co.tableau, "state scheme")->required();
  ctl->add_option("--problem", co.problem, "control problem")->required();
  auto* mode_opt = ctl->add_option("--mode", co.mode, "boundary mode")
                       ->check(CLI::IsMember({"fixed", "free", "both"}))
                       ->capture_default_str();
  ctl->add_option("--h", co.h, "step size")->required();
  ctl->add_option("--T", co.T, "final time")->capture_default_str();
  ctl->add_option("--t0", co.t0, "start time")->capture_default_str();
  ctl->add_option("--alpha", co.alpha, "initial state")->delimiter(',');
  ctl->add_option("--beta", co.beta, "final state (both mode)")->delimiter(',');
  ctl->add_option("--out", co.out, "solution csv path (stdout if omitted)");
  ctl->add_option("--diag", co.diag, "diagnostics json path (stdout if omitted)");
  ctl->callback([&] {
    co.mode_given = mode_opt->count() > 0;
    run_control(g, co);
  });

  // zero-weight-demo
  ZeroWeightOpts zo;
  auto* zw = add_sub("zero-weight-demo", "weightless-stage limit integrator validation");
  zw->add_option("--eps-sweep", zo.eps, "regularization values")
      ->delimiter(',')->capture_default_str();
  zw->add_option("--h", zo.h, "step size")->capture_default_str();
  zw->add_option("--T", zo.T, "final time")->capture_default_str();
  zw->add_option("--out", zo.out, "csv path (stdout if omitted)");
  zw->callback([&] { run_zero_weight(g, zo); });

  // convergence
  ConvergenceOpts vo;
  auto* conv = add_sub("convergence", "self-convergence slope study");
  conv->add_option("--tableau", vo.tableau, "scheme")->required();
  conv->add_option("--problem", vo.problem, "problem name")->required();
  conv->add_option("--h-list", vo.h_list, "step sizes")
      ->required()->delimiter(',');
  conv->add_option("--T", vo.T, "final time")->required();
  conv->add_option("--t0", vo.t0, "start time")->capture_default_str();
  conv->add_option("--ref-refine", vo.ref_refine,
                   "reference grid refinement over min(h)")
      ->capture_default_str();
  conv->add_option("--out", vo.out, "csv path (stdout if omitted)");
  conv->callback([&] { run_convergence(g, vo); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const sprk::MismatchReport& e) {
    std::cerr << "error: " << e.what() << '\n';
    for (const std::string& cell : e.cells) std::cerr << "  " << cell << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
