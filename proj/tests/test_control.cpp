#include <cmath>
#include <vector>

#include "doctest.h"
#include "sprk/convergence.hpp"
#include "sprk/problems.hpp"
#include "sprk/variational.hpp"

using namespace sprk;

namespace {

Vec vec1(double a) {
  Vec v(1);
  v << a;
  return v;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// frozen quadratic steering run, gauss2 pairing, 64 steps on [0, 1]
const double kLqU0 = -0.7615941559209971;
const double kLqLam0 = 0.7615941559209971;
const double kLqXn = 0.6480542737047446;

// frozen rk4-pairing control values at the left endpoint, N = 4, 8, 16, 32
const double kRk4U0[] = {-0.7616160804978018, -0.7615954909470551,
                         -0.7615942378574516, -0.761594161020389};
const double kRk4Lam0N8 = 0.7615954909470551;
const double kRk4XnN8 = 0.6480528280208948;
const double kRk4Slope = 4.0266204976211535;

// frozen first-order defect of the one-sided pairing (same tableau on both
// halves), quadratic steering, 10 steps of 0.1
const double kOneSidedKkt = 0.010000000000000009;

// frozen endpoint-cost run: dx = -x + cos u, pay x(1), 16 steps
const double kCosineXn = 0.7863555217289243;
const double kCosineLam0 = 0.3560741304517928;

// frozen free-start tracking run, gauss2 pairing, 64 steps
const double kTrackX0 = 0.14908187166818349;
const double kTrackX0Exact = 0.14908187176067844;  // 1 - 1/sinh 1

// frozen action extremals
const double kHarmonicX5 = 0.7405028115184857;
const double kHarmonicLam0 = -0.2865591482426004;
const double kPendulumX4 = 0.6211324786919751;
const double kPendulumLam0 = 0.7430366903472616;

ControlSystem no_control_predator_prey() {
  const OdeSystem lv = lotka_volterra();
  ControlSystem sys;
  sys.dim_x = 2;
  sys.dim_u = 0;
  sys.f = [lv](const Vec& x, const Vec&, double t) { return lv.f(x, t); };
  sys.jac_x = [lv](const Vec& x, const Vec&, double t) { return lv.jac(x, t); };
  return sys;
}

CostSpec zero_running_cost_like(const CostSpec& base) {
  CostSpec cost = base;
  cost.D = [](const Vec&, const Vec&, double) { return 0.0; };
  cost.grad_x_D = [](const Vec& x, const Vec&, double) {
    return Vec(Vec::Zero(x.size()));
  };
  cost.grad_u_D = [](const Vec&, const Vec& u, double) {
    return Vec(Vec::Zero(u.size()));
  };
  return cost;
}

double node_gap(const ControlSolution& a, const ControlSolution& b) {
  double gap = 0.0;
  for (size_t n = 0; n < a.x.size(); ++n) {
    gap = std::max(gap, (a.x[n] - b.x[n]).cwiseAbs().maxCoeff());
    gap = std::max(gap, (a.lam[n] - b.lam[n]).cwiseAbs().maxCoeff());
    if (a.u[n].size())
      gap = std::max(gap, (a.u[n] - b.u[n]).cwiseAbs().maxCoeff());
  }
  return gap;
}

}  // namespace

TEST_CASE("assembly shapes, offsets, and input validation") {
  const PrkTableau pair = adjoint_partner(builtin_rk("euler"));
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 4);
  const auto dos = assemble_discrete_system(cosine_steering(),
                                            terminal_state_cost(), pair, grid,
                                            BoundaryMode::FixedInitial,
                                            vec1(0.4));
  // 2(N+1) node values, s(2 + 1) per step, N+1 node controls
  CHECK(dos.n_unknowns() == 27);
  CHECK(dos.off_x(0) == 0);
  CHECK(dos.off_lam(0) == 5);
  CHECK(dos.off_stage_x(0, 0) == 10);
  CHECK(dos.off_stage_lam(0, 0) == 11);
  CHECK(dos.off_stage_u(0, 0) == 12);
  CHECK(dos.off_u(0) == 22);

  const Vec v = Vec::LinSpaced(dos.n_unknowns(), -1.0, 1.0);
  CHECK((pack_solution(dos, unpack_solution(dos, v)).array() == v.array()).all());

  CHECK_THROWS_AS(assemble_discrete_system(cosine_steering(),
                                           terminal_state_cost(), pair, grid,
                                           BoundaryMode::FixedInitial,
                                           vec2(0.4, 1.0)),
                  GridMismatch);
  CHECK_THROWS_AS(assemble_discrete_system(cosine_steering(),
                                           terminal_state_cost(), pair,
                                           TimeGrid(),
                                           BoundaryMode::FixedInitial,
                                           vec1(0.4)),
                  GridMismatch);
  // pinning both endpoints needs a running cost and a control channel
  CHECK_THROWS_AS(assemble_discrete_system(cosine_steering(),
                                           terminal_state_cost(), pair, grid,
                                           BoundaryMode::FixedBoth, vec1(0.4),
                                           vec1(0.8)),
                  UnsupportedMode);
  CHECK_THROWS_AS(assemble_discrete_system(no_control_predator_prey(),
                                           lq_cost(), pair, grid,
                                           BoundaryMode::FixedBoth,
                                           vec2(15, 10), vec2(14, 9)),
                  UnsupportedMode);
  ControlSystem broken = cosine_steering();
  broken.jac_x = nullptr;
  CHECK_THROWS_AS(assemble_discrete_system(broken, terminal_state_cost(), pair,
                                           grid, BoundaryMode::FixedInitial,
                                           vec1(0.4)),
                  MissingJacobian);
}

TEST_CASE("absent running cost matches a zero running cost bit for bit") {
  const PrkTableau pair = adjoint_partner(builtin_rk("gauss2"));
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 3);
  const CostSpec bare = terminal_state_cost();
  const auto dos_bare = assemble_discrete_system(
      cosine_steering(), bare, pair, grid, BoundaryMode::FixedInitial, vec1(0.4));
  const auto dos_zero = assemble_discrete_system(
      cosine_steering(), zero_running_cost_like(bare), pair, grid,
      BoundaryMode::FixedInitial, vec1(0.4));
  const Vec v = Vec::LinSpaced(dos_bare.n_unknowns(), -0.8, 1.2);
  CHECK((dos_bare.residual(v).array() == dos_zero.residual(v).array()).all());
  CHECK((dos_bare.jacobian(v).array() == dos_zero.jacobian(v).array()).all());
}

TEST_CASE("affine dynamics with quadratic cost solve in one iteration") {
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 8);
  const auto dos = assemble_discrete_system(
      lq_dynamics(), lq_cost(), adjoint_partner(builtin_rk("gauss2")), grid,
      BoundaryMode::FixedInitial, vec1(1.0));
  const auto sol = solve_indirect(dos);
  CHECK(sol.diag.newton_iterations == 1);
  CHECK(sol.diag.residual <= 1e-12);

  const auto direct = solve_direct(lq_dynamics(), lq_cost(),
                                   builtin_rk("gauss2"), grid,
                                   BoundaryMode::FixedInitial, vec1(1.0));
  CHECK(direct.diag.newton_iterations == 1);
  CHECK(direct.diag.residual <= 1e-12);
}

TEST_CASE("quadratic steering matches the analytic solution") {
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 64);
  const auto dos = assemble_discrete_system(
      lq_dynamics(), lq_cost(), adjoint_partner(builtin_rk("gauss2")), grid,
      BoundaryMode::FixedInitial, vec1(1.0));
  const auto sol = solve_indirect(dos);
  CHECK(sol.diag.residual <= 1e-12);
  CHECK(sol.u[0][0] == doctest::Approx(kLqU0).epsilon(1e-11));
  CHECK(sol.lam[0][0] == doctest::Approx(kLqLam0).epsilon(1e-11));
  CHECK(sol.x[64][0] == doctest::Approx(kLqXn).epsilon(1e-11));
  CHECK(std::abs(sol.u[0][0] - lq_exact_control(0.0)) <= 1e-4);
  CHECK(std::abs(sol.lam[0][0] - lq_exact_costate(0.0)) <= 1e-4);
  CHECK(std::abs(sol.x[64][0] - lq_exact_state(1.0)) <= 1e-4);
  REQUIRE(sol.diag.kkt.has_value());
  CHECK(*sol.diag.kkt <= 1e-10);
  CHECK(sol.diag.stationarity <= 1e-10);
  // H = lam u + (x^2 + u^2)/2 stays near its continuous constant
  double h_spread = 0.0;
  for (double hv : sol.diag.hamiltonian)
    h_spread = std::max(h_spread, std::abs(hv - sol.diag.hamiltonian.front()));
  CHECK(h_spread <= 1e-2);
}

TEST_CASE("program solve and coupled solve agree across the catalog") {
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 8);
  for (const char* name : {"euler", "implicit-euler", "midpoint", "gauss2",
                           "radau-ia1", "rk4"}) {
    CAPTURE(name);
    const RkTableau tab = builtin_rk(name);
    const auto dos = assemble_discrete_system(
        lq_dynamics(), lq_cost(), adjoint_partner(tab), grid,
        BoundaryMode::FixedInitial, vec1(1.0));
    const auto coupled = solve_indirect(dos);
    const auto program = solve_direct(lq_dynamics(), lq_cost(), tab, grid,
                                      BoundaryMode::FixedInitial, vec1(1.0));
    CHECK(node_gap(coupled, program) <= 1e-9);
    if (std::string(name) == "gauss2") {
      double lam_gap = 0.0;
      for (int n = 0; n <= 8; ++n)
        lam_gap = std::max(lam_gap,
                           (coupled.lam[n] - program.lam[n]).cwiseAbs().maxCoeff());
      CHECK(lam_gap <= 1e-10);
    }
  }
}

TEST_CASE("first-order conditions hold for exact pairings") {
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 8);
  for (const char* name : {"euler", "midpoint", "gauss2", "rk4"}) {
    CAPTURE(name);
    const RkTableau tab = builtin_rk(name);
    const PrkTableau pair = adjoint_partner(tab);

    const auto lq = solve_indirect(assemble_discrete_system(
        lq_dynamics(), lq_cost(), pair, grid, BoundaryMode::FixedInitial,
        vec1(1.0)));
    CHECK(kkt_residual(lq, lq_dynamics(), lq_cost(), tab, grid) <= 1e-10);

    const auto cosine = solve_indirect(assemble_discrete_system(
        cosine_steering(), terminal_state_cost(), pair, grid,
        BoundaryMode::FixedInitial, vec1(0.4)));
    CHECK(kkt_residual(cosine, cosine_steering(), terminal_state_cost(), tab,
                       grid) <= 1e-10);
  }
}

TEST_CASE("pairing a tableau with itself breaks the first-order conditions") {
  const RkTableau eu = builtin_rk("euler");
  const PrkTableau one_sided{"euler-twice", eu, eu};
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 10);
  const auto dos = assemble_discrete_system(lq_dynamics(), lq_cost(), one_sided,
                                            grid, BoundaryMode::FixedInitial,
                                            vec1(1.0));
  const auto sol = solve_indirect(dos);
  CHECK(sol.diag.residual <= 1e-12);
  const double kkt = kkt_residual(sol, lq_dynamics(), lq_cost(), eu, grid);
  // the defect concentrates in the slope-stationarity rows and scales as
  // h^2 x_n, largest at the left end: 0.1^2 * 1
  CHECK(kkt == doctest::Approx(kOneSidedKkt).epsilon(1e-6));
  CHECK(kkt > 1e-3);
}

TEST_CASE("variation products stay constant along solutions") {
  SUBCASE("running cost correction, two-stage pairing") {
    const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 64);
    const auto sol = solve_indirect(assemble_discrete_system(
        lq_dynamics(), lq_cost(), adjoint_partner(builtin_rk("gauss2")), grid,
        BoundaryMode::FixedInitial, vec1(1.0)));
    const auto rep = lambda_delta_audit(sol, lq_dynamics(), lq_cost(), vec1(0.3));
    REQUIRE(rep.products.size() == 65);
    CHECK(std::abs(rep.delta[0][0] - 0.3) <= 1e-13);
    CHECK(std::abs(rep.products[0] - sol.lam[0][0] * 0.3) <= 1e-14);
    CHECK(rep.max_spread <= 1e-12);
  }
  SUBCASE("running cost correction, one-stage pairing") {
    const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 10);
    const auto sol = solve_indirect(assemble_discrete_system(
        lq_dynamics(), lq_cost(), adjoint_partner(builtin_rk("euler")), grid,
        BoundaryMode::FixedInitial, vec1(1.0)));
    const auto rep = lambda_delta_audit(sol, lq_dynamics(), lq_cost(), vec1(1.0));
    CHECK(std::abs(rep.products[0] - sol.lam[0][0]) <= 1e-14);
    CHECK(rep.max_spread <= 1e-12);
  }
  SUBCASE("endpoint cost only, products are plain pairings") {
    const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 16);
    const auto sol = solve_indirect(assemble_discrete_system(
        cosine_steering(), terminal_state_cost(),
        adjoint_partner(builtin_rk("euler")), grid, BoundaryMode::FixedInitial,
        vec1(0.4)));
    CHECK(sol.diag.newton_iterations == 0);  // the march guess already solves it
    CHECK(sol.x[16][0] == doctest::Approx(kCosineXn).epsilon(1e-12));
    CHECK(sol.lam[0][0] == doctest::Approx(kCosineLam0).epsilon(1e-12));
    const auto rep = lambda_delta_audit(sol, cosine_steering(),
                                        terminal_state_cost(), vec1(1.0));
    CHECK(std::abs(rep.products[0] - sol.lam[0][0]) <= 1e-14);
    CHECK(rep.max_spread <= 1e-12);
  }
  SUBCASE("zero seed gives zero products") {
    const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 8);
    const auto sol = solve_indirect(assemble_discrete_system(
        lq_dynamics(), lq_cost(), adjoint_partner(builtin_rk("midpoint")), grid,
        BoundaryMode::FixedInitial, vec1(1.0)));
    const auto rep = lambda_delta_audit(sol, lq_dynamics(), lq_cost(), vec1(0.0));
    for (double w : rep.products) CHECK(w == 0.0);
    CHECK(rep.max_spread == 0.0);
  }
  SUBCASE("free-start solutions have no pinned state to vary") {
    const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 8);
    const auto sol = solve_indirect(assemble_discrete_system(
        lq_dynamics(), tracking_cost(), adjoint_partner(builtin_rk("gauss2")),
        grid, BoundaryMode::FreeInitial, Vec()));
    CHECK_THROWS_AS(lambda_delta_audit(sol, lq_dynamics(), tracking_cost(),
                                       vec1(1.0)),
                    UnsupportedMode);
  }
}

TEST_CASE("vanishing horizon pins the control to the endpoint gradient") {
  const TimeGrid grid = TimeGrid::uniform(0.0, 1e-6, 1);
  const auto sol = solve_indirect(assemble_discrete_system(
      cosine_steering(), terminal_state_cost(),
      adjoint_partner(builtin_rk("euler")), grid, BoundaryMode::FixedInitial,
      vec1(0.4)));
  CHECK(sol.diag.residual <= 1e-12);
  // grad_u H = -sin(u) lam vanishes at u = 0 whatever lam is
  CHECK(std::abs(sol.u[0][0]) <= 1e-12);
  CHECK(sol.diag.stationarity <= 1e-12);
  CHECK(std::abs(sol.lam[0][0] - 1.0) <= 1e-4);
}

TEST_CASE("no control channel reduces to the adjoint run") {
  const ControlSystem sys = no_control_predator_prey();
  CostSpec cost;
  cost.grad_C = [](const Vec& x) {
    Vec g = Vec::Zero(x.size());
    g(0) = 1.0;
    return g;
  };
  const RkTableau tab = builtin_rk("gauss2");
  const PrkTableau pair = adjoint_partner(tab);
  const TimeGrid grid = TimeGrid::uniform(0.0, 0.5, 5);

  const auto sol = solve_indirect(assemble_discrete_system(
      sys, cost, pair, grid, BoundaryMode::FixedInitial, lotka_start()));
  CHECK(sol.diag.residual <= 1e-12);

  const Trajectory base = rk_integrate(lotka_volterra(), tab, lotka_start(), grid);
  const Vec lam0 = gradient_of_terminal_cost(base, lotka_volterra(), pair.upper,
                                             cost.grad_C);
  CHECK((sol.lam[0] - lam0).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((sol.x[5] - base.nodes[5]).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("zero curvature in the control is rejected") {
  // endpoint cost with dynamics affine in u: every control Hessian block
  // is identically singular
  CostSpec cost;
  cost.grad_C = [](const Vec& x) { return x; };
  cost.hess_C = [](const Vec& x) {
    return Mat(Mat::Identity(x.size(), x.size()));
  };
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 4);
  const auto dos = assemble_discrete_system(
      lq_dynamics(), cost, adjoint_partner(builtin_rk("gauss2")), grid,
      BoundaryMode::FixedInitial, vec1(1.0));
  CHECK_THROWS_AS(solve_indirect(dos), SingularHuu);
  CHECK_THROWS_AS(solve_direct(lq_dynamics(), cost, builtin_rk("gauss2"), grid,
                               BoundaryMode::FixedInitial, vec1(1.0)),
                  SingularHuu);
  try {
    solve_indirect(dos);
  } catch (const SingularHuu& e) {
    CHECK(e.step == 0);
    CHECK(e.stage >= 0);
  }
}

TEST_CASE("iteration cap raises a divergence error") {
  ControlSolveOptions opts;
  opts.max_iter = 1;
  CHECK_THROWS_AS(mechanics_demo(pendulum_action(), builtin_rk("gauss2"),
                                 TimeGrid::uniform(0.0, 1.0, 8), vec1(0.3),
                                 vec1(0.8), opts),
                  NewtonDiverged);
}

TEST_CASE("harmonic action extremal conserves the quadratic invariant") {
  const auto sol = mechanics_demo(harmonic_action(), builtin_rk("midpoint"),
                                  TimeGrid::uniform(0.0, 1.0, 10), vec1(1.0),
                                  vec1(0.3));
  CHECK(sol.diag.residual <= 1e-12);
  CHECK(sol.x[5][0] == doctest::Approx(kHarmonicX5).epsilon(1e-11));
  CHECK(sol.lam[0][0] == doctest::Approx(kHarmonicLam0).epsilon(1e-11));
  CHECK(std::abs(sol.u[0][0] - sol.lam[0][0]) <= 1e-12);
  CHECK(sol.diag.momentum_gap <= 1e-12);
  const double i0 = sol.x[0][0] * sol.x[0][0] + sol.lam[0][0] * sol.lam[0][0];
  double spread = 0.0;
  for (int n = 0; n <= 10; ++n) {
    const double in = sol.x[n][0] * sol.x[n][0] + sol.lam[n][0] * sol.lam[n][0];
    spread = std::max(spread, std::abs(in - i0));
  }
  CHECK(spread <= 1e-12);
  CHECK(sol.x[10][0] == doctest::Approx(0.3).epsilon(1e-13));
}

TEST_CASE("pendulum action extremal") {
  const auto sol = mechanics_demo(pendulum_action(), builtin_rk("gauss2"),
                                  TimeGrid::uniform(0.0, 1.0, 8), vec1(0.3),
                                  vec1(0.8));
  CHECK(sol.diag.residual <= 1e-12);
  CHECK(sol.x[4][0] == doctest::Approx(kPendulumX4).epsilon(1e-11));
  CHECK(sol.lam[0][0] == doctest::Approx(kPendulumLam0).epsilon(1e-11));
  CHECK(std::abs(sol.u[0][0] - sol.lam[0][0]) <= 1e-12);
  CHECK(sol.diag.momentum_gap <= 1e-10);
  REQUIRE(sol.diag.kkt.has_value());
  CHECK(*sol.diag.kkt <= 1e-10);
}

TEST_CASE("free particle extremals are straight lines for any tableau") {
  for (const char* name : {"euler", "gauss2", "rk4"}) {
    CAPTURE(name);
    const auto sol = mechanics_demo(free_particle_action(), builtin_rk(name),
                                    TimeGrid::uniform(0.0, 1.0, 5), vec1(-0.4),
                                    vec1(1.1));
    double line_gap = 0.0, lam_spread = 0.0;
    for (int n = 0; n <= 5; ++n) {
      const double t = sol.grid.nodes[n];
      line_gap = std::max(line_gap, std::abs(sol.x[n][0] - (-0.4 + 1.5 * t)));
      lam_spread = std::max(lam_spread, std::abs(sol.lam[n][0] - sol.lam[0][0]));
    }
    CHECK(line_gap <= 1e-13);
    CHECK(lam_spread <= 1e-12);
    CHECK(std::abs(sol.u[0][0] - 1.5) <= 1e-12);
  }
}

TEST_CASE("control accuracy keeps the full step order") {
  const RkTableau tab = builtin_rk("rk4");
  const PrkTableau pair = adjoint_partner(tab);
  std::vector<double> hs, errs;
  const int ns[] = {4, 8, 16, 32};
  for (int idx = 0; idx < 4; ++idx) {
    const int n = ns[idx];
    const auto sol = solve_indirect(assemble_discrete_system(
        lq_dynamics(), lq_cost(), pair, TimeGrid::uniform(0.0, 1.0, n),
        BoundaryMode::FixedInitial, vec1(1.0)));
    CHECK(sol.u[0][0] == doctest::Approx(kRk4U0[idx]).epsilon(1e-11));
    if (n == 8) {
      CHECK(sol.lam[0][0] == doctest::Approx(kRk4Lam0N8).epsilon(1e-11));
      CHECK(sol.x[8][0] == doctest::Approx(kRk4XnN8).epsilon(1e-11));
    }
    hs.push_back(1.0 / n);
    errs.push_back(std::abs(sol.u[0][0] - lq_exact_control(0.0)));
  }
  const auto fit = fit_loglog(hs, errs);
  REQUIRE(fit.has_value());
  MESSAGE("left-endpoint control error slope: " << fit->slope);
  REQUIRE(fit->slope >= 1.0);
  CHECK(fit->slope == doctest::Approx(kRk4Slope).epsilon(1e-3));
}

TEST_CASE("free starting state is chosen by the costate") {
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 64);
  const auto dos = assemble_discrete_system(
      lq_dynamics(), tracking_cost(), adjoint_partner(builtin_rk("gauss2")),
      grid, BoundaryMode::FreeInitial, Vec());
  const auto sol = solve_indirect(dos);
  CHECK(sol.diag.residual <= 1e-12);
  CHECK(sol.x[0][0] == doctest::Approx(kTrackX0).epsilon(1e-11));
  CHECK(std::abs(sol.x[0][0] - kTrackX0Exact) <= 1e-9);
  CHECK(std::abs(sol.lam[0][0]) <= 1e-12);
  CHECK(std::abs(sol.u[64][0] + 1.0) <= 1e-10);
  REQUIRE(sol.diag.kkt.has_value());
  CHECK(*sol.diag.kkt <= 1e-10);

  const auto program = solve_direct(lq_dynamics(), tracking_cost(),
                                    builtin_rk("gauss2"), grid,
                                    BoundaryMode::FreeInitial, Vec());
  CHECK(node_gap(sol, program) <= 1e-9);
}

TEST_CASE("zero weights leave the program multipliers unscalable") {
  const RkTableau runge = builtin_rk("runge1895");
  CHECK_THROWS_AS(solve_direct(lq_dynamics(), lq_cost(), runge,
                               TimeGrid::uniform(0.0, 1.0, 4),
                               BoundaryMode::FixedInitial, vec1(1.0)),
                  ZeroWeight);
  CHECK_THROWS_AS(mechanics_demo(harmonic_action(), runge,
                                 TimeGrid::uniform(0.0, 1.0, 4), vec1(1.0),
                                 vec1(0.3)),
                  ZeroWeight);
}

TEST_CASE("first derivatives agree with differences of f") {
  CHECK(check_control_jacobians(cosine_steering(), vec1(0.7), vec1(0.3), 0.2) <=
        1e-6);
  CHECK(check_control_jacobians(lq_dynamics(), vec1(0.7), vec1(0.3), 0.2) <=
        1e-9);
}

TEST_CASE("assembled linearization matches differences of the residual") {
  const PrkTableau pair = adjoint_partner(builtin_rk("gauss2"));
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 3);
  const auto dos = assemble_discrete_system(
      cosine_steering(), tracking_cost(), pair, grid,
      BoundaryMode::FixedInitial, vec1(0.4));
  const Vec v = Vec::LinSpaced(dos.n_unknowns(), -0.5, 0.9);
  const Mat J = dos.jacobian(v);
  Mat J_fd(dos.n_unknowns(), dos.n_unknowns());
  for (int k = 0; k < dos.n_unknowns(); ++k) {
    const double step = 1e-7 * (1.0 + std::abs(v(k)));
    Vec hi = v, lo = v;
    hi(k) += step;
    lo(k) -= step;
    J_fd.col(k) = (dos.residual(hi) - dos.residual(lo)) / (2.0 * step);
  }
  CHECK((J - J_fd).cwiseAbs().maxCoeff() <= 1e-6);
}
