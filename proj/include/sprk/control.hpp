#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sprk/ode.hpp"
#include "sprk/tableau.hpp"

namespace sprk {

/// Controlled dynamics dx/dt = f(x, u, t) with user-supplied first
/// derivatives. Curvature is recovered by central differences on the
/// Jacobians unless huu_f is given.
struct ControlSystem {
  int dim_x = 0, dim_u = 0;
  std::function<Vec(const Vec&, const Vec&, double)> f;
  std::function<Mat(const Vec&, const Vec&, double)> jac_x;
  std::function<Mat(const Vec&, const Vec&, double)> jac_u;  // unused when dim_u == 0
  // optional d^2(w^T f)/du^2 at (x, u, t); arguments (x, u, t, w)
  std::function<Mat(const Vec&, const Vec&, double, const Vec&)> huu_f;
};

// max deviation of jac_x / jac_u from finite differences of f
double check_control_jacobians(const ControlSystem& sys, const Vec& x,
                               const Vec& u, double t);

/// Terminal cost gradient plus optional running cost with gradients.
/// An absent grad_C means the terminal cost is identically zero.
struct CostSpec {
  std::function<Vec(const Vec&)> grad_C;
  std::function<double(const Vec&, const Vec&, double)> D;
  std::function<Vec(const Vec&, const Vec&, double)> grad_x_D, grad_u_D;

  // optional second derivatives; absent ones fall back to central
  // differences of the gradients (hess_xu_D is d(grad_x_D)/du)
  std::function<Mat(const Vec&)> hess_C;
  std::function<Mat(const Vec&, const Vec&, double)> hess_xx_D, hess_xu_D,
      hess_uu_D;

  bool has_running() const { return static_cast<bool>(D); }
};

enum class BoundaryMode { FixedInitial, FreeInitial, FixedBoth };

struct ControlSolveOptions {
  double tol = 1e-12;       // max-norm residual target
  double accept_tol = 1e-10;  // stalled iterates below this still count
  int max_iter = 50;
  double fd_step = 1e-5;    // curvature contractions in the Newton matrix
  double huu_cond_limit = 1e12;
};

/// Square residual map for the coupled state/costate/control equations on a
/// grid. Packed unknown order: x_0..x_N | lam_0..lam_N | per step
/// [X_i | Lam_i | U_i] | u_0..u_N. Residual rows follow the same step order,
/// then the node stationarity rows, then the two boundary blocks.
struct DiscreteOptimalitySystem {
  ControlSystem sys;
  CostSpec cost;
  PrkTableau ptab;
  TimeGrid grid;
  BoundaryMode mode = BoundaryMode::FixedInitial;
  Vec alpha, beta;  // beta only read under FixedBoth

  int n_unknowns() const;
  int off_x(int n) const;
  int off_lam(int n) const;
  int off_stage_x(int n, int i) const;
  int off_stage_lam(int n, int i) const;
  int off_stage_u(int n, int i) const;
  int off_u(int n) const;

  Vec residual(const Vec& v) const;
  // analytic first-derivative blocks; curvature contractions by central
  // differences with the given step; throws SingularHuu on an
  // ill-conditioned control Hessian block (stage index -1 marks a node row)
  Mat jacobian(const Vec& v, double fd_step = 1e-5,
               double huu_cond_limit = 1e12) const;
};

struct ControlDiagnostics {
  double residual = 0.0;  // max-norm over the accepted iterate
  int newton_iterations = 0;
  std::optional<double> kkt;  // first-order conditions of the discrete program
  double stationarity = 0.0;  // max |grad_u H| over stages and nodes
  std::vector<double> hamiltonian;  // lam^T f (+ D) at the nodes
  double momentum_gap = 0.0;  // mechanics runs: max |Lam - grad_u L|
};

struct ControlSolution {
  TimeGrid grid;
  PrkTableau ptab;
  BoundaryMode mode = BoundaryMode::FixedInitial;
  Vec alpha, beta;
  std::vector<Vec> x, lam, u;     // N + 1 entries each
  std::vector<Mat> stages_x, stages_lam;  // per step, dim_x by s
  std::vector<Mat> stages_u;              // per step, dim_u by s
  ControlDiagnostics diag;
};

DiscreteOptimalitySystem assemble_discrete_system(
    const ControlSystem& sys, const CostSpec& cost, const PrkTableau& ptab,
    const TimeGrid& grid, BoundaryMode mode, const Vec& alpha,
    const Vec& beta = Vec());

// pack a solution into the unknown layout / read one back out
Vec pack_solution(const DiscreteOptimalitySystem& dos, const ControlSolution& sol);
ControlSolution unpack_solution(const DiscreteOptimalitySystem& dos, const Vec& v);

ControlSolution solve_indirect(
    const DiscreteOptimalitySystem& dos,
    const std::optional<ControlSolution>& initial_guess = std::nullopt,
    const ControlSolveOptions& opts = {});

// forms the optimality system of minimizing the discretized cost subject to
// the step constraints and solves it; stage multipliers divided by h_n b_i
// reappear as the costate stages, so every weight must be nonzero
ControlSolution solve_direct(
    const ControlSystem& sys, const CostSpec& cost, const RkTableau& tab,
    const TimeGrid& grid, BoundaryMode mode, const Vec& alpha,
    const Vec& beta = Vec(),
    const std::optional<ControlSolution>& initial_guess = std::nullopt,
    const ControlSolveOptions& opts = {});

// max-norm of the first-order conditions of the discretized minimization,
// evaluated at sol with multipliers lam_n and h_n b_i Lam_ni
double kkt_residual(const ControlSolution& sol, const ControlSystem& sys,
                    const CostSpec& cost, const RkTableau& tab,
                    const TimeGrid& grid);

struct AuditReport {
  // lam_n^T delta_n plus the accumulated running-cost correction; constant
  // for solutions of a symplectic pairing
  std::vector<double> products;
  double max_spread = 0.0;
  std::vector<Vec> delta;  // node variations seeded by eta_hat
};

// linearizes the discrete equations around sol for an initial-state
// perturbation eta_hat and tracks the per-node products
AuditReport lambda_delta_audit(const ControlSolution& sol,
                               const ControlSystem& sys, const CostSpec& cost,
                               const Vec& eta_hat,
                               const ControlSolveOptions& opts = {});

/// L(x, u, t) with gradients; x and u share one dimension.
struct Lagrangian {
  int dim = 0;
  std::function<double(const Vec&, const Vec&, double)> value;
  std::function<Vec(const Vec&, const Vec&, double)> grad_x, grad_u;
};

// stationary points of the discrete action quadrature between fixed
// endpoints; the costate stages come out equal to grad_u L (momenta)
ControlSolution mechanics_demo(const Lagrangian& lag, const RkTableau& tab,
                               const TimeGrid& grid, const Vec& x_start,
                               const Vec& x_end,
                               const ControlSolveOptions& opts = {});

}  // namespace sprk
