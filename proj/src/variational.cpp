#include "sprk/variational.hpp"

#include <cmath>

namespace sprk {

namespace {

void require_base(const Trajectory& base, const OdeSystem& sys) {
  if (!sys.has_jacobian())
    throw MissingJacobian("sensitivity propagation needs a state Jacobian");
  const std::size_t N = base.grid.steps.size();
  if (base.nodes.size() != N + 1 || base.stages.size() != N)
    throw GridMismatch("base trajectory storage does not match its grid");
}

// Jacobians at every stage of step n, evaluated where the stages were
std::vector<Mat> stage_jacobians(const Trajectory& base, const OdeSystem& sys,
                                 int n) {
  const RkTableau& tab = base.tableau;
  const double t = base.grid.nodes[n], h = base.grid.steps[n];
  std::vector<Mat> J(tab.s);
  for (int i = 0; i < tab.s; ++i)
    J[i] = sys.jac(base.stages[n].col(i), t + tab.c(i) * h);
  return J;
}

}  // namespace

VariationalTrajectory forward_variational(const Trajectory& base,
                                          const OdeSystem& sys, const Vec& eta) {
  require_base(base, sys);
  if (eta.size() != sys.dim)
    throw GridMismatch("perturbation dimension does not match the system");
  const RkTableau& tab = base.tableau;
  const int s = tab.s, d = sys.dim;
  const int N = base.grid.n_steps();

  VariationalTrajectory out;
  out.grid = base.grid;
  out.nodes.reserve(N + 1);
  out.nodes.push_back(eta);
  out.stages.reserve(N);
  out.slopes.reserve(N);

  for (int n = 0; n < N; ++n) {
    const double h = base.grid.steps[n];
    std::vector<Mat> J = stage_jacobians(base, sys, n);

    // Delta_i - h sum_j a_ij J_j Delta_j = delta_n
    Mat M = Mat::Identity(s * d, s * d);
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        M.block(i * d, j * d, d, d) -= h * tab.a(i, j) * J[j];
    Vec rhs = out.nodes.back().replicate(s, 1);
    Eigen::FullPivLU<Mat> lu(M);
    if (!lu.isInvertible())
      throw StageSolveFailed("variational stage system is singular", 0.0);
    Vec sol = lu.solve(rhs);

    Mat Delta(d, s), slope(d, s);
    Vec next = out.nodes.back();
    for (int i = 0; i < s; ++i) {
      Delta.col(i) = sol.segment(i * d, d);
      slope.col(i) = J[i] * Delta.col(i);
      next += h * tab.b(i) * slope.col(i);
    }
    if (!next.allFinite()) throw NonFiniteValue("variational state is not finite");
    out.stages.push_back(std::move(Delta));
    out.slopes.push_back(std::move(slope));
    out.nodes.push_back(std::move(next));
  }
  return out;
}

AdjointTrajectory adjoint_backward(const Trajectory& base, const OdeSystem& sys,
                                   const RkTableau& upper, const Vec& omega) {
  require_base(base, sys);
  if (omega.size() != sys.dim)
    throw GridMismatch("probe dimension does not match the system");
  if (upper.s != base.tableau.s)
    throw GridMismatch("upper tableau stage count differs from the base run");
  const int s = upper.s, d = sys.dim;
  const int N = base.grid.n_steps();

  AdjointTrajectory out;
  out.grid = base.grid;
  out.upper = upper;
  out.nodes.assign(N + 1, Vec());
  out.stages.assign(N, Mat());
  out.slopes.assign(N, Mat());
  out.nodes[N] = omega;

  for (int n = N - 1; n >= 0; --n) {
    const double h = base.grid.steps[n];
    std::vector<Mat> J = stage_jacobians(base, sys, n);

    // reflected stage relations, affine in lambda_{n+1}:
    //   Lambda_i - h sum_j (B_j - A_ij) J_j^T Lambda_j = lambda_{n+1}
    Mat M = Mat::Identity(s * d, s * d);
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < s; ++j)
        M.block(i * d, j * d, d, d) -=
            h * (upper.b(j) - upper.a(i, j)) * J[j].transpose();
    Vec rhs = out.nodes[n + 1].replicate(s, 1);
    Eigen::FullPivLU<Mat> lu(M);
    if (!lu.isInvertible())
      throw StageSolveFailed("multiplier stage system is singular", 0.0);
    Vec sol = lu.solve(rhs);

    Mat Lambda(d, s), slope(d, s);
    Vec prev = out.nodes[n + 1];
    for (int i = 0; i < s; ++i) {
      Lambda.col(i) = sol.segment(i * d, d);
      slope.col(i) = -J[i].transpose() * Lambda.col(i);
      prev -= h * upper.b(i) * slope.col(i);
    }
    if (!prev.allFinite()) throw NonFiniteValue("multiplier state is not finite");
    out.stages[n] = std::move(Lambda);
    out.slopes[n] = std::move(slope);
    out.nodes[n] = std::move(prev);
  }
  return out;
}

double adjoint_forward_form_residual(const AdjointTrajectory& adj) {
  const RkTableau& up = adj.upper;
  double worst = 0.0;
  for (int n = 0; n < adj.grid.n_steps(); ++n) {
    const double h = adj.grid.steps[n];
    Vec node = adj.nodes[n];
    for (int i = 0; i < up.s; ++i) node += h * up.b(i) * adj.slopes[n].col(i);
    worst = std::max(worst, (node - adj.nodes[n + 1]).lpNorm<Eigen::Infinity>());
    for (int i = 0; i < up.s; ++i) {
      Vec stage = adj.nodes[n];
      for (int j = 0; j < up.s; ++j)
        stage += h * up.a(i, j) * adj.slopes[n].col(j);
      worst = std::max(worst,
                       (stage - adj.stages[n].col(i)).lpNorm<Eigen::Infinity>());
    }
  }
  return worst;
}

SensitivityResult sensitivity_pair(const SensitivityProblem& prob,
                                   const RkTableau& tab, const RkTableau& upper) {
  SensitivityResult res;
  res.base = rk_integrate(prob.system, tab, prob.alpha, prob.grid);
  res.variational = forward_variational(res.base, prob.system, prob.eta);
  res.adjoint = adjoint_backward(res.base, prob.system, upper, prob.omega);
  res.forward_value = prob.omega.dot(res.variational.nodes.back());
  res.reverse_value = res.adjoint.nodes.front().dot(prob.eta);
  res.gap = res.reverse_value - res.forward_value;
  return res;
}

Vec gradient_of_terminal_cost(const Trajectory& base, const OdeSystem& sys,
                              const RkTableau& upper,
                              const std::function<Vec(const Vec&)>& grad_c) {
  Vec omega = grad_c(base.nodes.back());
  return adjoint_backward(base, sys, upper, omega).nodes.front();
}

std::vector<double> pairing_history(const AdjointTrajectory& adj,
                                    const VariationalTrajectory& var) {
  if (!adj.grid.same_as(var.grid))
    throw GridMismatch("pairing history needs matching grids");
  std::vector<double> out;
  out.reserve(adj.nodes.size());
  for (std::size_t n = 0; n < adj.nodes.size(); ++n)
    out.push_back(adj.nodes[n].dot(var.nodes[n]));
  return out;
}

}  // namespace sprk
