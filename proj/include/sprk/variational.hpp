#pragma once

#include "sprk/ode.hpp"

namespace sprk {

/// Inputs for one forward/backward sensitivity computation: base point alpha,
/// perturbation direction eta pushed forward, probe direction omega pulled
/// back.
struct SensitivityProblem {
  OdeSystem system;
  Vec alpha, eta, omega;
  TimeGrid grid;
};

/// Linearization of a recorded run: delta_n nodes with their stage values
/// Delta_{n,i} and slopes d_{n,i} = J(X_{n,i}) Delta_{n,i}.
struct VariationalTrajectory {
  TimeGrid grid;
  std::vector<Vec> nodes;
  std::vector<Mat> stages, slopes;
};

/// Multiplier run lambda_N .. lambda_0 with stage values Lambda_{n,i} and
/// slopes l_{n,i} = -J(X_{n,i})^T Lambda_{n,i}. nodes[n] is lambda_n, so the
/// vector reads forward in time even though it is filled backward.
struct AdjointTrajectory {
  TimeGrid grid;
  RkTableau upper;
  std::vector<Vec> nodes;
  std::vector<Mat> stages, slopes;
};

// Pushes eta through the linearized step equations around the stored stages.
// The linear stage systems are solved directly, no iteration.
VariationalTrajectory forward_variational(const Trajectory& base,
                                          const OdeSystem& sys, const Vec& eta);

// Pulls omega back with weights/couplings from `upper`. Runs in the reflected
// form: every stage value is an affine function of lambda_{n+1}, so each step
// is one dense linear solve using only the stored forward stages.
AdjointTrajectory adjoint_backward(const Trajectory& base, const OdeSystem& sys,
                                   const RkTableau& upper, const Vec& omega);

// Max-norm residual of the forward-form relations
//   lambda_{n+1} = lambda_n + h sum B_i l_i,  Lambda_i = lambda_n + h sum A_ij l_j
// on an adjoint run that was produced in reflected form. Near zero when both
// forms describe the same fixed point.
double adjoint_forward_form_residual(const AdjointTrajectory& adj);

struct SensitivityResult {
  double forward_value = 0.0;  // omega . delta_N
  double reverse_value = 0.0;  // lambda_0 . eta
  double gap = 0.0;
  Trajectory base;
  VariationalTrajectory variational;
  AdjointTrajectory adjoint;
};

// Shares one base integration between both propagations.
SensitivityResult sensitivity_pair(const SensitivityProblem& prob,
                                   const RkTableau& tab, const RkTableau& upper);

// lambda_0 for the terminal cost C: pulls grad_c(x_N) back through the run.
// Equals the exact gradient of the discrete map alpha -> C(x_N) whenever
// (base.tableau, upper) satisfy the pairing conditions.
Vec gradient_of_terminal_cost(const Trajectory& base, const OdeSystem& sys,
                              const RkTableau& upper,
                              const std::function<Vec(const Vec&)>& grad_c);

// lambda_n . delta_n at every node; constant for symplectic pairings
std::vector<double> pairing_history(const AdjointTrajectory& adj,
                                    const VariationalTrajectory& var);

}  // namespace sprk
