#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sprk/tableau.hpp"

namespace sprk {

/// Autonomous or time-dependent first-order system dx/dt = f(x, t).
struct OdeSystem {
  int dim = 0;
  std::function<Vec(const Vec&, double)> f;
  std::function<Mat(const Vec&, double)> jac;  // d f / d x, optional

  bool has_jacobian() const { return static_cast<bool>(jac); }
};

/// Partitioned system dq/dt = f(q, p, t), dp/dt = g(q, p, t).
/// Jacobian blocks are optional; stage solves fall back to fixed-point
/// iteration without them.
struct PartitionedSystem {
  int dim_q = 0, dim_p = 0;
  std::function<Vec(const Vec&, const Vec&, double)> f, g;
  std::function<Mat(const Vec&, const Vec&, double)> fq, fp, gq, gp;

  bool has_jacobians() const { return fq && fp && gq && gp; }
};

/// Node times t_0 < t_1 < ... < t_N defined by positive step sizes.
struct TimeGrid {
  double t0 = 0.0;
  std::vector<double> steps;
  std::vector<double> nodes;  // steps.size() + 1 entries

  TimeGrid() : nodes{0.0} {}
  TimeGrid(double start, std::vector<double> hs);
  static TimeGrid uniform(double start, double end, int n_steps);

  int n_steps() const { return static_cast<int>(steps.size()); }
  bool same_as(const TimeGrid& other, double tol = 0.0) const;
};

struct StepControls {
  double stage_tol = 1e-12;  // guaranteed stage-equation residual (max norm)
  int max_newton = 50;
  int max_sweeps = 200;  // damped fixed-point fallback without Jacobians
};

struct Trajectory {
  TimeGrid grid;
  RkTableau tableau;       // the scheme that produced this run
  std::vector<Vec> nodes;  // N + 1
  std::vector<Mat> stages; // per step, dim x s
  std::vector<Mat> slopes; // per step, dim x s
};

struct StepResult {
  Vec x;
  Mat stages, slopes;
  int iterations = 0;
  double residual = 0.0;
};

StepResult rk_step(const OdeSystem& sys, const RkTableau& tab, const Vec& x,
                   double t, double h, const StepControls& ctl = {});
Trajectory rk_integrate(const OdeSystem& sys, const RkTableau& tab,
                        const Vec& x0, const TimeGrid& grid,
                        const StepControls& ctl = {});

struct PrkStepResult {
  Vec q, p;
  Mat stages_q, stages_p, slopes_q, slopes_p;
  int iterations = 0;
  double residual = 0.0;
};

struct PrkTrajectory {
  TimeGrid grid;
  PrkTableau tableau;
  std::vector<Vec> nodes_q, nodes_p;
  std::vector<Mat> stages_q, stages_p, slopes_q, slopes_p;

  Trajectory q_view() const;  // carries tableau.lower
  Trajectory p_view() const;  // carries tableau.upper
};

PrkStepResult prk_step(const PartitionedSystem& sys, const PrkTableau& ptab,
                       const Vec& q, const Vec& p, double t, double h,
                       const StepControls& ctl = {});
PrkTrajectory prk_integrate(const PartitionedSystem& sys, const PrkTableau& ptab,
                            const Vec& q0, const Vec& p0, const TimeGrid& grid,
                            const StepControls& ctl = {});

/// Bilinear form backed by a matrix: value(y, z) = y^T m z.
struct QuadraticForm {
  Mat m;
  double operator()(const Vec& y, const Vec& z) const { return y.dot(m * z); }
};

struct DriftReport {
  std::vector<double> per_step;  // invariant change minus quadrature source
  double max_abs = 0.0;
};

// per_step[n] = I(y_{n+1}, y_{n+1}) - I(y_n, y_n) - h_n sum_i b_i phi(Y_ni, t_ni)
DriftReport quadratic_drift(const Trajectory& traj, const QuadraticForm& I,
                            const std::function<double(const Vec&, double)>& phi = {});
// per_step[n] = S(q_{n+1}, p_{n+1}) - S(q_n, p_n) - h_n sum_i b_i phi(Q_ni, P_ni, t_ni)
// source weights and abscissae come from the lower tableau
DriftReport quadratic_drift(const PrkTrajectory& traj, const QuadraticForm& S,
                            const std::function<double(const Vec&, const Vec&, double)>& phi = {});

// central differences, step 1e-6 * (1 + |x_j|) per column
Mat fd_jacobian(const std::function<Vec(const Vec&, double)>& f, const Vec& x,
                double t);
// max abs deviation between sys.jac and finite differences
double check_jacobian(const OdeSystem& sys, const Vec& x, double t);

}  // namespace sprk
