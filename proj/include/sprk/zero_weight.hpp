#pragma once

#include <optional>
#include <vector>

#include "sprk/convergence.hpp"
#include "sprk/ode.hpp"

namespace sprk {

/// Split-form system dq/dt = f(q, t), dp/dt = L(q, t) + M(q, t) p.
/// f never reads p and the p equation stays affine in p; the weightless-stage
/// integrator below relies on both, so the form is declared by construction
/// rather than detected.
struct SpecialPartitionedSystem {
  int dim_q = 0, dim_p = 0;
  std::function<Vec(const Vec&, double)> f;
  std::function<Vec(const Vec&, double)> L;
  std::function<Mat(const Vec&, double)> M;      // dim_p x dim_p
  std::function<Mat(const Vec&, double)> f_jac;  // optional, for implicit q stages

  OdeSystem q_system() const;                // the q block alone
  PartitionedSystem as_partitioned() const;  // general form, for pair runs
};

/// A tableau whose stages are ordered so the nonzero weights lead:
/// base.b(i) != 0 for i < r and base.b(i) == 0 from r on. perm[i] names the
/// source stage that became stage i.
struct ZeroWeightScheme {
  RkTableau base;
  int r = 0;
  std::vector<int> perm;
};

// reorders interleaved weights into the shape above; throws ZeroWeight when
// every weight vanishes
ZeroWeightScheme make_scheme(const RkTableau& tab);

struct FancyStep {
  Vec p;               // step endpoint
  std::vector<Vec> P;  // stage values for the weighted stages, r entries
  std::vector<Vec> m;  // auxiliaries for the weightless stages, s - r entries
};

// One p step. q_stages holds the already-computed q stage values, one column
// per stage in scheme order; they decouple from p because f never reads it.
// The combined linear system for (P_i, m_alpha) is dense-solved per step;
// SingularMSystem when it degenerates.
FancyStep fancy_p_step(const SpecialPartitionedSystem& sys,
                       const ZeroWeightScheme& scheme, const Mat& q_stages,
                       const Vec& p, double t, double h);

// The auxiliary block alone, given the weighted-stage slopes ell_j:
//   m_alpha + h sum_beta a(beta, alpha) M_beta m_beta
//     = - sum_{j<r} b_j a(j, alpha) ell_j
// M_zero holds M at the weightless stage points, scheme order r..s-1.
std::vector<Vec> solve_zero_stage_m(const ZeroWeightScheme& scheme,
                                    const std::vector<Mat>& M_zero,
                                    const std::vector<Vec>& ell, double h);

struct FancyTrajectory {
  TimeGrid grid;
  ZeroWeightScheme scheme;
  std::vector<Vec> nodes_q, nodes_p;
  std::vector<Mat> stages_q;  // per step, dim_q x s
  std::vector<Mat> stages_p;  // per step, dim_p x r
  std::vector<Mat> aux_m;     // per step, dim_p x (s - r)
};

// q by rk_integrate with scheme.base, then p by fancy_p_step on its stages
FancyTrajectory fancy_integrate(const SpecialPartitionedSystem& sys,
                                const ZeroWeightScheme& scheme, const Vec& q0,
                                const Vec& p0, const TimeGrid& grid,
                                const StepControls& ctl = {});

// Replaces each zero weight by eps and pairs the result with its adjoint
// partner. The pair is symplectic for every nonzero eps; eps == 0 is refused.
PrkTableau epsilon_regularized_pair(const ZeroWeightScheme& scheme, double eps);

struct LimitRow {
  double eps;
  double gap;  // largest node deviation, both blocks, whole run
};
struct LimitReport {
  std::vector<LimitRow> rows;
  std::optional<SlopeFit> fit;  // absent with fewer than two usable rows
};

// Runs the regularized pair at each eps on the same grid and measures the
// gap to fancy_integrate. The gap shrinks like O(eps).
LimitReport limit_validation(const SpecialPartitionedSystem& sys,
                             const ZeroWeightScheme& scheme, const Vec& q0,
                             const Vec& p0, const TimeGrid& grid,
                             const std::vector<double>& eps_sequence);

}  // namespace sprk
