#include "sprk/zero_weight.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "sprk/errors.hpp"

namespace sprk {

namespace {

void require_special(const SpecialPartitionedSystem& sys) {
  if (sys.dim_q <= 0 || sys.dim_p <= 0)
    throw Error("split-form system: dimensions must be positive");
  if (!sys.f || !sys.L || !sys.M)
    throw Error("split-form system: f, L and M must all be set");
}

}  // namespace

OdeSystem SpecialPartitionedSystem::q_system() const {
  require_special(*this);
  OdeSystem sys;
  sys.dim = dim_q;
  sys.f = f;
  sys.jac = f_jac;  // may stay empty, stage solves then sweep instead
  return sys;
}

PartitionedSystem SpecialPartitionedSystem::as_partitioned() const {
  require_special(*this);
  PartitionedSystem sys;
  sys.dim_q = dim_q;
  sys.dim_p = dim_p;
  const int dq = dim_q, dp = dim_p;
  auto f_ = f;
  auto L_ = L;
  auto M_ = M;
  sys.f = [f_](const Vec& q, const Vec&, double t) { return f_(q, t); };
  sys.g = [L_, M_](const Vec& q, const Vec& p, double t) {
    return Vec(L_(q, t) + M_(q, t) * p);
  };
  if (f_jac) {
    auto j_ = f_jac;
    sys.fq = [j_](const Vec& q, const Vec&, double t) { return j_(q, t); };
  } else {
    sys.fq = [f_](const Vec& q, const Vec&, double t) {
      return fd_jacobian(f_, q, t);
    };
  }
  sys.fp = [dq, dp](const Vec&, const Vec&, double) {
    return Mat(Mat::Zero(dq, dp));
  };
  // the q derivative of L + M p is not part of the declared form
  sys.gq = [L_, M_](const Vec& q, const Vec& p, double t) {
    auto g_of_q = [&L_, &M_, &p](const Vec& x, double tt) {
      return Vec(L_(x, tt) + M_(x, tt) * p);
    };
    return fd_jacobian(g_of_q, q, t);
  };
  sys.gp = [M_](const Vec& q, const Vec&, double t) { return M_(q, t); };
  return sys;
}

ZeroWeightScheme make_scheme(const RkTableau& tab) {
  const int s = tab.s;
  std::vector<int> perm;
  perm.reserve(s);
  for (int i = 0; i < s; ++i)
    if (tab.b(i) != 0.0) perm.push_back(i);
  const int r = static_cast<int>(perm.size());
  if (r == 0) throw ZeroWeight(0);
  for (int i = 0; i < s; ++i)
    if (tab.b(i) == 0.0) perm.push_back(i);

  Mat a(s, s);
  Vec b(s), c(s);
  for (int i = 0; i < s; ++i) {
    b(i) = tab.b(perm[i]);
    c(i) = tab.c(perm[i]);
    for (int j = 0; j < s; ++j) a(i, j) = tab.a(perm[i], perm[j]);
  }

  ZeroWeightScheme scheme;
  scheme.base = RkTableau(tab.name, std::move(a), std::move(b), std::move(c));
  scheme.r = r;
  scheme.perm = std::move(perm);
  return scheme;
}

FancyStep fancy_p_step(const SpecialPartitionedSystem& sys,
                       const ZeroWeightScheme& scheme, const Mat& q_stages,
                       const Vec& p, double t, double h) {
  require_special(sys);
  const RkTableau& tab = scheme.base;
  const int s = tab.s, r = scheme.r, d = sys.dim_p;
  if (r < 1 || r > s)
    throw Error("zero-weight scheme: weighted stage count out of range");
  if (q_stages.rows() != sys.dim_q || q_stages.cols() != s)
    throw GridMismatch("q stage block does not match the scheme");
  if (p.size() != d) throw GridMismatch("p does not match the system dimension");

  std::vector<Vec> Ls(s);
  std::vector<Mat> Ms(s);
  for (int i = 0; i < s; ++i) {
    const Vec qi = q_stages.col(i);
    const double ti = t + tab.c(i) * h;
    Ls[i] = sys.L(qi, ti);
    Ms[i] = sys.M(qi, ti);
    if (Ls[i].size() != d || Ms[i].rows() != d || Ms[i].cols() != d)
      throw GridMismatch("L or M block does not match the p dimension");
  }

  // Unknowns z = (P_0..P_{r-1}, m_r..m_{s-1}), one length-d block each.
  // Weighted rows carry the partner weights b_j - b_j a(j,i)/b_i and the
  // second-order couplings 1 - a(beta,i)/b_i; auxiliary rows read column
  // alpha of the coefficient matrix. Affine p dependence keeps it all linear.
  Mat A = Mat::Zero(s * d, s * d);
  Vec rhs = Vec::Zero(s * d);
  const Mat id = Mat::Identity(d, d);
  for (int i = 0; i < r; ++i) {
    A.block(i * d, i * d, d, d) = id;
    rhs.segment(i * d, d) = p;
    for (int j = 0; j < r; ++j) {
      const double w = tab.b(j) - tab.b(j) * tab.a(j, i) / tab.b(i);
      A.block(i * d, j * d, d, d) -= h * w * Ms[j];
      rhs.segment(i * d, d) += h * w * Ls[j];
    }
    for (int be = r; be < s; ++be) {
      const double w = 1.0 - tab.a(be, i) / tab.b(i);
      A.block(i * d, be * d, d, d) -= h * h * w * Ms[be];
    }
  }
  for (int al = r; al < s; ++al) {
    A.block(al * d, al * d, d, d) = id;
    for (int j = 0; j < r; ++j) {
      const double w = tab.b(j) * tab.a(j, al);
      A.block(al * d, j * d, d, d) += w * Ms[j];
      rhs.segment(al * d, d) -= w * Ls[j];
    }
    for (int be = r; be < s; ++be)
      A.block(al * d, be * d, d, d) += h * tab.a(be, al) * Ms[be];
  }

  Eigen::FullPivLU<Mat> lu(A);
  if (!lu.isInvertible())
    throw SingularMSystem("stage and auxiliary system is singular");
  const Vec z = lu.solve(rhs);

  FancyStep out;
  out.P.resize(r);
  out.m.resize(s - r);
  for (int i = 0; i < r; ++i) out.P[i] = z.segment(i * d, d);
  for (int al = r; al < s; ++al) out.m[al - r] = z.segment(al * d, d);

  Vec pn = p;
  for (int i = 0; i < r; ++i)
    pn += h * tab.b(i) * (Ls[i] + Ms[i] * out.P[i]);
  for (int al = r; al < s; ++al) pn += h * h * (Ms[al] * out.m[al - r]);
  if (!pn.allFinite()) throw NonFiniteValue("p step is not finite");
  out.p = std::move(pn);
  return out;
}

std::vector<Vec> solve_zero_stage_m(const ZeroWeightScheme& scheme,
                                    const std::vector<Mat>& M_zero,
                                    const std::vector<Vec>& ell, double h) {
  const RkTableau& tab = scheme.base;
  const int s = tab.s, r = scheme.r;
  const int z = s - r;
  if (static_cast<int>(M_zero.size()) != z ||
      static_cast<int>(ell.size()) != r)
    throw GridMismatch("auxiliary solve: block counts do not match the scheme");
  if (z == 0) return {};
  const int d = static_cast<int>(M_zero[0].rows());
  for (const Mat& m : M_zero)
    if (m.rows() != d || m.cols() != d)
      throw GridMismatch("auxiliary solve: M blocks disagree in size");
  for (const Vec& l : ell)
    if (l.size() != d)
      throw GridMismatch("auxiliary solve: slope blocks disagree in size");

  Mat A = Mat::Zero(z * d, z * d);
  Vec rhs = Vec::Zero(z * d);
  for (int al = 0; al < z; ++al) {
    A.block(al * d, al * d, d, d) = Mat::Identity(d, d);
    for (int be = 0; be < z; ++be)
      A.block(al * d, be * d, d, d) += h * tab.a(r + be, r + al) * M_zero[be];
    for (int j = 0; j < r; ++j)
      rhs.segment(al * d, d) -= tab.b(j) * tab.a(j, r + al) * ell[j];
  }
  Eigen::FullPivLU<Mat> lu(A);
  if (!lu.isInvertible()) throw SingularMSystem("auxiliary system is singular");
  const Vec m = lu.solve(rhs);
  std::vector<Vec> out(z);
  for (int al = 0; al < z; ++al) out[al] = m.segment(al * d, d);
  return out;
}

FancyTrajectory fancy_integrate(const SpecialPartitionedSystem& sys,
                                const ZeroWeightScheme& scheme, const Vec& q0,
                                const Vec& p0, const TimeGrid& grid,
                                const StepControls& ctl) {
  require_special(sys);
  if (q0.size() != sys.dim_q || p0.size() != sys.dim_p)
    throw GridMismatch("start values do not match the system dimensions");

  Trajectory qtraj = rk_integrate(sys.q_system(), scheme.base, q0, grid, ctl);

  const int r = scheme.r, s = scheme.base.s, d = sys.dim_p;
  FancyTrajectory out;
  out.grid = grid;
  out.scheme = scheme;
  out.nodes_q = std::move(qtraj.nodes);
  out.stages_q = std::move(qtraj.stages);
  out.nodes_p.resize(grid.n_steps() + 1);
  out.stages_p.reserve(grid.n_steps());
  out.aux_m.reserve(grid.n_steps());
  out.nodes_p[0] = p0;

  Vec p = p0;
  for (int n = 0; n < grid.n_steps(); ++n) {
    FancyStep step = fancy_p_step(sys, scheme, out.stages_q[n], p,
                                  grid.nodes[n], grid.steps[n]);
    Mat Pm(d, r), mm(d, s - r);
    for (int i = 0; i < r; ++i) Pm.col(i) = step.P[i];
    for (int al = 0; al < s - r; ++al) mm.col(al) = step.m[al];
    out.stages_p.push_back(std::move(Pm));
    out.aux_m.push_back(std::move(mm));
    p = std::move(step.p);
    out.nodes_p[n + 1] = p;
  }
  return out;
}

PrkTableau epsilon_regularized_pair(const ZeroWeightScheme& scheme, double eps) {
  if (eps == 0.0) throw Error("regularization needs a nonzero epsilon");
  RkTableau lower = scheme.base;
  for (int i = scheme.r; i < lower.s; ++i) lower.b(i) = eps;
  PrkTableau pair = adjoint_partner(lower);
  pair.name = scheme.base.name + "-regularized";
  return pair;
}

LimitReport limit_validation(const SpecialPartitionedSystem& sys,
                             const ZeroWeightScheme& scheme, const Vec& q0,
                             const Vec& p0, const TimeGrid& grid,
                             const std::vector<double>& eps_sequence) {
  FancyTrajectory lim = fancy_integrate(sys, scheme, q0, p0, grid);
  PartitionedSystem part = sys.as_partitioned();

  LimitReport report;
  report.rows.reserve(eps_sequence.size());
  std::vector<double> eps_abs, gaps;
  for (double eps : eps_sequence) {
    PrkTableau pair = epsilon_regularized_pair(scheme, eps);
    PrkTrajectory run = prk_integrate(part, pair, q0, p0, grid);
    double gap = 0.0;
    for (int n = 0; n <= grid.n_steps(); ++n) {
      gap = std::max(gap,
                     (run.nodes_q[n] - lim.nodes_q[n]).cwiseAbs().maxCoeff());
      gap = std::max(gap,
                     (run.nodes_p[n] - lim.nodes_p[n]).cwiseAbs().maxCoeff());
    }
    report.rows.push_back({eps, gap});
    if (gap > 0.0) {
      eps_abs.push_back(std::abs(eps));
      gaps.push_back(gap);
    }
  }
  if (eps_abs.size() >= 2) report.fit = fit_loglog(eps_abs, gaps);
  return report;
}

}  // namespace sprk
