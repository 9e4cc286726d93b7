#include "sprk/control.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <utility>

#include "sprk/errors.hpp"

namespace sprk {

namespace {

double linf(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// central difference of g along each coordinate of `base`
Mat diff_cols(int rows, const Vec& base, double fd,
              const std::function<Vec(const Vec&)>& g) {
  Mat out = Mat::Zero(rows, base.size());
  for (int k = 0; k < static_cast<int>(base.size()); ++k) {
    const double step = fd * (1.0 + std::abs(base(k)));
    Vec hi = base, lo = base;
    hi(k) += step;
    lo(k) -= step;
    out.col(k) = (g(hi) - g(lo)) / (2.0 * step);
  }
  return out;
}

void check_huu(const Mat& block, double cond_limit, int step, int stage) {
  if (block.size() == 0) return;
  Eigen::JacobiSVD<Mat> svd(block);
  const Vec& sv = svd.singularValues();
  const double smax = sv(0), smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || smax > cond_limit * smin) throw SingularHuu(step, stage);
}

void validate_problem(const ControlSystem& sys, const CostSpec& cost,
                      BoundaryMode mode, const Vec& alpha, const Vec& beta) {
  if (sys.dim_x <= 0) throw Error("control system needs dim_x >= 1");
  if (sys.dim_u < 0) throw Error("control system: dim_u must be >= 0");
  if (!sys.f) throw Error("control system: f is required");
  if (!sys.jac_x) throw MissingJacobian("control system: jac_x is required");
  if (sys.dim_u > 0 && !sys.jac_u)
    throw MissingJacobian("control system: jac_u is required");
  if (cost.has_running()) {
    if (!cost.grad_x_D)
      throw MissingJacobian("running cost: grad_x_D is required");
    if (sys.dim_u > 0 && !cost.grad_u_D)
      throw MissingJacobian("running cost: grad_u_D is required");
  }
  if (mode != BoundaryMode::FreeInitial && alpha.size() != sys.dim_x)
    throw GridMismatch("initial state size does not match dim_x");
  if (mode == BoundaryMode::FreeInitial && alpha.size() != 0 &&
      alpha.size() != sys.dim_x)
    throw GridMismatch("initial state seed size does not match dim_x");
  if (mode == BoundaryMode::FixedBoth) {
    if (beta.size() != sys.dim_x)
      throw GridMismatch("terminal state size does not match dim_x");
    if (!cost.has_running())
      throw UnsupportedMode("fixed endpoints need a running cost to select the path");
    if (sys.dim_u == 0)
      throw UnsupportedMode("fixed endpoints need controls to steer");
  }
}

void validate_grid(const TimeGrid& grid) {
  if (grid.n_steps() < 1) throw GridMismatch("grid needs at least one step");
}

// curvature blocks shared by both solvers; FD falls back when no hook is given
struct Curvature {
  const ControlSystem& sys;
  const CostSpec& cost;
  double fd;

  // d/dx and d/du of jac_x(x,u,t)^T w
  Mat wxx(const Vec& x, const Vec& u, double t, const Vec& w) const {
    return diff_cols(sys.dim_x, x, fd, [&](const Vec& x2) -> Vec {
      return sys.jac_x(x2, u, t).transpose() * w;
    });
  }
  Mat wxu(const Vec& x, const Vec& u, double t, const Vec& w) const {
    return diff_cols(sys.dim_x, u, fd, [&](const Vec& u2) -> Vec {
      return sys.jac_x(x, u2, t).transpose() * w;
    });
  }
  // d/dx and d/du of jac_u(x,u,t)^T w
  Mat vux(const Vec& x, const Vec& u, double t, const Vec& w) const {
    return diff_cols(sys.dim_u, x, fd, [&](const Vec& x2) -> Vec {
      return sys.jac_u(x2, u, t).transpose() * w;
    });
  }
  Mat vuu(const Vec& x, const Vec& u, double t, const Vec& w) const {
    if (sys.huu_f) return sys.huu_f(x, u, t, w);
    return diff_cols(sys.dim_u, u, fd, [&](const Vec& u2) -> Vec {
      return sys.jac_u(x, u2, t).transpose() * w;
    });
  }
  Mat dxx(const Vec& x, const Vec& u, double t) const {
    if (!cost.has_running()) return Mat::Zero(sys.dim_x, sys.dim_x);
    if (cost.hess_xx_D) return cost.hess_xx_D(x, u, t);
    return diff_cols(sys.dim_x, x, fd,
                     [&](const Vec& x2) { return cost.grad_x_D(x2, u, t); });
  }
  Mat dxu(const Vec& x, const Vec& u, double t) const {
    if (!cost.has_running()) return Mat::Zero(sys.dim_x, sys.dim_u);
    if (cost.hess_xu_D) return cost.hess_xu_D(x, u, t);
    return diff_cols(sys.dim_x, u, fd,
                     [&](const Vec& u2) { return cost.grad_x_D(x, u2, t); });
  }
  Mat dux(const Vec& x, const Vec& u, double t) const {
    if (!cost.has_running()) return Mat::Zero(sys.dim_u, sys.dim_x);
    if (cost.hess_xu_D) return cost.hess_xu_D(x, u, t).transpose();
    return diff_cols(sys.dim_u, x, fd,
                     [&](const Vec& x2) { return cost.grad_u_D(x2, u, t); });
  }
  Mat duu(const Vec& x, const Vec& u, double t) const {
    if (!cost.has_running()) return Mat::Zero(sys.dim_u, sys.dim_u);
    if (cost.hess_uu_D) return cost.hess_uu_D(x, u, t);
    return diff_cols(sys.dim_u, u, fd,
                     [&](const Vec& u2) { return cost.grad_u_D(x, u2, t); });
  }
  Mat hess_terminal(const Vec& x) const {
    if (!cost.grad_C) return Mat::Zero(sys.dim_x, sys.dim_x);
    if (cost.hess_C) return cost.hess_C(x);
    return diff_cols(sys.dim_x, x, fd,
                     [&](const Vec& x2) { return cost.grad_C(x2); });
  }
};

struct NewtonOutcome {
  Vec v;
  Vec r;
  double residual_norm = 0.0;
  int iterations = 0;
};

template <class RFn, class JFn>
NewtonOutcome newton_solve(const RFn& residual, const JFn& jacobian, Vec v,
                           const ControlSolveOptions& opts,
                           const std::string& label) {
  Vec r = residual(v);
  if (!r.allFinite())
    throw NonFiniteValue(label + ": residual is not finite at the guess");
  double rn = linf(r);
  int it = 0;
  while (rn > opts.tol) {
    if (it >= opts.max_iter) {
      if (rn <= opts.accept_tol) break;
      throw NewtonDiverged(label + ": iteration limit reached", rn);
    }
    Mat J = jacobian(v);
    Vec dv = J.partialPivLu().solve(-r);
    if (!dv.allFinite()) {
      if (rn <= opts.accept_tol) break;
      throw NewtonDiverged(label + ": singular linearization", rn);
    }
    bool moved = false;
    for (double step = 1.0; step > 1e-8; step *= 0.5) {
      Vec vt = v + step * dv;
      Vec rt = residual(vt);
      const double rtn = linf(rt);
      // comparison is false on NaN, so wild trial points shrink the step
      if (rt.allFinite() && rtn <= (1.0 - 1e-4 * step) * rn) {
        v = std::move(vt);
        r = std::move(rt);
        rn = rtn;
        moved = true;
        break;
      }
    }
    if (!moved) {
      if (rn <= opts.accept_tol) break;
      throw NewtonDiverged(label + ": line search stalled", rn);
    }
    ++it;
  }
  return {std::move(v), std::move(r), rn, it};
}

}  // namespace

// ---------------------------------------------------------------------------
// coupled state/costate system

int DiscreteOptimalitySystem::n_unknowns() const {
  const int d = sys.dim_x, nu = sys.dim_u, s = ptab.lower.s, N = grid.n_steps();
  return 2 * (N + 1) * d + N * s * (2 * d + nu) + (N + 1) * nu;
}

int DiscreteOptimalitySystem::off_x(int n) const { return n * sys.dim_x; }

int DiscreteOptimalitySystem::off_lam(int n) const {
  return (grid.n_steps() + 1 + n) * sys.dim_x;
}

int DiscreteOptimalitySystem::off_stage_x(int n, int i) const {
  const int d = sys.dim_x, nu = sys.dim_u, s = ptab.lower.s, N = grid.n_steps();
  return 2 * (N + 1) * d + n * s * (2 * d + nu) + i * d;
}

int DiscreteOptimalitySystem::off_stage_lam(int n, int i) const {
  return off_stage_x(n, 0) + (ptab.lower.s + i) * sys.dim_x;
}

int DiscreteOptimalitySystem::off_stage_u(int n, int i) const {
  return off_stage_x(n, 0) + 2 * ptab.lower.s * sys.dim_x + i * sys.dim_u;
}

int DiscreteOptimalitySystem::off_u(int n) const {
  const int d = sys.dim_x, nu = sys.dim_u, s = ptab.lower.s, N = grid.n_steps();
  return 2 * (N + 1) * d + N * s * (2 * d + nu) + n * nu;
}

namespace {

// residual row offsets; rows follow the packing order step by step
struct RowMap {
  int d, nu, s, N;
  int blk;  // rows per step

  explicit RowMap(const DiscreteOptimalitySystem& dos)
      : d(dos.sys.dim_x), nu(dos.sys.dim_u), s(dos.ptab.lower.s),
        N(dos.grid.n_steps()), blk(2 * d + 2 * s * d + s * nu) {}

  int state_step(int n) const { return n * blk; }
  int state_stage(int n, int i) const { return n * blk + (1 + i) * d; }
  int costate_step(int n) const { return n * blk + (1 + s) * d; }
  int costate_stage(int n, int i) const { return n * blk + (2 + s + i) * d; }
  int stage_stat(int n, int i) const { return n * blk + 2 * d + 2 * s * d + i * nu; }
  int node_stat(int n) const { return N * blk + n * nu; }
  int boundary_x() const { return N * blk + (N + 1) * nu; }
  int boundary_lam() const { return boundary_x() + d; }
};

}  // namespace

Vec DiscreteOptimalitySystem::residual(const Vec& v) const {
  const int d = sys.dim_x, nu = sys.dim_u, s = ptab.lower.s, N = grid.n_steps();
  const int nt = n_unknowns();
  if (static_cast<int>(v.size()) != nt)
    throw GridMismatch("unknown vector has the wrong size");
  const RkTableau& lo = ptab.lower;
  const RkTableau& up = ptab.upper;
  const bool run = cost.has_running();
  const RowMap rm(*this);
  Vec r = Vec::Zero(nt);

  for (int n = 0; n < N; ++n) {
    const double h = grid.steps[n], tn = grid.nodes[n];
    const Vec xn = v.segment(off_x(n), d), xn1 = v.segment(off_x(n + 1), d);
    const Vec ln = v.segment(off_lam(n), d), ln1 = v.segment(off_lam(n + 1), d);
    std::vector<Vec> X(s), L(s), U(s), k(s), ell(s);
    for (int i = 0; i < s; ++i) {
      X[i] = v.segment(off_stage_x(n, i), d);
      L[i] = v.segment(off_stage_lam(n, i), d);
      U[i] = v.segment(off_stage_u(n, i), nu);
      k[i] = sys.f(X[i], U[i], tn + lo.c(i) * h);
    }
    for (int i = 0; i < s; ++i) {
      const double ti = tn + up.c(i) * h;
      ell[i] = -(sys.jac_x(X[i], U[i], ti).transpose() * L[i]);
      if (run) ell[i] -= cost.grad_x_D(X[i], U[i], ti);
    }

    Vec acc = xn1 - xn;
    for (int i = 0; i < s; ++i) acc -= h * lo.b(i) * k[i];
    r.segment(rm.state_step(n), d) = acc;
    for (int i = 0; i < s; ++i) {
      Vec ri = X[i] - xn;
      for (int j = 0; j < s; ++j) ri -= h * lo.a(i, j) * k[j];
      r.segment(rm.state_stage(n, i), d) = ri;
    }
    acc = ln1 - ln;
    for (int i = 0; i < s; ++i) acc -= h * up.b(i) * ell[i];
    r.segment(rm.costate_step(n), d) = acc;
    for (int i = 0; i < s; ++i) {
      Vec ri = L[i] - ln;
      for (int j = 0; j < s; ++j) ri -= h * up.a(i, j) * ell[j];
      r.segment(rm.costate_stage(n, i), d) = ri;
    }
    for (int i = 0; i < s && nu > 0; ++i) {
      const double ti = tn + up.c(i) * h;
      Vec ri = sys.jac_u(X[i], U[i], ti).transpose() * L[i];
      if (run) ri += cost.grad_u_D(X[i], U[i], ti);
      r.segment(rm.stage_stat(n, i), nu) = ri;
    }
  }

  for (int n = 0; n <= N && nu > 0; ++n) {
    const double tn = grid.nodes[n];
    const Vec xn = v.segment(off_x(n), d), un = v.segment(off_u(n), nu);
    const Vec ln = v.segment(off_lam(n), d);
    Vec ri = sys.jac_u(xn, un, tn).transpose() * ln;
    if (run) ri += cost.grad_u_D(xn, un, tn);
    r.segment(rm.node_stat(n), nu) = ri;
  }

  if (mode == BoundaryMode::FreeInitial)
    r.segment(rm.boundary_x(), d) = v.segment(off_lam(0), d);
  else
    r.segment(rm.boundary_x(), d) = v.segment(off_x(0), d) - alpha;
  if (mode == BoundaryMode::FixedBoth) {
    r.segment(rm.boundary_lam(), d) = v.segment(off_x(N), d) - beta;
  } else {
    Vec ri = v.segment(off_lam(N), d);
    if (cost.grad_C) ri -= cost.grad_C(v.segment(off_x(N), d));
    r.segment(rm.boundary_lam(), d) = ri;
  }
  return r;
}

Mat DiscreteOptimalitySystem::jacobian(const Vec& v, double fd_step,
                                       double huu_cond_limit) const {
  const int d = sys.dim_x, nu = sys.dim_u, s = ptab.lower.s, N = grid.n_steps();
  const int nt = n_unknowns();
  if (static_cast<int>(v.size()) != nt)
    throw GridMismatch("unknown vector has the wrong size");
  const RkTableau& lo = ptab.lower;
  const RkTableau& up = ptab.upper;
  const RowMap rm(*this);
  const Curvature cv{sys, cost, fd_step};
  const Mat id = Mat::Identity(d, d);
  Mat J = Mat::Zero(nt, nt);

  for (int n = 0; n < N; ++n) {
    const double h = grid.steps[n], tn = grid.nodes[n];
    std::vector<Vec> X(s), L(s), U(s);
    for (int i = 0; i < s; ++i) {
      X[i] = v.segment(off_stage_x(n, i), d);
      L[i] = v.segment(off_stage_lam(n, i), d);
      U[i] = v.segment(off_stage_u(n, i), nu);
    }
    // slope derivatives at the state abscissae, curvature at the costate ones
    std::vector<Mat> jxc(s), juc(s), jxC(s), juC(s), mxx(s), mxu(s);
    for (int i = 0; i < s; ++i) {
      const double tc = tn + lo.c(i) * h, tC = tn + up.c(i) * h;
      jxc[i] = sys.jac_x(X[i], U[i], tc);
      jxC[i] = sys.jac_x(X[i], U[i], tC);
      if (nu > 0) {
        juc[i] = sys.jac_u(X[i], U[i], tc);
        juC[i] = sys.jac_u(X[i], U[i], tC);
      }
      mxx[i] = cv.wxx(X[i], U[i], tC, L[i]) + cv.dxx(X[i], U[i], tC);
      if (nu > 0) mxu[i] = cv.wxu(X[i], U[i], tC, L[i]) + cv.dxu(X[i], U[i], tC);
    }

    const int r1 = rm.state_step(n);
    J.block(r1, off_x(n + 1), d, d) += id;
    J.block(r1, off_x(n), d, d) -= id;
    for (int i = 0; i < s; ++i) {
      J.block(r1, off_stage_x(n, i), d, d) -= h * lo.b(i) * jxc[i];
      if (nu > 0) J.block(r1, off_stage_u(n, i), d, nu) -= h * lo.b(i) * juc[i];
    }
    for (int i = 0; i < s; ++i) {
      const int r2 = rm.state_stage(n, i);
      J.block(r2, off_stage_x(n, i), d, d) += id;
      J.block(r2, off_x(n), d, d) -= id;
      for (int j = 0; j < s; ++j) {
        J.block(r2, off_stage_x(n, j), d, d) -= h * lo.a(i, j) * jxc[j];
        if (nu > 0)
          J.block(r2, off_stage_u(n, j), d, nu) -= h * lo.a(i, j) * juc[j];
      }
    }
    const int r3 = rm.costate_step(n);
    J.block(r3, off_lam(n + 1), d, d) += id;
    J.block(r3, off_lam(n), d, d) -= id;
    for (int i = 0; i < s; ++i) {
      J.block(r3, off_stage_lam(n, i), d, d) += h * up.b(i) * jxC[i].transpose();
      J.block(r3, off_stage_x(n, i), d, d) += h * up.b(i) * mxx[i];
      if (nu > 0) J.block(r3, off_stage_u(n, i), d, nu) += h * up.b(i) * mxu[i];
    }
    for (int i = 0; i < s; ++i) {
      const int r4 = rm.costate_stage(n, i);
      J.block(r4, off_stage_lam(n, i), d, d) += id;
      J.block(r4, off_lam(n), d, d) -= id;
      for (int j = 0; j < s; ++j) {
        J.block(r4, off_stage_lam(n, j), d, d) += h * up.a(i, j) * jxC[j].transpose();
        J.block(r4, off_stage_x(n, j), d, d) += h * up.a(i, j) * mxx[j];
        if (nu > 0)
          J.block(r4, off_stage_u(n, j), d, nu) += h * up.a(i, j) * mxu[j];
      }
    }
    for (int i = 0; i < s && nu > 0; ++i) {
      const int r5 = rm.stage_stat(n, i);
      const double tC = tn + up.c(i) * h;
      J.block(r5, off_stage_lam(n, i), nu, d) += juC[i].transpose();
      J.block(r5, off_stage_x(n, i), nu, d) +=
          cv.vux(X[i], U[i], tC, L[i]) + cv.dux(X[i], U[i], tC);
      Mat huu = cv.vuu(X[i], U[i], tC, L[i]) + cv.duu(X[i], U[i], tC);
      check_huu(huu, huu_cond_limit, n, i);
      J.block(r5, off_stage_u(n, i), nu, nu) += huu;
    }
  }

  for (int n = 0; n <= N && nu > 0; ++n) {
    const int r6 = rm.node_stat(n);
    const double tn = grid.nodes[n];
    const Vec xn = v.segment(off_x(n), d), un = v.segment(off_u(n), nu);
    const Vec ln = v.segment(off_lam(n), d);
    J.block(r6, off_lam(n), nu, d) += sys.jac_u(xn, un, tn).transpose();
    J.block(r6, off_x(n), nu, d) += cv.vux(xn, un, tn, ln) + cv.dux(xn, un, tn);
    Mat huu = cv.vuu(xn, un, tn, ln) + cv.duu(xn, un, tn);
    check_huu(huu, huu_cond_limit, n, -1);
    J.block(r6, off_u(n), nu, nu) += huu;
  }

  if (mode == BoundaryMode::FreeInitial)
    J.block(rm.boundary_x(), off_lam(0), d, d) = id;
  else
    J.block(rm.boundary_x(), off_x(0), d, d) = id;
  if (mode == BoundaryMode::FixedBoth) {
    J.block(rm.boundary_lam(), off_x(N), d, d) = id;
  } else {
    J.block(rm.boundary_lam(), off_lam(N), d, d) = id;
    if (cost.grad_C)
      J.block(rm.boundary_lam(), off_x(N), d, d) -=
          cv.hess_terminal(v.segment(off_x(N), d));
  }
  return J;
}

DiscreteOptimalitySystem assemble_discrete_system(
    const ControlSystem& sys, const CostSpec& cost, const PrkTableau& ptab,
    const TimeGrid& grid, BoundaryMode mode, const Vec& alpha,
    const Vec& beta) {
  validate_problem(sys, cost, mode, alpha, beta);
  validate_grid(grid);
  if (ptab.lower.s < 1 || ptab.lower.s != ptab.upper.s)
    throw Error("pairing needs matching stage counts");
  return DiscreteOptimalitySystem{sys, cost, ptab, grid, mode, alpha, beta};
}

Vec pack_solution(const DiscreteOptimalitySystem& dos,
                  const ControlSolution& sol) {
  const int d = dos.sys.dim_x, nu = dos.sys.dim_u, s = dos.ptab.lower.s;
  const int N = dos.grid.n_steps();
  if (!sol.grid.same_as(dos.grid))
    throw GridMismatch("solution grid does not match the system grid");
  const auto want = [](bool ok, const char* what) {
    if (!ok) throw GridMismatch(what);
  };
  want(static_cast<int>(sol.x.size()) == N + 1, "node states have the wrong count");
  want(static_cast<int>(sol.lam.size()) == N + 1, "node costates have the wrong count");
  want(static_cast<int>(sol.u.size()) == N + 1, "node controls have the wrong count");
  want(static_cast<int>(sol.stages_x.size()) == N, "stage states have the wrong count");
  want(static_cast<int>(sol.stages_lam.size()) == N, "stage costates have the wrong count");
  want(static_cast<int>(sol.stages_u.size()) == N, "stage controls have the wrong count");

  Vec v = Vec::Zero(dos.n_unknowns());
  for (int n = 0; n <= N; ++n) {
    want(sol.x[n].size() == d && sol.lam[n].size() == d && sol.u[n].size() == nu,
         "node entry has the wrong dimension");
    v.segment(dos.off_x(n), d) = sol.x[n];
    v.segment(dos.off_lam(n), d) = sol.lam[n];
    v.segment(dos.off_u(n), nu) = sol.u[n];
  }
  for (int n = 0; n < N; ++n) {
    want(sol.stages_x[n].rows() == d && sol.stages_x[n].cols() == s &&
             sol.stages_lam[n].rows() == d && sol.stages_lam[n].cols() == s &&
             sol.stages_u[n].rows() == nu && sol.stages_u[n].cols() == s,
         "stage block has the wrong shape");
    for (int i = 0; i < s; ++i) {
      v.segment(dos.off_stage_x(n, i), d) = sol.stages_x[n].col(i);
      v.segment(dos.off_stage_lam(n, i), d) = sol.stages_lam[n].col(i);
      v.segment(dos.off_stage_u(n, i), nu) = sol.stages_u[n].col(i);
    }
  }
  return v;
}

ControlSolution unpack_solution(const DiscreteOptimalitySystem& dos,
                                const Vec& v) {
  const int d = dos.sys.dim_x, nu = dos.sys.dim_u, s = dos.ptab.lower.s;
  const int N = dos.grid.n_steps();
  if (static_cast<int>(v.size()) != dos.n_unknowns())
    throw GridMismatch("unknown vector has the wrong size");
  ControlSolution sol;
  sol.grid = dos.grid;
  sol.ptab = dos.ptab;
  sol.mode = dos.mode;
  sol.alpha = dos.alpha;
  sol.beta = dos.beta;
  sol.x.resize(N + 1);
  sol.lam.resize(N + 1);
  sol.u.resize(N + 1);
  for (int n = 0; n <= N; ++n) {
    sol.x[n] = v.segment(dos.off_x(n), d);
    sol.lam[n] = v.segment(dos.off_lam(n), d);
    sol.u[n] = v.segment(dos.off_u(n), nu);
  }
  sol.stages_x.assign(N, Mat::Zero(d, s));
  sol.stages_lam.assign(N, Mat::Zero(d, s));
  sol.stages_u.assign(N, Mat::Zero(nu, s));
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < s; ++i) {
      sol.stages_x[n].col(i) = v.segment(dos.off_stage_x(n, i), d);
      sol.stages_lam[n].col(i) = v.segment(dos.off_stage_lam(n, i), d);
      sol.stages_u[n].col(i) = v.segment(dos.off_stage_u(n, i), nu);
    }
  return sol;
}

namespace {

// forward state march and backward costate march with u = 0; endpoints
// interpolated linearly when both are pinned
Vec default_guess(const DiscreteOptimalitySystem& dos) {
  const int d = dos.sys.dim_x, nu = dos.sys.dim_u, s = dos.ptab.lower.s;
  const int N = dos.grid.n_steps();
  Vec v = Vec::Zero(dos.n_unknowns());
  const Vec zu = Vec::Zero(nu);

  if (dos.mode == BoundaryMode::FixedBoth) {
    const double t0 = dos.grid.nodes.front(), T = dos.grid.nodes.back() - t0;
    const auto at = [&](double t) -> Vec {
      const double fr = (t - t0) / T;
      return (1.0 - fr) * dos.alpha + fr * dos.beta;
    };
    for (int n = 0; n <= N; ++n) v.segment(dos.off_x(n), d) = at(dos.grid.nodes[n]);
    for (int n = 0; n < N; ++n)
      for (int i = 0; i < s; ++i)
        v.segment(dos.off_stage_x(n, i), d) =
            at(dos.grid.nodes[n] + dos.ptab.lower.c(i) * dos.grid.steps[n]);
    return v;
  }

  Vec xg = dos.alpha.size() == d ? dos.alpha : Vec::Zero(d);
  for (int n = 0; n < N; ++n) {
    v.segment(dos.off_x(n), d) = xg;
    for (int i = 0; i < s; ++i) v.segment(dos.off_stage_x(n, i), d) = xg;
    xg += dos.grid.steps[n] * dos.sys.f(xg, zu, dos.grid.nodes[n]);
  }
  v.segment(dos.off_x(N), d) = xg;

  Vec lg = dos.cost.grad_C ? dos.cost.grad_C(xg) : Vec::Zero(d);
  v.segment(dos.off_lam(N), d) = lg;
  for (int n = N - 1; n >= 0; --n) {
    for (int i = 0; i < s; ++i) v.segment(dos.off_stage_lam(n, i), d) = lg;
    const Vec xn = v.segment(dos.off_x(n), d);
    const double tn = dos.grid.nodes[n];
    Vec rate = dos.sys.jac_x(xn, zu, tn).transpose() * lg;
    if (dos.cost.has_running()) rate += dos.cost.grad_x_D(xn, zu, tn);
    lg += dos.grid.steps[n] * rate;
    v.segment(dos.off_lam(n), d) = lg;
  }
  return v;
}

void fill_diagnostics(ControlSolution& sol, const DiscreteOptimalitySystem& dos,
                      const NewtonOutcome& out) {
  const RowMap rm(dos);
  sol.diag.residual = out.residual_norm;
  sol.diag.newton_iterations = out.iterations;
  double st = 0.0;
  if (rm.nu > 0) {
    for (int n = 0; n < rm.N; ++n)
      st = std::max(st, linf(out.r.segment(rm.stage_stat(n, 0), rm.s * rm.nu)));
    st = std::max(st, linf(out.r.segment(rm.node_stat(0), (rm.N + 1) * rm.nu)));
  }
  sol.diag.stationarity = st;
  sol.diag.hamiltonian.clear();
  for (int n = 0; n <= rm.N; ++n) {
    const double tn = dos.grid.nodes[n];
    double hv = sol.lam[n].dot(dos.sys.f(sol.x[n], sol.u[n], tn));
    if (dos.cost.has_running()) hv += dos.cost.D(sol.x[n], sol.u[n], tn);
    sol.diag.hamiltonian.push_back(hv);
  }
  bool weights_ok = true;
  for (int i = 0; i < dos.ptab.lower.s; ++i)
    if (dos.ptab.lower.b(i) == 0.0) weights_ok = false;
  if (weights_ok)
    sol.diag.kkt =
        kkt_residual(sol, dos.sys, dos.cost, dos.ptab.lower, dos.grid);
}

}  // namespace

ControlSolution solve_indirect(const DiscreteOptimalitySystem& dos,
                               const std::optional<ControlSolution>& initial_guess,
                               const ControlSolveOptions& opts) {
  validate_problem(dos.sys, dos.cost, dos.mode, dos.alpha, dos.beta);
  validate_grid(dos.grid);
  if (dos.ptab.lower.s < 1 || dos.ptab.lower.s != dos.ptab.upper.s)
    throw Error("pairing needs matching stage counts");
  Vec v0 = initial_guess ? pack_solution(dos, *initial_guess)
                         : default_guess(dos);
  auto out = newton_solve(
      [&](const Vec& w) { return dos.residual(w); },
      [&](const Vec& w) { return dos.jacobian(w, opts.fd_step, opts.huu_cond_limit); },
      std::move(v0), opts, "optimality solve");
  ControlSolution sol = unpack_solution(dos, out.v);
  fill_diagnostics(sol, dos, out);
  return sol;
}

// ---------------------------------------------------------------------------
// discrete program: minimize the quadrature cost subject to the step equations

namespace {

struct DirectProgram {
  const ControlSystem& sys;
  const CostSpec& cost;
  const RkTableau& tab;
  const TimeGrid& grid;
  BoundaryMode mode;
  const Vec& alpha;
  const Vec& beta;
  int d, nu, s, N, blk;

  DirectProgram(const ControlSystem& sys_, const CostSpec& cost_,
                const RkTableau& tab_, const TimeGrid& grid_, BoundaryMode mode_,
                const Vec& alpha_, const Vec& beta_)
      : sys(sys_), cost(cost_), tab(tab_), grid(grid_), mode(mode_),
        alpha(alpha_), beta(beta_), d(sys_.dim_x), nu(sys_.dim_u), s(tab_.s),
        N(grid_.n_steps()), blk(2 * d + 2 * s * d + s * nu) {}

  // unknowns: x_0..x_N | slopes k | stage controls U | multipliers p, m
  int off_x(int n) const { return n * d; }
  int off_k(int n, int i) const { return (N + 1) * d + (n * s + i) * d; }
  int off_U(int n, int i) const {
    return (N + 1) * d + N * s * d + (n * s + i) * nu;
  }
  int off_p(int n) const {
    return (N + 1) * d + N * s * (d + nu) + n * d;
  }
  int off_m(int n, int i) const { return off_p(N + 1) + (n * s + i) * d; }
  int n_unknowns() const { return off_m(N - 1, s) ; }

  // rows: boundary, per step [d(x_n), d(k_i), d(U_i), step, slopes], terminal
  int row_sx(int n) const { return d + n * blk; }
  int row_sk(int n, int i) const { return d + n * blk + (1 + i) * d; }
  int row_su(int n, int i) const { return d + n * blk + (1 + s) * d + i * nu; }
  int row_cstep(int n) const { return d + n * blk + (1 + s) * d + s * nu; }
  int row_cslope(int n, int i) const {
    return d + n * blk + (2 + s + i) * d + s * nu;
  }
  int row_terminal() const { return d + N * blk; }

  Vec stage_state(const Vec& w, int n, int i) const {
    Vec X = w.segment(off_x(n), d);
    for (int j = 0; j < s; ++j)
      X += grid.steps[n] * tab.a(i, j) * w.segment(off_k(n, j), d);
    return X;
  }

  Vec residual(const Vec& w) const {
    const bool run = cost.has_running();
    Vec r = Vec::Zero(n_unknowns());
    if (mode == BoundaryMode::FreeInitial)
      r.segment(0, d) = w.segment(off_p(0), d);
    else
      r.segment(0, d) = w.segment(off_x(0), d) - alpha;

    for (int n = 0; n < N; ++n) {
      const double h = grid.steps[n], tn = grid.nodes[n];
      std::vector<Vec> X(s), U(s), m(s), jxm(s), gx(s), gu(s);
      for (int i = 0; i < s; ++i) {
        X[i] = stage_state(w, n, i);
        U[i] = w.segment(off_U(n, i), nu);
        m[i] = w.segment(off_m(n, i), d);
        const double ti = tn + tab.c(i) * h;
        jxm[i] = sys.jac_x(X[i], U[i], ti).transpose() * m[i];
        gx[i] = run ? cost.grad_x_D(X[i], U[i], ti) : Vec::Zero(d);
        if (nu > 0) gu[i] = run ? cost.grad_u_D(X[i], U[i], ti) : Vec::Zero(nu);
      }
      Vec sx = w.segment(off_p(n + 1), d) - w.segment(off_p(n), d);
      for (int i = 0; i < s; ++i) sx += jxm[i] + h * tab.b(i) * gx[i];
      r.segment(row_sx(n), d) = sx;
      for (int i = 0; i < s; ++i) {
        Vec sk = h * tab.b(i) * w.segment(off_p(n + 1), d) - m[i];
        for (int j = 0; j < s; ++j)
          sk += h * tab.a(j, i) * jxm[j] + h * h * tab.b(j) * tab.a(j, i) * gx[j];
        r.segment(row_sk(n, i), d) = sk;
      }
      for (int i = 0; i < s && nu > 0; ++i) {
        const double ti = tn + tab.c(i) * h;
        r.segment(row_su(n, i), nu) =
            sys.jac_u(X[i], U[i], ti).transpose() * m[i] + h * tab.b(i) * gu[i];
      }
      Vec cs = w.segment(off_x(n), d) - w.segment(off_x(n + 1), d);
      for (int i = 0; i < s; ++i) cs += h * tab.b(i) * w.segment(off_k(n, i), d);
      r.segment(row_cstep(n), d) = cs;
      for (int i = 0; i < s; ++i)
        r.segment(row_cslope(n, i), d) =
            sys.f(X[i], U[i], tn + tab.c(i) * h) - w.segment(off_k(n, i), d);
    }

    if (mode == BoundaryMode::FixedBoth) {
      r.segment(row_terminal(), d) = w.segment(off_x(N), d) - beta;
    } else {
      Vec rt = -w.segment(off_p(N), d);
      if (cost.grad_C) rt += cost.grad_C(w.segment(off_x(N), d));
      r.segment(row_terminal(), d) = rt;
    }
    return r;
  }

  Mat jacobian(const Vec& w, double fd_step, double huu_cond_limit) const {
    const Curvature cv{sys, cost, fd_step};
    const Mat id = Mat::Identity(d, d);
    Mat J = Mat::Zero(n_unknowns(), n_unknowns());

    if (mode == BoundaryMode::FreeInitial)
      J.block(0, off_p(0), d, d) = id;
    else
      J.block(0, off_x(0), d, d) = id;

    for (int n = 0; n < N; ++n) {
      const double h = grid.steps[n], tn = grid.nodes[n];
      std::vector<Vec> X(s), U(s), m(s);
      std::vector<Mat> jx(s), ju(s), mxx(s), mxu(s);
      for (int i = 0; i < s; ++i) {
        X[i] = stage_state(w, n, i);
        U[i] = w.segment(off_U(n, i), nu);
        m[i] = w.segment(off_m(n, i), d);
        const double ti = tn + tab.c(i) * h;
        jx[i] = sys.jac_x(X[i], U[i], ti);
        if (nu > 0) ju[i] = sys.jac_u(X[i], U[i], ti);
        // d/dX and d/dU of jx^T m + h b gx
        mxx[i] = cv.wxx(X[i], U[i], ti, m[i]) + h * tab.b(i) * cv.dxx(X[i], U[i], ti);
        if (nu > 0)
          mxu[i] = cv.wxu(X[i], U[i], ti, m[i]) + h * tab.b(i) * cv.dxu(X[i], U[i], ti);
      }
      // chain rule below runs through X_i = x_n + h sum_j a_ij k_j
      const int rsx = row_sx(n);
      J.block(rsx, off_p(n + 1), d, d) += id;
      J.block(rsx, off_p(n), d, d) -= id;
      for (int i = 0; i < s; ++i) {
        J.block(rsx, off_m(n, i), d, d) += jx[i].transpose();
        J.block(rsx, off_x(n), d, d) += mxx[i];
        for (int j = 0; j < s; ++j)
          J.block(rsx, off_k(n, j), d, d) += h * tab.a(i, j) * mxx[i];
        if (nu > 0) J.block(rsx, off_U(n, i), d, nu) += mxu[i];
      }
      for (int i = 0; i < s; ++i) {
        const int rsk = row_sk(n, i);
        J.block(rsk, off_p(n + 1), d, d) += h * tab.b(i) * id;
        J.block(rsk, off_m(n, i), d, d) -= id;
        for (int j = 0; j < s; ++j) {
          J.block(rsk, off_m(n, j), d, d) += h * tab.a(j, i) * jx[j].transpose();
          J.block(rsk, off_x(n), d, d) += h * tab.a(j, i) * mxx[j];
          for (int l = 0; l < s; ++l)
            J.block(rsk, off_k(n, l), d, d) +=
                h * tab.a(j, i) * h * tab.a(j, l) * mxx[j];
          if (nu > 0)
            J.block(rsk, off_U(n, j), d, nu) += h * tab.a(j, i) * mxu[j];
        }
      }
      for (int i = 0; i < s && nu > 0; ++i) {
        const int rsu = row_su(n, i);
        const double ti = tn + tab.c(i) * h;
        J.block(rsu, off_m(n, i), nu, d) += ju[i].transpose();
        const Mat mux =
            cv.vux(X[i], U[i], ti, m[i]) + h * tab.b(i) * cv.dux(X[i], U[i], ti);
        J.block(rsu, off_x(n), nu, d) += mux;
        for (int j = 0; j < s; ++j)
          J.block(rsu, off_k(n, j), nu, d) += h * tab.a(i, j) * mux;
        const Mat huu =
            cv.vuu(X[i], U[i], ti, m[i]) + h * tab.b(i) * cv.duu(X[i], U[i], ti);
        check_huu(huu, huu_cond_limit, n, i);
        J.block(rsu, off_U(n, i), nu, nu) += huu;
      }
      const int rcs = row_cstep(n);
      J.block(rcs, off_x(n), d, d) += id;
      J.block(rcs, off_x(n + 1), d, d) -= id;
      for (int i = 0; i < s; ++i)
        J.block(rcs, off_k(n, i), d, d) += h * tab.b(i) * id;
      for (int i = 0; i < s; ++i) {
        const int rcl = row_cslope(n, i);
        J.block(rcl, off_x(n), d, d) += jx[i];
        for (int j = 0; j < s; ++j) {
          J.block(rcl, off_k(n, j), d, d) += h * tab.a(i, j) * jx[i];
          if (i == j) J.block(rcl, off_k(n, j), d, d) -= id;
        }
        if (nu > 0) J.block(rcl, off_U(n, i), d, nu) += ju[i];
      }
    }

    if (mode == BoundaryMode::FixedBoth) {
      J.block(row_terminal(), off_x(N), d, d) = id;
    } else {
      J.block(row_terminal(), off_p(N), d, d) = -id;
      if (cost.grad_C)
        J.block(row_terminal(), off_x(N), d, d) +=
            cv.hess_terminal(w.segment(off_x(N), d));
    }
    return J;
  }

  Vec pack_from(const ControlSolution& sol) const {
    if (!sol.grid.same_as(grid))
      throw GridMismatch("solution grid does not match the program grid");
    if (static_cast<int>(sol.x.size()) != N + 1 ||
        static_cast<int>(sol.stages_x.size()) != N)
      throw GridMismatch("solution shape does not match the program grid");
    Vec w = Vec::Zero(n_unknowns());
    for (int n = 0; n <= N; ++n) {
      if (sol.x[n].size() != d || sol.lam[n].size() != d)
        throw GridMismatch("node entry has the wrong dimension");
      w.segment(off_x(n), d) = sol.x[n];
      w.segment(off_p(n), d) = sol.lam[n];
    }
    for (int n = 0; n < N; ++n) {
      if (sol.stages_x[n].cols() != s || sol.stages_u[n].rows() != nu ||
          sol.stages_lam[n].cols() != s)
        throw GridMismatch("stage block has the wrong shape");
      const double h = grid.steps[n], tn = grid.nodes[n];
      for (int i = 0; i < s; ++i) {
        w.segment(off_U(n, i), nu) = sol.stages_u[n].col(i);
        w.segment(off_k(n, i), d) =
            sys.f(sol.stages_x[n].col(i), sol.stages_u[n].col(i),
                  tn + tab.c(i) * h);
        w.segment(off_m(n, i), d) = h * tab.b(i) * sol.stages_lam[n].col(i);
      }
    }
    return w;
  }
};

// stationarity in the node control for a frozen state/costate pair
Vec solve_node_control(const ControlSystem& sys, const CostSpec& cost,
                       const Vec& x, const Vec& p, double t,
                       const ControlSolveOptions& opts, int node) {
  if (sys.dim_u == 0) return Vec(0);
  const Curvature cv{sys, cost, opts.fd_step};
  const bool run = cost.has_running();
  Vec u = Vec::Zero(sys.dim_u);
  const auto grad = [&](const Vec& uu) -> Vec {
    Vec g = sys.jac_u(x, uu, t).transpose() * p;
    if (run) g += cost.grad_u_D(x, uu, t);
    return g;
  };
  Vec g = grad(u);
  double gn = linf(g);
  for (int it = 0; it < std::max(opts.max_iter, 25); ++it) {
    if (gn <= opts.tol) return u;
    Mat huu = cv.vuu(x, u, t, p) + cv.duu(x, u, t);
    check_huu(huu, opts.huu_cond_limit, node, -1);
    const Vec du = huu.partialPivLu().solve(-g);
    bool moved = false;
    for (double step = 1.0; step > 1e-8; step *= 0.5) {
      Vec ut = u + step * du;
      Vec gt = grad(ut);
      const double gtn = linf(gt);
      if (gt.allFinite() && gtn <= (1.0 - 1e-4 * step) * gn) {
        u = std::move(ut);
        g = std::move(gt);
        gn = gtn;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (gn > opts.accept_tol)
    throw NewtonDiverged("node control solve stalled", gn);
  return u;
}

}  // namespace

ControlSolution solve_direct(const ControlSystem& sys, const CostSpec& cost,
                             const RkTableau& tab, const TimeGrid& grid,
                             BoundaryMode mode, const Vec& alpha,
                             const Vec& beta,
                             const std::optional<ControlSolution>& initial_guess,
                             const ControlSolveOptions& opts) {
  validate_problem(sys, cost, mode, alpha, beta);
  validate_grid(grid);
  if (tab.s < 1) throw Error("tableau needs at least one stage");
  // the recovered costate stages are m / (h b_i); a vanishing weight has no
  // finite multiplier scaling (see zero_weight.hpp for the limit construction)
  for (int i = 0; i < tab.s; ++i)
    if (tab.b(i) == 0.0) throw ZeroWeight(i);

  const DirectProgram dp(sys, cost, tab, grid, mode, alpha, beta);
  const int d = dp.d, nu = dp.nu, s = dp.s, N = dp.N;

  Vec w0;
  if (initial_guess) {
    w0 = dp.pack_from(*initial_guess);
  } else {
    // reuse the coupled-system guess, then translate it into program unknowns
    const DiscreteOptimalitySystem dos{
        sys, cost, adjoint_partner(tab), grid, mode, alpha, beta};
    const Vec vg = default_guess(dos);
    w0 = Vec::Zero(dp.n_unknowns());
    for (int n = 0; n <= N; ++n) {
      w0.segment(dp.off_x(n), d) = vg.segment(dos.off_x(n), d);
      w0.segment(dp.off_p(n), d) = vg.segment(dos.off_lam(n), d);
    }
    const Vec zu = Vec::Zero(nu);
    for (int n = 0; n < N; ++n) {
      const double h = grid.steps[n], tn = grid.nodes[n];
      for (int i = 0; i < s; ++i) {
        w0.segment(dp.off_k(n, i), d) =
            sys.f(vg.segment(dos.off_stage_x(n, i), d), zu, tn + tab.c(i) * h);
        w0.segment(dp.off_m(n, i), d) =
            h * tab.b(i) * vg.segment(dos.off_stage_lam(n, i), d);
      }
    }
  }

  auto out = newton_solve(
      [&](const Vec& w) { return dp.residual(w); },
      [&](const Vec& w) { return dp.jacobian(w, opts.fd_step, opts.huu_cond_limit); },
      std::move(w0), opts, "discrete program solve");

  ControlSolution sol;
  sol.grid = grid;
  sol.ptab = adjoint_partner(tab);
  sol.mode = mode;
  sol.alpha = alpha;
  sol.beta = beta;
  sol.x.resize(N + 1);
  sol.lam.resize(N + 1);
  sol.u.resize(N + 1);
  sol.stages_x.assign(N, Mat::Zero(d, s));
  sol.stages_lam.assign(N, Mat::Zero(d, s));
  sol.stages_u.assign(N, Mat::Zero(nu, s));
  for (int n = 0; n <= N; ++n) {
    sol.x[n] = out.v.segment(dp.off_x(n), d);
    sol.lam[n] = out.v.segment(dp.off_p(n), d);
  }
  for (int n = 0; n < N; ++n) {
    const double h = grid.steps[n];
    for (int i = 0; i < s; ++i) {
      sol.stages_x[n].col(i) = dp.stage_state(out.v, n, i);
      sol.stages_lam[n].col(i) =
          out.v.segment(dp.off_m(n, i), d) / (h * tab.b(i));
      sol.stages_u[n].col(i) = out.v.segment(dp.off_U(n, i), nu);
    }
  }
  for (int n = 0; n <= N; ++n)
    sol.u[n] = solve_node_control(sys, cost, sol.x[n], sol.lam[n],
                                  grid.nodes[n], opts, n);

  sol.diag.residual = out.residual_norm;
  sol.diag.newton_iterations = out.iterations;
  double st = 0.0;
  const bool run = cost.has_running();
  for (int n = 0; n < N && nu > 0; ++n) {
    const double h = grid.steps[n], tn = grid.nodes[n];
    for (int i = 0; i < s; ++i) {
      const double ti = tn + tab.c(i) * h;
      Vec g = sys.jac_u(sol.stages_x[n].col(i), sol.stages_u[n].col(i), ti)
                  .transpose() *
              sol.stages_lam[n].col(i);
      if (run)
        g += cost.grad_u_D(sol.stages_x[n].col(i), sol.stages_u[n].col(i), ti);
      st = std::max(st, linf(g));
    }
  }
  for (int n = 0; n <= N && nu > 0; ++n) {
    Vec g = sys.jac_u(sol.x[n], sol.u[n], grid.nodes[n]).transpose() * sol.lam[n];
    if (run) g += cost.grad_u_D(sol.x[n], sol.u[n], grid.nodes[n]);
    st = std::max(st, linf(g));
  }
  sol.diag.stationarity = st;
  for (int n = 0; n <= N; ++n) {
    double hv = sol.lam[n].dot(sys.f(sol.x[n], sol.u[n], grid.nodes[n]));
    if (run) hv += cost.D(sol.x[n], sol.u[n], grid.nodes[n]);
    sol.diag.hamiltonian.push_back(hv);
  }
  sol.diag.kkt = kkt_residual(sol, sys, cost, tab, grid);
  return sol;
}

double kkt_residual(const ControlSolution& sol, const ControlSystem& sys,
                    const CostSpec& cost, const RkTableau& tab,
                    const TimeGrid& grid) {
  validate_problem(sys, cost, sol.mode, sol.alpha, sol.beta);
  validate_grid(grid);
  if (!sol.grid.same_as(grid, 1e-12))
    throw GridMismatch("solution grid does not match the given grid");
  if (sol.stages_x.empty() ||
      sol.stages_x.front().cols() != tab.s)
    throw GridMismatch("stage counts differ between solution and tableau");
  const DirectProgram dp(sys, cost, tab, grid, sol.mode, sol.alpha, sol.beta);
  return linf(dp.residual(dp.pack_from(sol)));
}

AuditReport lambda_delta_audit(const ControlSolution& sol,
                               const ControlSystem& sys, const CostSpec& cost,
                               const Vec& eta_hat,
                               const ControlSolveOptions& opts) {
  if (sol.mode == BoundaryMode::FreeInitial)
    throw UnsupportedMode("audit needs a pinned initial state to vary");
  if (eta_hat.size() != sys.dim_x)
    throw GridMismatch("variation seed size does not match dim_x");
  const DiscreteOptimalitySystem dos = assemble_discrete_system(
      sys, cost, sol.ptab, sol.grid, sol.mode, sol.alpha, sol.beta);
  const int d = dos.sys.dim_x, nu = dos.sys.dim_u, s = dos.ptab.lower.s;
  const int N = dos.grid.n_steps();
  const Vec v = pack_solution(dos, sol);
  const Mat J = dos.jacobian(v, opts.fd_step, opts.huu_cond_limit);
  const RowMap rm(dos);

  // perturbing the pinned initial state by eta_hat shifts only its residual
  // rows, so the induced tangent solves J dv = e_bx eta_hat
  Vec rhs = Vec::Zero(dos.n_unknowns());
  rhs.segment(rm.boundary_x(), d) = eta_hat;
  const Vec dv = J.partialPivLu().solve(rhs);
  if (!dv.allFinite()) throw SingularBlock("variation solve");

  AuditReport rep;
  rep.delta.resize(N + 1);
  for (int n = 0; n <= N; ++n) rep.delta[n] = dv.segment(dos.off_x(n), d);

  rep.products.push_back(sol.lam[0].dot(rep.delta[0]));
  double comp = 0.0;
  const bool run = cost.has_running();
  for (int n = 0; n < N; ++n) {
    const double h = dos.grid.steps[n], tn = dos.grid.nodes[n];
    if (run) {
      for (int i = 0; i < s; ++i) {
        const double ti = tn + dos.ptab.lower.c(i) * h;
        const Vec Xi = sol.stages_x[n].col(i), Ui = sol.stages_u[n].col(i);
        const Vec dXi = dv.segment(dos.off_stage_x(n, i), d);
        double term = cost.grad_x_D(Xi, Ui, ti).dot(dXi);
        if (nu > 0) {
          const Vec dUi = dv.segment(dos.off_stage_u(n, i), nu);
          term += cost.grad_u_D(Xi, Ui, ti).dot(dUi);
        }
        comp += h * dos.ptab.lower.b(i) * term;
      }
    }
    rep.products.push_back(sol.lam[n + 1].dot(rep.delta[n + 1]) + comp);
  }
  rep.max_spread = 0.0;
  for (double wv : rep.products)
    rep.max_spread = std::max(rep.max_spread, std::abs(wv - rep.products[0]));
  return rep;
}

ControlSolution mechanics_demo(const Lagrangian& lag, const RkTableau& tab,
                               const TimeGrid& grid, const Vec& x_start,
                               const Vec& x_end,
                               const ControlSolveOptions& opts) {
  if (lag.dim <= 0 || !lag.value || !lag.grad_x || !lag.grad_u)
    throw Error("mechanics demo needs a complete Lagrangian");
  const int d = lag.dim;

  ControlSystem sys;
  sys.dim_x = d;
  sys.dim_u = d;
  sys.f = [](const Vec&, const Vec& u, double) -> Vec { return u; };
  sys.jac_x = [d](const Vec&, const Vec&, double) -> Mat {
    return Mat::Zero(d, d);
  };
  sys.jac_u = [d](const Vec&, const Vec&, double) -> Mat {
    return Mat::Identity(d, d);
  };
  sys.huu_f = [d](const Vec&, const Vec&, double, const Vec&) -> Mat {
    return Mat::Zero(d, d);
  };

  // running cost -L turns the cost minimization into action stationarity
  CostSpec cost;
  cost.D = [&lag](const Vec& x, const Vec& u, double t) {
    return -lag.value(x, u, t);
  };
  cost.grad_x_D = [&lag](const Vec& x, const Vec& u, double t) -> Vec {
    return -lag.grad_x(x, u, t);
  };
  cost.grad_u_D = [&lag](const Vec& x, const Vec& u, double t) -> Vec {
    return -lag.grad_u(x, u, t);
  };

  const PrkTableau ptab = adjoint_partner(tab);
  const DiscreteOptimalitySystem dos = assemble_discrete_system(
      sys, cost, ptab, grid, BoundaryMode::FixedBoth, x_start, x_end);
  ControlSolution sol = solve_indirect(dos, std::nullopt, opts);

  // the stationarity rows force Lam = grad_u L, so the costates are momenta
  double gap = 0.0;
  for (int n = 0; n < grid.n_steps(); ++n) {
    const double h = grid.steps[n], tn = grid.nodes[n];
    for (int i = 0; i < ptab.upper.s; ++i) {
      const double ti = tn + ptab.upper.c(i) * h;
      const Vec mom = lag.grad_u(sol.stages_x[n].col(i),
                                 sol.stages_u[n].col(i), ti);
      gap = std::max(gap, linf(sol.stages_lam[n].col(i) - mom));
    }
  }
  sol.diag.momentum_gap = gap;
  return sol;
}

double check_control_jacobians(const ControlSystem& sys, const Vec& x,
                               const Vec& u, double t) {
  if (!sys.f) throw Error("control system: f is required");
  if (!sys.jac_x) throw MissingJacobian("control system: jac_x is required");
  if (sys.dim_u > 0 && !sys.jac_u)
    throw MissingJacobian("control system: jac_u is required");
  const double fd = 1e-6;
  const Mat fx = diff_cols(sys.dim_x, x, fd,
                           [&](const Vec& x2) { return sys.f(x2, u, t); });
  double dev = (fx - sys.jac_x(x, u, t)).cwiseAbs().maxCoeff();
  if (sys.dim_u > 0) {
    const Mat fu = diff_cols(sys.dim_x, u, fd,
                             [&](const Vec& u2) { return sys.f(x, u2, t); });
    dev = std::max(dev, (fu - sys.jac_u(x, u, t)).cwiseAbs().maxCoeff());
  }
  return dev;
}

}  // namespace sprk
