#include "sprk/ode.hpp"

#include <cmath>

namespace sprk {

TimeGrid::TimeGrid(double start, std::vector<double> hs)
    : t0(start), steps(std::move(hs)) {
  nodes.reserve(steps.size() + 1);
  nodes.push_back(t0);
  for (double h : steps) {
    if (!(h > 0.0) || !std::isfinite(h))
      throw Error("time grid: step sizes must be positive");
    nodes.push_back(nodes.back() + h);
  }
}

TimeGrid TimeGrid::uniform(double start, double end, int n_steps) {
  if (n_steps <= 0) throw Error("time grid: step count must be positive");
  if (!(end > start)) throw Error("time grid: end must exceed start");
  std::vector<double> hs(static_cast<std::size_t>(n_steps),
                         (end - start) / n_steps);
  return TimeGrid(start, std::move(hs));
}

bool TimeGrid::same_as(const TimeGrid& other, double tol) const {
  if (steps.size() != other.steps.size()) return false;
  if (std::abs(t0 - other.t0) > tol) return false;
  for (std::size_t n = 0; n < steps.size(); ++n)
    if (std::abs(steps[n] - other.steps[n]) > tol) return false;
  return true;
}

namespace {

void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw NonFiniteValue(std::string(what) + " is not finite");
}

// Newton target: quadratic convergence stalls near machine precision, so we
// push well below the guaranteed tolerance and stop on stagnation.
double tight_target(const Vec& x) { return 1e-15 * (1.0 + x.lpNorm<Eigen::Infinity>()); }

}  // namespace

StepResult rk_step(const OdeSystem& sys, const RkTableau& tab, const Vec& x,
                   double t, double h, const StepControls& ctl) {
  const int s = tab.s;
  const int d = sys.dim;
  StepResult out;
  out.stages.resize(d, s);
  out.slopes.resize(d, s);

  if (tab.explicit_stages()) {
    for (int i = 0; i < s; ++i) {
      Vec Xi = x;
      for (int j = 0; j < i; ++j) Xi += h * tab.a(i, j) * out.slopes.col(j);
      Vec ki = sys.f(Xi, t + tab.c(i) * h);
      require_finite(ki, "slope");
      out.stages.col(i) = Xi;
      out.slopes.col(i) = ki;
    }
  } else {
    // stacked stage system, unknowns X_1..X_s
    Mat X = x.replicate(1, s);
    Mat K(d, s);
    auto residual = [&](const Mat& Xc, Mat& Kc, Vec& R) {
      for (int j = 0; j < s; ++j) {
        Kc.col(j) = sys.f(Xc.col(j), t + tab.c(j) * h);
        require_finite(Kc.col(j), "slope");
      }
      for (int i = 0; i < s; ++i) {
        Vec ri = Xc.col(i) - x;
        for (int j = 0; j < s; ++j) ri -= h * tab.a(i, j) * Kc.col(j);
        R.segment(i * d, d) = ri;
      }
    };
    Vec R(s * d);
    residual(X, K, R);
    double res = R.lpNorm<Eigen::Infinity>();
    const double target = tight_target(x);
    int it = 0;
    if (sys.has_jacobian()) {
      Mat Jsys(s * d, s * d);
      while (res > target && it < ctl.max_newton) {
        for (int j = 0; j < s; ++j) {
          Mat Jj = sys.jac(X.col(j), t + tab.c(j) * h);
          for (int i = 0; i < s; ++i) {
            Mat block = -h * tab.a(i, j) * Jj;
            if (i == j) block += Mat::Identity(d, d);
            Jsys.block(i * d, j * d, d, d) = block;
          }
        }
        Vec dz = Jsys.partialPivLu().solve(-R);
        for (int i = 0; i < s; ++i) X.col(i) += dz.segment(i * d, d);
        residual(X, K, R);
        double next = R.lpNorm<Eigen::Infinity>();
        ++it;
        if (next >= 0.5 * res && next <= ctl.stage_tol) { res = next; break; }
        res = next;
      }
    } else {
      // damped fixed-point sweeps
      double theta = 1.0;
      while (res > target && it < ctl.max_sweeps) {
        Mat Xn(d, s);
        for (int i = 0; i < s; ++i) {
          Vec cand = x;
          for (int j = 0; j < s; ++j) cand += h * tab.a(i, j) * K.col(j);
          Xn.col(i) = (1.0 - theta) * X.col(i) + theta * cand;
        }
        Mat Kn(d, s);
        Vec Rn(s * d);
        residual(Xn, Kn, Rn);
        double next = Rn.lpNorm<Eigen::Infinity>();
        ++it;
        if (next > res && theta > 1.0 / 16.0) {
          theta *= 0.5;  // keep the old iterate
          continue;
        }
        X = Xn;
        K = Kn;
        R = Rn;
        if (next >= 0.5 * res && next <= ctl.stage_tol) { res = next; break; }
        res = next;
        theta = std::min(1.0, 2.0 * theta);
      }
    }
    if (res > ctl.stage_tol)
      throw StageSolveFailed("stage equations did not converge", res);
    out.stages = X;
    out.slopes = K;
    out.iterations = it;
    out.residual = res;
  }

  out.x = x;
  for (int i = 0; i < s; ++i) out.x += h * tab.b(i) * out.slopes.col(i);
  require_finite(out.x, "state");
  return out;
}

Trajectory rk_integrate(const OdeSystem& sys, const RkTableau& tab,
                        const Vec& x0, const TimeGrid& grid,
                        const StepControls& ctl) {
  Trajectory traj;
  traj.grid = grid;
  traj.tableau = tab;
  traj.nodes.reserve(grid.steps.size() + 1);
  traj.nodes.push_back(x0);
  traj.stages.reserve(grid.steps.size());
  traj.slopes.reserve(grid.steps.size());
  for (int n = 0; n < grid.n_steps(); ++n) {
    StepResult st =
        rk_step(sys, tab, traj.nodes.back(), grid.nodes[n], grid.steps[n], ctl);
    traj.nodes.push_back(std::move(st.x));
    traj.stages.push_back(std::move(st.stages));
    traj.slopes.push_back(std::move(st.slopes));
  }
  return traj;
}

Trajectory PrkTrajectory::q_view() const {
  return Trajectory{grid, tableau.lower, nodes_q, stages_q, slopes_q};
}

Trajectory PrkTrajectory::p_view() const {
  return Trajectory{grid, tableau.upper, nodes_p, stages_p, slopes_p};
}

PrkStepResult prk_step(const PartitionedSystem& sys, const PrkTableau& ptab,
                       const Vec& q, const Vec& p, double t, double h,
                       const StepControls& ctl) {
  const int s = ptab.lower.s;
  if (ptab.upper.s != s) throw Error("pair " + ptab.name + ": stage counts differ");
  const int dq = sys.dim_q, dp = sys.dim_p;
  const Mat& a = ptab.lower.a;
  const Mat& A = ptab.upper.a;
  const Vec& c = ptab.lower.c;
  const Vec& C = ptab.upper.c;

  Mat Q = q.replicate(1, s), P = p.replicate(1, s);
  Mat K(dq, s), L(dp, s);
  auto residual = [&](const Mat& Qc, const Mat& Pc, Mat& Kc, Mat& Lc, Vec& R) {
    for (int j = 0; j < s; ++j) {
      Kc.col(j) = sys.f(Qc.col(j), Pc.col(j), t + c(j) * h);
      Lc.col(j) = sys.g(Qc.col(j), Pc.col(j), t + C(j) * h);
      require_finite(Kc.col(j), "slope");
      require_finite(Lc.col(j), "slope");
    }
    for (int i = 0; i < s; ++i) {
      Vec rq = Qc.col(i) - q;
      Vec rp = Pc.col(i) - p;
      for (int j = 0; j < s; ++j) {
        rq -= h * a(i, j) * Kc.col(j);
        rp -= h * A(i, j) * Lc.col(j);
      }
      R.segment(i * dq, dq) = rq;
      R.segment(s * dq + i * dp, dp) = rp;
    }
  };

  Vec R(s * (dq + dp));
  residual(Q, P, K, L, R);
  double res = R.lpNorm<Eigen::Infinity>();
  const double target =
      1e-15 * (1.0 + std::max(q.lpNorm<Eigen::Infinity>(), p.lpNorm<Eigen::Infinity>()));
  int it = 0;
  if (sys.has_jacobians()) {
    Mat Jsys(s * (dq + dp), s * (dq + dp));
    while (res > target && it < ctl.max_newton) {
      for (int j = 0; j < s; ++j) {
        const double tq = t + c(j) * h, tp = t + C(j) * h;
        Mat fqj = sys.fq(Q.col(j), P.col(j), tq);
        Mat fpj = sys.fp(Q.col(j), P.col(j), tq);
        Mat gqj = sys.gq(Q.col(j), P.col(j), tp);
        Mat gpj = sys.gp(Q.col(j), P.col(j), tp);
        for (int i = 0; i < s; ++i) {
          Mat bqq = -h * a(i, j) * fqj;
          Mat bpp = -h * A(i, j) * gpj;
          if (i == j) {
            bqq += Mat::Identity(dq, dq);
            bpp += Mat::Identity(dp, dp);
          }
          Jsys.block(i * dq, j * dq, dq, dq) = bqq;
          Jsys.block(i * dq, s * dq + j * dp, dq, dp) = -h * a(i, j) * fpj;
          Jsys.block(s * dq + i * dp, j * dq, dp, dq) = -h * A(i, j) * gqj;
          Jsys.block(s * dq + i * dp, s * dq + j * dp, dp, dp) = bpp;
        }
      }
      Vec dz = Jsys.partialPivLu().solve(-R);
      for (int i = 0; i < s; ++i) {
        Q.col(i) += dz.segment(i * dq, dq);
        P.col(i) += dz.segment(s * dq + i * dp, dp);
      }
      residual(Q, P, K, L, R);
      double next = R.lpNorm<Eigen::Infinity>();
      ++it;
      if (next >= 0.5 * res && next <= ctl.stage_tol) { res = next; break; }
      res = next;
    }
  } else {
    double theta = 1.0;
    while (res > target && it < ctl.max_sweeps) {
      Mat Qn(dq, s), Pn(dp, s);
      for (int i = 0; i < s; ++i) {
        Vec cq = q, cp = p;
        for (int j = 0; j < s; ++j) {
          cq += h * a(i, j) * K.col(j);
          cp += h * A(i, j) * L.col(j);
        }
        Qn.col(i) = (1.0 - theta) * Q.col(i) + theta * cq;
        Pn.col(i) = (1.0 - theta) * P.col(i) + theta * cp;
      }
      Mat Kn(dq, s), Ln(dp, s);
      Vec Rn(s * (dq + dp));
      residual(Qn, Pn, Kn, Ln, Rn);
      double next = Rn.lpNorm<Eigen::Infinity>();
      ++it;
      if (next > res && theta > 1.0 / 16.0) {
        theta *= 0.5;
        continue;
      }
      Q = Qn; P = Pn; K = Kn; L = Ln; R = Rn;
      if (next >= 0.5 * res && next <= ctl.stage_tol) { res = next; break; }
      res = next;
      theta = std::min(1.0, 2.0 * theta);
    }
  }
  if (res > ctl.stage_tol)
    throw StageSolveFailed("partitioned stage equations did not converge", res);

  PrkStepResult out;
  out.q = q;
  out.p = p;
  for (int i = 0; i < s; ++i) {
    out.q += h * ptab.lower.b(i) * K.col(i);
    out.p += h * ptab.upper.b(i) * L.col(i);
  }
  require_finite(out.q, "state");
  require_finite(out.p, "state");
  out.stages_q = std::move(Q);
  out.stages_p = std::move(P);
  out.slopes_q = std::move(K);
  out.slopes_p = std::move(L);
  out.iterations = it;
  out.residual = res;
  return out;
}

PrkTrajectory prk_integrate(const PartitionedSystem& sys, const PrkTableau& ptab,
                            const Vec& q0, const Vec& p0, const TimeGrid& grid,
                            const StepControls& ctl) {
  PrkTrajectory traj;
  traj.grid = grid;
  traj.tableau = ptab;
  traj.nodes_q.push_back(q0);
  traj.nodes_p.push_back(p0);
  for (int n = 0; n < grid.n_steps(); ++n) {
    PrkStepResult st = prk_step(sys, ptab, traj.nodes_q.back(), traj.nodes_p.back(),
                                grid.nodes[n], grid.steps[n], ctl);
    traj.nodes_q.push_back(std::move(st.q));
    traj.nodes_p.push_back(std::move(st.p));
    traj.stages_q.push_back(std::move(st.stages_q));
    traj.stages_p.push_back(std::move(st.stages_p));
    traj.slopes_q.push_back(std::move(st.slopes_q));
    traj.slopes_p.push_back(std::move(st.slopes_p));
  }
  return traj;
}

DriftReport quadratic_drift(const Trajectory& traj, const QuadraticForm& I,
                            const std::function<double(const Vec&, double)>& phi) {
  const RkTableau& tab = traj.tableau;
  DriftReport rep;
  const int N = traj.grid.n_steps();
  if (traj.nodes.size() != static_cast<std::size_t>(N) + 1 ||
      traj.stages.size() != static_cast<std::size_t>(N))
    throw GridMismatch("trajectory storage does not match its grid");
  rep.per_step.reserve(N);
  for (int n = 0; n < N; ++n) {
    double change = I(traj.nodes[n + 1], traj.nodes[n + 1]) -
                    I(traj.nodes[n], traj.nodes[n]);
    if (phi) {
      const double h = traj.grid.steps[n], t = traj.grid.nodes[n];
      for (int i = 0; i < tab.s; ++i)
        change -= h * tab.b(i) * phi(traj.stages[n].col(i), t + tab.c(i) * h);
    }
    rep.per_step.push_back(change);
    rep.max_abs = std::max(rep.max_abs, std::abs(change));
  }
  return rep;
}

DriftReport quadratic_drift(const PrkTrajectory& traj, const QuadraticForm& S,
                            const std::function<double(const Vec&, const Vec&, double)>& phi) {
  DriftReport rep;
  const int N = traj.grid.n_steps();
  const std::size_t n_nodes = static_cast<std::size_t>(N) + 1;
  if (traj.nodes_q.size() != n_nodes || traj.nodes_p.size() != n_nodes ||
      traj.stages_q.size() != static_cast<std::size_t>(N) ||
      traj.stages_p.size() != static_cast<std::size_t>(N))
    throw GridMismatch("trajectory storage does not match its grid");
  const Vec& b = traj.tableau.lower.b;
  const Vec& c = traj.tableau.lower.c;
  rep.per_step.reserve(N);
  for (int n = 0; n < N; ++n) {
    double change = S(traj.nodes_q[n + 1], traj.nodes_p[n + 1]) -
                    S(traj.nodes_q[n], traj.nodes_p[n]);
    if (phi) {
      const double h = traj.grid.steps[n], t = traj.grid.nodes[n];
      for (int i = 0; i < traj.tableau.lower.s; ++i)
        change -= h * b(i) *
                  phi(traj.stages_q[n].col(i), traj.stages_p[n].col(i), t + c(i) * h);
    }
    rep.per_step.push_back(change);
    rep.max_abs = std::max(rep.max_abs, std::abs(change));
  }
  return rep;
}

Mat fd_jacobian(const std::function<Vec(const Vec&, double)>& f, const Vec& x,
                double t) {
  const int d = static_cast<int>(x.size());
  Vec probe = f(x, t);
  Mat J(probe.size(), d);
  for (int j = 0; j < d; ++j) {
    const double step = 1e-6 * (1.0 + std::abs(x(j)));
    Vec xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    J.col(j) = (f(xp, t) - f(xm, t)) / (2.0 * step);
  }
  return J;
}

double check_jacobian(const OdeSystem& sys, const Vec& x, double t) {
  if (!sys.has_jacobian()) throw MissingJacobian("system has no Jacobian");
  return (sys.jac(x, t) - fd_jacobian(sys.f, x, t)).cwiseAbs().maxCoeff();
}

}  // namespace sprk
