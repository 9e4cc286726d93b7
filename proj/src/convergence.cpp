#include "sprk/convergence.hpp"

#include <algorithm>
#include <cmath>

#include "sprk/errors.hpp"

namespace sprk {

std::optional<SlopeFit> fit_loglog(const std::vector<double>& x,
                                   const std::vector<double>& y) {
  if (x.size() != y.size())
    throw Error("log-log fit: abscissa and ordinate counts differ");
  const int n = static_cast<int>(x.size());
  if (n < 2) return std::nullopt;

  std::vector<double> lx(n), ly(n);
  for (int k = 0; k < n; ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0))
      throw Error("log-log fit: data must be positive");
    lx[k] = std::log(x[k]);
    ly[k] = std::log(y[k]);
  }

  double mx = 0.0, my = 0.0;
  for (int k = 0; k < n; ++k) {
    mx += lx[k];
    my += ly[k];
  }
  mx /= n;
  my /= n;

  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int k = 0; k < n; ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
    syy += (ly[k] - my) * (ly[k] - my);
  }
  if (sxx == 0.0) throw Error("log-log fit: all abscissae coincide");

  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

namespace {

int step_count(double span, double h) {
  const int n = static_cast<int>(std::lround(span / h));
  if (n < 1 || std::abs(n * h - span) > 1e-9 * std::max(1.0, span))
    throw Error("convergence study: step size does not divide the interval");
  return n;
}

}  // namespace

ConvergenceStudy self_convergence(const OdeSystem& sys, const RkTableau& tab,
                                  const Vec& start, double t0, double T,
                                  const std::vector<double>& steps,
                                  int ref_refine) {
  if (steps.empty()) throw Error("convergence study: no step sizes given");
  if (!(T > t0)) throw Error("convergence study: empty time interval");
  if (ref_refine < 2) throw Error("convergence study: reference must be finer");

  const double span = T - t0;
  double hmin = steps[0];
  for (double h : steps) {
    if (!(h > 0.0)) throw Error("convergence study: step sizes must be positive");
    hmin = std::min(hmin, h);
  }
  const int n_ref = step_count(span, hmin) * ref_refine;
  const Vec ref =
      rk_integrate(sys, tab, start, TimeGrid::uniform(t0, T, n_ref)).nodes.back();

  ConvergenceStudy study;
  std::vector<double> hs, errs;
  for (double h : steps) {
    const int n = step_count(span, h);
    const Vec end =
        rk_integrate(sys, tab, start, TimeGrid::uniform(t0, T, n)).nodes.back();
    ConvergenceRow row;
    row.h = span / n;
    row.error = (end - ref).lpNorm<Eigen::Infinity>();
    study.rows.push_back(row);
    if (row.error > 0.0) {
      hs.push_back(row.h);
      errs.push_back(row.error);
    }
  }
  if (hs.size() >= 2) study.fit = fit_loglog(hs, errs);
  return study;
}

}  // namespace sprk
