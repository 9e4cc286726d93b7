#pragma once

#include <optional>
#include <vector>

#include "sprk/ode.hpp"

namespace sprk {

/// Least-squares line through (log x_k, log y_k).
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;  // in log space
  double r_squared = 1.0;
};

// Needs matching lengths and strictly positive data. Absent when fewer than
// two points are supplied, so callers can report bare errors for a single h.
std::optional<SlopeFit> fit_loglog(const std::vector<double>& x,
                                   const std::vector<double>& y);

struct ConvergenceRow {
  double h = 0.0;
  double error = 0.0;  // endpoint max-norm gap to the reference run
};

struct ConvergenceStudy {
  std::vector<ConvergenceRow> rows;  // in the order the steps were given
  std::optional<SlopeFit> fit;       // absent with fewer than two usable rows
};

// Endpoint error of `tab` at each step size against the same scheme run at
// min(steps) / ref_refine. Every step size must divide T - t0. Rows whose
// error underflows to zero are kept but left out of the fit.
ConvergenceStudy self_convergence(const OdeSystem& sys, const RkTableau& tab,
                                  const Vec& start, double t0, double T,
                                  const std::vector<double>& steps,
                                  int ref_refine = 16);

}  // namespace sprk
