#pragma once

#include <string>
#include <vector>

#include "sprk/variational.hpp"

namespace sprk {

// fixed-point print with ties rounded away from zero; printf would round
// to nearest even, which is not how the reference tables were produced
std::string round_away(double value, int decimals);

struct Table1Config {
  std::vector<double> steps{0.100, 0.050, 0.025};
  double reference_h = 1e-4;   // fine-grid pairing that stands in for the limit
  double raw_tol = 5e-5;       // |raw - printed| allowed per cell
  double variant_tol = 1e-11;  // radau-paired reverse column vs forward column
};

struct Table1Row {
  double h = 0.0;
  double reverse = 0.0;      // lambda_0 . eta
  double forward = 0.0;      // omega . delta_N
  double reverse_gap = 0.0;  // reverse minus the fine-grid reverse value
  double forward_gap = 0.0;
  double variant_reverse = 0.0;  // same run with radau-ia1 on the multipliers
};

struct Table1Report {
  std::vector<Table1Row> rows;
  double reference_reverse = 0.0;  // gauss2 pairing at reference_h
  double reference_forward = 0.0;

  // the five benchmark columns, every cell at its print precision
  std::string csv() const;
};

// Euler/Euler sensitivity rows for the predator-prey benchmark, eta = omega
// = (1, 0) on [0, 1], plus the radau-paired variant of the reverse column.
// Cells are checked against the reference prints; offenders end up in a
// MismatchReport (raw_tol = 0 fails every checked cell by construction).
Table1Report reproduce_table1(const Table1Config& cfg = {});

struct Fig1Config {
  double fine_h = 1e-4;        // grid for the continuous-limit curves
  double mark_spacing = 0.05;  // must be a multiple of fine_h
  double eta_scale = 1.0;      // perturbation eta = scale * (1, 0)
};

struct Fig1Bundle {
  SensitivityResult run;  // gauss2 pairing on the fine grid
  Trajectory perturbed;   // restarted from alpha + eta
  std::vector<double> mark_times;
  std::vector<Vec> marks;      // delta at the marked nodes
  double forward_value = 0.0;  // omega . delta at the endpoint
  double reverse_value = 0.0;  // lambda(0) . eta
};

// the perturbation study behind the benchmark figure: both trajectories,
// the sampled variational points, and the multiplier pullback
Fig1Bundle reproduce_fig1(const Fig1Config& cfg = {});

}  // namespace sprk
