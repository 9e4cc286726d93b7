#pragma once

#include "sprk/ode.hpp"

namespace sprk {

/// One block of a triangular constraint program. The residual may read the
/// independent variables, any block listed in `deps` (all strictly earlier),
/// and, when `implicit`, its own block. Callbacks receive the full gamma
/// vector but must only touch those entries.
struct ConstraintBlock {
  std::string label;
  int size = 0;
  std::vector<int> deps;  // earlier block indices this residual reads
  bool implicit = false;  // residual also reads its own block

  std::function<Vec(const Vec& alpha, const std::vector<Vec>& gamma)> residual;
  // d residual / d alpha, size x n_independent; empty function means zero
  std::function<Mat(const Vec&, const std::vector<Vec>&)> d_alpha;
  // d residual / d gamma^q for q in deps or q == own index
  std::function<Mat(const Vec&, const std::vector<Vec>&, int q)> d_gamma;
  // optional Newton start; zero vector otherwise
  std::function<Vec(const Vec&, const std::vector<Vec>&)> guess;
};

/// Ordered constraints Omega^r(alpha, gamma^1..gamma^r) = 0 plus an objective
/// Psi(alpha, gamma). Forward evaluation resolves the blocks in order; the
/// reverse pass solves the transposed triangular system for one multiplier
/// per block and assembles grad_alpha Psi + sum_r (d_alpha Omega^r)^T lam^r.
struct ConstraintProgram {
  int n_independent = 0;
  std::vector<ConstraintBlock> blocks;

  std::function<double(const Vec&, const std::vector<Vec>&)> objective;
  std::function<Vec(const Vec&, const std::vector<Vec>&)> obj_d_alpha;
  // d Psi / d gamma^r; empty function means zero for every block
  std::function<Vec(const Vec&, const std::vector<Vec>&, int r)> obj_d_gamma;

  // triangularity and callback presence; throws Error on violation
  void validate() const;
};

struct ForwardEvaluation {
  std::vector<Vec> gamma;
  double psi = 0.0;
};

// Resolves each block with Newton (explicit-form blocks land in one
// iteration). Residuals are pushed to 1e-12 max norm or BlockSolveFailed.
ForwardEvaluation evaluate_forward(const ConstraintProgram& prog, const Vec& alpha);

struct ReverseResult {
  double value = 0.0;
  Vec gradient;                  // d psi / d alpha
  std::vector<Vec> multipliers;  // one per block
  std::vector<Vec> gamma;
};

ReverseResult reverse_gradient(const ConstraintProgram& prog, const Vec& alpha);

// Directional derivative of psi by forward accumulation through the blocks.
double forward_directional(const ConstraintProgram& prog, const Vec& alpha,
                           const Vec& direction);

struct TerminalCost {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
};

/// Where each trajectory unknown lives in the taped program.
struct RkTapeLayout {
  std::vector<int> node_block;                // x_n for n = 0..N
  std::vector<std::vector<int>> slope_blocks; // per step: s entries, or one
                                              // grouped entry when implicit
};

struct RkTape {
  ConstraintProgram program;
  RkTapeLayout layout;
  RkTableau tableau;
  TimeGrid grid;
  int dim = 0;
};

// Tapes one RK integration plus a terminal cost: one block pinning x_0 to
// alpha, per-step slope blocks (grouped for implicit tableaus), and one block
// per node update. Throws ZeroWeight when any b_i = 0 since the multiplier
// scaling h b_i Lambda breaks down.
RkTape build_rk_tape(const OdeSystem& sys, const RkTableau& tab,
                     const TimeGrid& grid, TerminalCost cost);

struct RkTapeGradient {
  double value = 0.0;
  Vec gradient;
  std::vector<Vec> lambda_nodes;   // multiplier of the x_n blocks, n = 0..N
  std::vector<Mat> stage_multipliers;  // per step, dim x s: mu_{n,i}/(h_n b_i)
};

// Forward evaluation plus reverse pass, with the multipliers rescaled into
// the adjoint-trajectory convention for direct comparison.
RkTapeGradient rk_tape_gradient(const RkTape& tape, const Vec& alpha);

}  // namespace sprk
