#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sprk/errors.hpp"

namespace sprk {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Butcher tableau (a, b, c) with s stages.
struct RkTableau {
  std::string name;
  int s = 0;
  Mat a;  // s x s
  Vec b;  // s
  Vec c;  // s

  RkTableau() = default;
  RkTableau(std::string name, Mat a, Vec b, Vec c);

  // true when a is strictly lower triangular, so stages resolve sequentially
  bool explicit_stages() const;
};

/// Pair of tableaus for a partitioned step: `lower` advances the first block
/// of variables, `upper` the second.
struct PrkTableau {
  std::string name;
  RkTableau lower;
  RkTableau upper;
};

/// Defects of the algebraic conditions that make a scheme preserve
/// quadratic invariants. All entries are zero for a symplectic scheme.
struct SymplecticnessReport {
  Mat coupling;          // per-entry defect, s x s
  Vec weight_defect;     // b_i - B_i (pairs only, empty for a single tableau)
  Vec abscissa_defect;   // c_i - C_i (pairs only)
  double max_defect = 0.0;       // couplings and weights
  double max_defect_full = 0.0;  // also abscissae (matters off autonomous problems)

  bool symplectic(double tol = 1e-14) const { return max_defect <= tol; }
  bool symplectic_nonautonomous(double tol = 1e-14) const {
    return max_defect_full <= tol;
  }
};

// defect(i,j) = b_i a_ij + b_j a_ji - b_i b_j
SymplecticnessReport symplectic_defect(const RkTableau& tab);
// weight_defect_i = b_i - B_i, coupling(i,j) = b_i A_ij + B_j a_ji - b_i B_j,
// abscissa_defect_i = c_i - C_i
SymplecticnessReport symplectic_defect(const PrkTableau& ptab);

// a^r_ij = b_j - a_ij, b^r = b, c^r = 1 - c; an involution
RkTableau reflect(const RkTableau& tab);
// a^t_ij = b_j a_ji / b_i, b^t = b, c^t = 1 - c; an involution, needs b_i != 0
RkTableau transpose(const RkTableau& tab);
// Pairs `tab` with the scheme that integrates the adjoint variables so the
// discrete pairing is exact: A_ij = b_j - b_j a_ji / b_i, B = b, C = c.
// Equals reflect(transpose(tab)) on the coefficient matrix. Needs b_i != 0.
// A symplectic tableau is paired with itself.
PrkTableau adjoint_partner(const RkTableau& tab);

using OrderResiduals = std::vector<std::pair<std::string, double>>;

// residuals of the order conditions through order 3, plus the per-stage
// abscissa consistency defect c_i - sum_j a_ij (reported, not a condition)
OrderResiduals order_residuals(const RkTableau& tab);
// residuals of the coupled conditions through order 2
OrderResiduals order_residuals(const PrkTableau& ptab);

const std::vector<std::string>& catalog_rk();
const std::vector<std::string>& catalog_prk();
RkTableau builtin_rk(const std::string& name);    // throws UnknownTableau
PrkTableau builtin_prk(const std::string& name);  // throws UnknownTableau
std::variant<RkTableau, PrkTableau> builtin(const std::string& name);

/// Random tableau that satisfies the symplecticness conditions exactly:
/// weights are drawn nonzero and rescaled to sum to one, the strict lower
/// triangle of `a` is free, a_ii = b_i / 2, and the upper triangle solves the
/// defect equations. Abscissae are the row sums.
RkTableau random_symplectic(int s, std::uint64_t seed);

// JSON: {"name", "s", "a" (row-major), "b", "c"}; pairs {"name", "lower", "upper"}
std::string to_json(const RkTableau& tab, int indent = 2);
std::string to_json(const PrkTableau& ptab, int indent = 2);
RkTableau rk_from_json(const std::string& text);
PrkTableau prk_from_json(const std::string& text);
// reads either shape from a file
std::variant<RkTableau, PrkTableau> load_tableau(const std::string& path);
// accepts a catalog name or a path to a JSON file
std::variant<RkTableau, PrkTableau> resolve_tableau(const std::string& name_or_path);

}  // namespace sprk
