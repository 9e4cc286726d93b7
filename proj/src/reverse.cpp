#include "sprk/reverse.hpp"

#include <cmath>
#include <memory>

namespace sprk {

namespace {

constexpr double kBlockTol = 1e-12;
constexpr int kMaxNewton = 60;

Mat d_alpha_or_zero(const ConstraintBlock& blk, const Vec& alpha,
                    const std::vector<Vec>& gamma, int n_independent) {
  if (blk.d_alpha) return blk.d_alpha(alpha, gamma);
  return Mat::Zero(blk.size, n_independent);
}

}  // namespace

void ConstraintProgram::validate() const {
  for (std::size_t r = 0; r < blocks.size(); ++r) {
    const ConstraintBlock& blk = blocks[r];
    if (blk.size <= 0) throw Error("block " + blk.label + ": empty");
    if (!blk.residual || !blk.d_gamma)
      throw Error("block " + blk.label + ": missing callbacks");
    for (int q : blk.deps)
      if (q < 0 || q >= static_cast<int>(r))
        throw Error("block " + blk.label + ": dependency " +
                    std::to_string(q) + " is not an earlier block");
  }
  if (!objective) throw Error("program has no objective");
}

ForwardEvaluation evaluate_forward(const ConstraintProgram& prog,
                                   const Vec& alpha) {
  prog.validate();
  ForwardEvaluation out;
  out.gamma.resize(prog.blocks.size());
  for (std::size_t r = 0; r < prog.blocks.size(); ++r) {
    const ConstraintBlock& blk = prog.blocks[r];
    out.gamma[r] =
        blk.guess ? blk.guess(alpha, out.gamma) : Vec::Zero(blk.size);
    Vec R = blk.residual(alpha, out.gamma);
    double res = R.lpNorm<Eigen::Infinity>();
    for (int it = 0; res > kBlockTol && it < kMaxNewton; ++it) {
      Mat J = blk.d_gamma(alpha, out.gamma, static_cast<int>(r));
      Eigen::FullPivLU<Mat> lu(J);
      if (!lu.isInvertible())
        throw BlockSolveFailed(blk.label, "singular block jacobian");
      Vec prev = out.gamma[r];
      out.gamma[r] -= lu.solve(R);
      R = blk.residual(alpha, out.gamma);
      double next = R.lpNorm<Eigen::Infinity>();
      if (!std::isfinite(next))
        throw BlockSolveFailed(blk.label, "residual is not finite");
      if (next >= res) {
        out.gamma[r] = std::move(prev);  // keep the better iterate
        break;
      }
      res = next;
    }
    if (res > kBlockTol)
      throw BlockSolveFailed(
          blk.label, "residual " + std::to_string(res) + " above tolerance");
  }
  out.psi = prog.objective(alpha, out.gamma);
  return out;
}

ReverseResult reverse_gradient(const ConstraintProgram& prog, const Vec& alpha) {
  ForwardEvaluation fwd = evaluate_forward(prog, alpha);
  const int R = static_cast<int>(prog.blocks.size());

  // reverse adjacency: readers[r] = later blocks whose residual reads gamma^r
  std::vector<std::vector<int>> readers(R);
  for (int q = 0; q < R; ++q)
    for (int r : prog.blocks[q].deps) readers[r].push_back(q);

  ReverseResult out;
  out.value = fwd.psi;
  out.gamma = fwd.gamma;
  out.multipliers.resize(R);
  for (int r = R - 1; r >= 0; --r) {
    const ConstraintBlock& blk = prog.blocks[r];
    Vec rhs = Vec::Zero(blk.size);
    if (prog.obj_d_gamma) rhs = -prog.obj_d_gamma(alpha, fwd.gamma, r);
    for (int q : readers[r])
      rhs -= prog.blocks[q].d_gamma(alpha, fwd.gamma, r).transpose() *
             out.multipliers[q];
    Mat diag = blk.d_gamma(alpha, fwd.gamma, r);
    Eigen::FullPivLU<Mat> lu(diag.transpose());
    if (!lu.isInvertible()) throw SingularBlock(blk.label);
    out.multipliers[r] = lu.solve(rhs);
  }

  out.gradient = prog.obj_d_alpha ? prog.obj_d_alpha(alpha, fwd.gamma)
                                  : Vec::Zero(prog.n_independent);
  for (int r = 0; r < R; ++r)
    out.gradient +=
        d_alpha_or_zero(prog.blocks[r], alpha, fwd.gamma, prog.n_independent)
            .transpose() *
        out.multipliers[r];
  return out;
}

double forward_directional(const ConstraintProgram& prog, const Vec& alpha,
                           const Vec& direction) {
  ForwardEvaluation fwd = evaluate_forward(prog, alpha);
  const int R = static_cast<int>(prog.blocks.size());
  std::vector<Vec> dgamma(R);
  for (int r = 0; r < R; ++r) {
    const ConstraintBlock& blk = prog.blocks[r];
    Vec rhs =
        d_alpha_or_zero(blk, alpha, fwd.gamma, prog.n_independent) * direction;
    for (int q : blk.deps)
      rhs += blk.d_gamma(alpha, fwd.gamma, q) * dgamma[q];
    Mat diag = blk.d_gamma(alpha, fwd.gamma, r);
    Eigen::FullPivLU<Mat> lu(diag);
    if (!lu.isInvertible()) throw SingularBlock(blk.label);
    dgamma[r] = lu.solve(-rhs);
  }
  double dpsi = prog.obj_d_alpha
                    ? prog.obj_d_alpha(alpha, fwd.gamma).dot(direction)
                    : 0.0;
  if (prog.obj_d_gamma)
    for (int r = 0; r < R; ++r)
      dpsi += prog.obj_d_gamma(alpha, fwd.gamma, r).dot(dgamma[r]);
  return dpsi;
}

RkTape build_rk_tape(const OdeSystem& sys, const RkTableau& tab,
                     const TimeGrid& grid, TerminalCost cost) {
  for (int i = 0; i < tab.s; ++i)
    if (tab.b(i) == 0.0) throw ZeroWeight(i);
  if (!sys.has_jacobian())
    throw MissingJacobian("taping needs a state Jacobian");

  // blocks share the system and tableau; keeps the tape self-contained even
  // if the caller's objects go away
  auto sy = std::make_shared<OdeSystem>(sys);
  auto tb = std::make_shared<RkTableau>(tab);

  RkTape tape;
  tape.tableau = tab;
  tape.grid = grid;
  tape.dim = sys.dim;
  const int d = sys.dim, s = tab.s, N = grid.n_steps();
  const bool grouped = !tab.explicit_stages();

  ConstraintProgram& prog = tape.program;
  prog.n_independent = d;

  // block 0 pins x_0 to alpha
  {
    ConstraintBlock blk;
    blk.label = "x0";
    blk.size = d;
    blk.residual = [](const Vec& alpha, const std::vector<Vec>& gamma) {
      return Vec(alpha - gamma[0]);
    };
    blk.d_alpha = [d](const Vec&, const std::vector<Vec>&) {
      return Mat(Mat::Identity(d, d));
    };
    blk.d_gamma = [d](const Vec&, const std::vector<Vec>&, int) {
      return Mat(-Mat::Identity(d, d));
    };
    blk.guess = [](const Vec& alpha, const std::vector<Vec>&) { return alpha; };
    prog.blocks.push_back(std::move(blk));
  }
  tape.layout.node_block.push_back(0);

  for (int n = 0; n < N; ++n) {
    const double t = grid.nodes[n], h = grid.steps[n];
    const int xn = tape.layout.node_block.back();
    std::vector<int> slope_ids;

    if (grouped) {
      // all slopes of the step as one implicit block of size s*d:
      // residual_i = f(X_i) - k_i with X_i = x_n + h sum_j a_ij k_j
      ConstraintBlock blk;
      blk.label = "k" + std::to_string(n);
      blk.size = s * d;
      blk.deps = {xn};
      blk.implicit = true;
      const int self = static_cast<int>(prog.blocks.size());
      auto stage_values = [=](const std::vector<Vec>& gamma) {
        Mat X(d, s);
        for (int i = 0; i < s; ++i) {
          Vec xi = gamma[xn];
          for (int j = 0; j < s; ++j)
            xi += h * tb->a(i, j) * gamma[self].segment(j * d, d);
          X.col(i) = xi;
        }
        return X;
      };
      blk.residual = [=](const Vec&, const std::vector<Vec>& gamma) {
        Mat X = stage_values(gamma);
        Vec r(s * d);
        for (int i = 0; i < s; ++i)
          r.segment(i * d, d) =
              sy->f(X.col(i), t + tb->c(i) * h) - gamma[self].segment(i * d, d);
        return r;
      };
      blk.d_gamma = [=](const Vec&, const std::vector<Vec>& gamma, int q) {
        Mat X = stage_values(gamma);
        if (q == xn) {
          Mat out(s * d, d);
          for (int i = 0; i < s; ++i)
            out.middleRows(i * d, d) = sy->jac(X.col(i), t + tb->c(i) * h);
          return out;
        }
        Mat out = Mat::Zero(s * d, s * d);
        for (int i = 0; i < s; ++i) {
          Mat Ji = sy->jac(X.col(i), t + tb->c(i) * h);
          for (int j = 0; j < s; ++j) {
            out.block(i * d, j * d, d, d) = h * tb->a(i, j) * Ji;
            if (i == j) out.block(i * d, j * d, d, d) -= Mat::Identity(d, d);
          }
        }
        return out;
      };
      blk.guess = [=](const Vec&, const std::vector<Vec>& gamma) {
        Vec k0 = sy->f(gamma[xn], t);
        return Vec(k0.replicate(s, 1));
      };
      prog.blocks.push_back(std::move(blk));
      slope_ids.push_back(self);
    } else {
      for (int i = 0; i < s; ++i) {
        ConstraintBlock blk;
        blk.label = "k" + std::to_string(n) + "_" + std::to_string(i);
        blk.size = d;
        blk.deps.push_back(xn);
        for (int j = 0; j < i; ++j) blk.deps.push_back(slope_ids[j]);
        const int self = static_cast<int>(prog.blocks.size());
        std::vector<int> earlier = slope_ids;
        auto stage_value = [=](const std::vector<Vec>& gamma) {
          Vec xi = gamma[xn];
          for (int j = 0; j < i; ++j)
            xi += h * tb->a(i, j) * gamma[earlier[j]];
          return xi;
        };
        const double ti = t + tab.c(i) * h;
        blk.residual = [=](const Vec&, const std::vector<Vec>& gamma) {
          return Vec(sy->f(stage_value(gamma), ti) - gamma[self]);
        };
        blk.d_gamma = [=](const Vec&, const std::vector<Vec>& gamma, int q) {
          if (q == self) return Mat(-Mat::Identity(d, d));
          Mat Ji = sy->jac(stage_value(gamma), ti);
          if (q == xn) return Ji;
          for (int j = 0; j < i; ++j)
            if (earlier[j] == q) return Mat(h * tb->a(i, j) * Ji);
          return Mat(Mat::Zero(d, d));
        };
        blk.guess = [=](const Vec&, const std::vector<Vec>& gamma) {
          return sy->f(stage_value(gamma), ti);
        };
        prog.blocks.push_back(std::move(blk));
        slope_ids.push_back(self);
      }
    }

    // node block: x_n + h sum_i b_i k_{n,i} - x_{n+1} = 0
    ConstraintBlock blk;
    blk.label = "x" + std::to_string(n + 1);
    blk.size = d;
    blk.deps = slope_ids;
    blk.deps.push_back(xn);
    const int self = static_cast<int>(prog.blocks.size());
    const bool grp = grouped;
    std::vector<int> slopes = slope_ids;
    auto weighted_sum = [=](const std::vector<Vec>& gamma) {
      Vec x = gamma[xn];
      for (int i = 0; i < s; ++i) {
        Vec ki = grp ? Vec(gamma[slopes[0]].segment(i * d, d))
                     : gamma[slopes[i]];
        x += h * tb->b(i) * ki;
      }
      return x;
    };
    blk.residual = [=](const Vec&, const std::vector<Vec>& gamma) {
      return Vec(weighted_sum(gamma) - gamma[self]);
    };
    blk.d_gamma = [=](const Vec&, const std::vector<Vec>&, int q) {
      if (q == self) return Mat(-Mat::Identity(d, d));
      if (q == xn) return Mat(Mat::Identity(d, d));
      if (grp) {
        Mat out(d, s * d);
        for (int i = 0; i < s; ++i)
          out.middleCols(i * d, d) = h * tb->b(i) * Mat::Identity(d, d);
        return out;
      }
      for (int i = 0; i < s; ++i)
        if (slopes[i] == q) return Mat(h * tb->b(i) * Mat::Identity(d, d));
      return Mat(Mat::Zero(d, d));
    };
    blk.guess = [=](const Vec&, const std::vector<Vec>& gamma) {
      return weighted_sum(gamma);
    };
    prog.blocks.push_back(std::move(blk));
    tape.layout.node_block.push_back(self);
    tape.layout.slope_blocks.push_back(std::move(slope_ids));
  }

  const int last = tape.layout.node_block.back();
  prog.objective = [cost, last](const Vec&, const std::vector<Vec>& gamma) {
    return cost.value(gamma[last]);
  };
  prog.obj_d_alpha = [d](const Vec&, const std::vector<Vec>&) {
    return Vec(Vec::Zero(d));
  };
  prog.obj_d_gamma = [cost, last](const Vec&, const std::vector<Vec>& gamma,
                                  int r) {
    if (r == last) return cost.gradient(gamma[last]);
    return Vec(Vec::Zero(gamma[r].size()));
  };
  return tape;
}

RkTapeGradient rk_tape_gradient(const RkTape& tape, const Vec& alpha) {
  ReverseResult rev = reverse_gradient(tape.program, alpha);
  RkTapeGradient out;
  out.value = rev.value;
  out.gradient = rev.gradient;
  const int N = tape.grid.n_steps(), s = tape.tableau.s, d = tape.dim;

  out.lambda_nodes.reserve(N + 1);
  for (int n = 0; n <= N; ++n)
    out.lambda_nodes.push_back(rev.multipliers[tape.layout.node_block[n]]);

  out.stage_multipliers.reserve(N);
  for (int n = 0; n < N; ++n) {
    const double h = tape.grid.steps[n];
    const std::vector<int>& ids = tape.layout.slope_blocks[n];
    Mat Lambda(d, s);
    for (int i = 0; i < s; ++i) {
      Vec mu = ids.size() == 1
                   ? Vec(rev.multipliers[ids[0]].segment(i * d, d))
                   : rev.multipliers[ids[i]];
      Lambda.col(i) = mu / (h * tape.tableau.b(i));
    }
    out.stage_multipliers.push_back(std::move(Lambda));
  }
  return out;
}

}  // namespace sprk
