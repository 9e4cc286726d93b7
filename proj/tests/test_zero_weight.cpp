#include <cmath>
#include <random>

#include "doctest.h"
#include "sprk/problems.hpp"

using namespace sprk;

namespace {

// frozen gaps between the regularized pair and the limit run on the
// bilinear testbed, q0 = (1, 0.5), p0 = (0.25, -1), 100 steps on [0, 1]
const double kSweepEps[] = {1e-1, 1e-2, 1e-3, 1e-4};
const double kSweepGaps[] = {1.1939731760237043e-1, 1.1545457224300892e-2,
                             1.1503237867279692e-3, 1.1498988525038278e-4};
const double kSweepSlope = 1.0050595824391149;

// frozen endpoints of the same limit run
const double kBilinearQn[] = {0.8468040372587412, -0.5630073045664392};
const double kBilinearPn[] = {-0.6654970843373031, -0.5569121666053769};

// frozen self-convergence errors of the smooth testbed, steps 25..400 on
// [0, 1] against a 12800-step reference, q0 = (0.8, -0.3), p0 = (0.5, 1.1)
const int kSmoothSteps[] = {25, 50, 100, 200, 400};
const double kSmoothErrs[] = {1.0956579120618734e-4, 2.753530372177495e-5,
                              6.901859283193325e-6, 1.7274625445017839e-6,
                              4.3183944804562907e-7};
const double kSmoothSlope = 1.9968729536759873;

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// four stages with the nonzero weights interleaved: b = (0, 0.6, 0, 0.4)
RkTableau interleaved4() {
  Mat a(4, 4);
  a << 0.02, -0.05, 0.11, 0.04,   //
      0.07, 0.03, -0.02, 0.09,    //
      -0.04, 0.08, 0.05, -0.06,   //
      0.10, -0.03, 0.06, 0.02;
  Vec b(4), c(4);
  b << 0.0, 0.6, 0.0, 0.4;
  c = a.rowwise().sum();
  return RkTableau("interleaved4", a, b, c);
}

// the historic two-stage method in its textbook order: the weighted slope
// sits second
RkTableau scrambled_runge() {
  Mat a = Mat::Zero(2, 2);
  a(1, 0) = 0.5;
  Vec b(2), c(2);
  b << 0.0, 1.0;
  c << 0.0, 0.5;
  return RkTableau("runge1895", a, b, c);
}

}  // namespace

TEST_CASE("stage reordering puts the weighted stages first") {
  ZeroWeightScheme ready = make_scheme(builtin_rk("runge1895"));
  CHECK(ready.r == 1);
  CHECK(ready.perm == std::vector<int>{0, 1});

  ZeroWeightScheme fixed = make_scheme(scrambled_runge());
  CHECK(fixed.r == 1);
  CHECK(fixed.perm == std::vector<int>{1, 0});
  RkTableau want = builtin_rk("runge1895");
  CHECK((fixed.base.a - want.a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fixed.base.b - want.b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fixed.base.c - want.c).cwiseAbs().maxCoeff() == 0.0);

  ZeroWeightScheme four = make_scheme(interleaved4());
  CHECK(four.r == 2);
  CHECK(four.perm == std::vector<int>{1, 3, 0, 2});
  CHECK(four.base.b(0) == 0.6);
  CHECK(four.base.b(1) == 0.4);
  CHECK(four.base.b(2) == 0.0);
  CHECK(four.base.b(3) == 0.0);
  CHECK(four.base.a(0, 2) == 0.07);   // source entry a(1, 0)
  CHECK(four.base.a(3, 1) == -0.06);  // source entry a(2, 3)

  RkTableau dead = builtin_rk("runge1895");
  dead.b.setZero();
  CHECK_THROWS_AS(make_scheme(dead), ZeroWeight);
}

TEST_CASE("reordering the stages does not change the integrator") {
  RkTableau tab = interleaved4();
  ZeroWeightScheme scheme = make_scheme(tab);
  TimeGrid grid = TimeGrid::uniform(0.0, 0.15, 3);
  Vec x0 = vec2(1.0, 0.3);
  OdeSystem sys = harmonic_oscillator();
  Trajectory plain = rk_integrate(sys, tab, x0, grid);
  Trajectory sorted = rk_integrate(sys, scheme.base, x0, grid);
  CHECK((plain.nodes.back() - sorted.nodes.back()).cwiseAbs().maxCoeff() <=
        1e-12);
}

TEST_CASE("regularizing the historic method prints the known entry") {
  ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  const double eps = 1e-3;
  PrkTableau pair = epsilon_regularized_pair(scheme, eps);
  CHECK(pair.lower.b(0) == 1.0);
  CHECK(pair.lower.b(1) == eps);
  CHECK(pair.upper.a(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pair.upper.a(0, 1) == doctest::Approx(eps).epsilon(1e-14));
  // the famous blown-up corner entry 1 - 1/(2 eps)
  CHECK(pair.upper.a(1, 0) ==
        doctest::Approx(1.0 - 1.0 / (2.0 * eps)).epsilon(1e-14));
  CHECK(pair.upper.a(1, 1) == doctest::Approx(eps).epsilon(1e-14));
  CHECK((pair.upper.b - pair.lower.b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pair.upper.c - pair.lower.c).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(epsilon_regularized_pair(scheme, 0.0), Error);
}

TEST_CASE("regularized pairs stay symplectic for every epsilon") {
  ZeroWeightScheme runge = make_scheme(builtin_rk("runge1895"));
  for (double eps : {1e-2, 1e-4}) {
    PrkTableau pair = epsilon_regularized_pair(runge, eps);
    CHECK(symplectic_defect(pair).max_defect <= 1e-12);
  }
  ZeroWeightScheme four = make_scheme(interleaved4());
  CHECK(symplectic_defect(epsilon_regularized_pair(four, 1e-3)).max_defect <=
        1e-12);
}

TEST_CASE("epsilon one on a symplectic base returns the self-paired scheme") {
  ZeroWeightScheme scheme = make_scheme(random_symplectic(3, 11));
  CHECK(scheme.r == 3);  // nothing to regularize
  PrkTableau pair = epsilon_regularized_pair(scheme, 1.0);
  CHECK((pair.upper.a - pair.lower.a).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((pair.upper.b - pair.lower.b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pair.upper.c - pair.lower.c).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one step of the limit integrator matches the frozen internals") {
  SpecialPartitionedSystem sys = special_bilinear();
  ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  const double h = 0.01;
  StepResult qstep = rk_step(sys.q_system(), scheme.base, vec2(1.0, 0.5), 0.0, h);
  FancyStep step = fancy_p_step(sys, scheme, qstep.stages, vec2(0.25, -1.0), 0.0, h);

  REQUIRE(step.P.size() == 1);
  REQUIRE(step.m.size() == 1);
  CHECK(std::abs(step.P[0][0] - 0.23998743940017173) <= 1e-13);
  CHECK(std::abs(step.P[0][1] - (-1.0024619968658148)) <= 1e-13);
  CHECK(std::abs(step.m[0][0] - 0.5012309984329074) <= 1e-13);
  CHECK(std::abs(step.m[0][1] - 0.12059368829858629) <= 1e-13);

  // with a single weighted stage the endpoint and its stage value coincide,
  // and the auxiliary is minus half the weighted slope
  CHECK((step.p - step.P[0]).cwiseAbs().maxCoeff() <= 1e-13);
  Vec q1 = qstep.stages.col(0);
  Vec ell = sys.L(q1, 0.5 * h) + sys.M(q1, 0.5 * h) * step.P[0];
  CHECK((step.m[0] + 0.5 * ell).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("a vanishing M leaves a plain quadrature over the weighted stages") {
  SpecialPartitionedSystem sys;
  sys.dim_q = 1;
  sys.dim_p = 2;
  sys.f = [](const Vec& q, double) { return Vec(0.9 * q); };
  sys.f_jac = [](const Vec&, double) { return Mat(0.9 * Mat::Identity(1, 1)); };
  sys.L = [](const Vec& q, double t) {
    return vec2(std::sin(q[0]) + t, q[0] * q[0]);
  };
  sys.M = [](const Vec&, double) { return Mat(Mat::Zero(2, 2)); };

  Vec q0(1);
  q0 << 1.2;
  Vec p0 = vec2(0.4, -0.7);
  const double t = 0.3, h = 0.15;
  for (const RkTableau& tab : {builtin_rk("runge1895"), interleaved4()}) {
    ZeroWeightScheme scheme = make_scheme(tab);
    StepResult qstep = rk_step(sys.q_system(), scheme.base, q0, t, h);
    FancyStep step = fancy_p_step(sys, scheme, qstep.stages, p0, t, h);
    Vec want = p0;
    for (int i = 0; i < scheme.r; ++i)
      want += h * scheme.base.b(i) *
              sys.L(qstep.stages.col(i), t + scheme.base.c(i) * h);
    CHECK((step.p - want).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("the step identity holds for data unrelated to any flow") {
  // bilinear S tested against the step relations alone, with free slopes
  std::mt19937 rng(2468);
  std::normal_distribution<double> pick(0.0, 1.0);
  auto rvec = [&](int n) {
    Vec v(n);
    for (int k = 0; k < n; ++k) v[k] = pick(rng);
    return v;
  };
  auto rmat = [&](int rows, int cols) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = pick(rng);
    return m;
  };

  const int dq = 3, dp = 2;
  const double h = 0.37;
  Mat S = rmat(dq, dp);
  auto bil = [&](const Vec& u, const Vec& v) { return u.dot(S * v); };

  for (const RkTableau& tab : {builtin_rk("runge1895"), interleaved4()}) {
    ZeroWeightScheme scheme = make_scheme(tab);
    const RkTableau& base = scheme.base;
    const int s = base.s, r = scheme.r;

    Vec q = rvec(dq), p = rvec(dp);
    std::vector<Vec> k(s), ell(r);
    for (int i = 0; i < s; ++i) k[i] = rvec(dq);
    for (int j = 0; j < r; ++j) ell[j] = rvec(dp);
    std::vector<Mat> Mz(s - r);
    for (int al = 0; al < s - r; ++al) Mz[al] = rmat(dp, dp);

    std::vector<Vec> m = solve_zero_stage_m(scheme, Mz, ell, h);

    std::vector<Vec> Q(s);
    for (int i = 0; i < s; ++i) {
      Q[i] = q;
      for (int j = 0; j < s; ++j) Q[i] += h * base.a(i, j) * k[j];
    }
    std::vector<Vec> P(r);
    for (int i = 0; i < r; ++i) {
      P[i] = p;
      for (int j = 0; j < r; ++j)
        P[i] += h * (base.b(j) - base.b(j) * base.a(j, i) / base.b(i)) * ell[j];
      for (int al = 0; al < s - r; ++al)
        P[i] += h * h * (1.0 - base.a(r + al, i) / base.b(i)) * (Mz[al] * m[al]);
    }
    Vec q1 = q, p1 = p;
    for (int i = 0; i < s; ++i) q1 += h * base.b(i) * k[i];
    for (int i = 0; i < r; ++i) p1 += h * base.b(i) * ell[i];
    for (int al = 0; al < s - r; ++al) p1 += h * h * (Mz[al] * m[al]);

    double lhs = bil(q1, p1) - bil(q, p);
    for (int i = 0; i < r; ++i)
      lhs -= h * base.b(i) * (bil(k[i], P[i]) + bil(Q[i], ell[i]));
    for (int al = 0; al < s - r; ++al)
      lhs -= h * h *
             (bil(k[r + al], m[al]) + bil(Q[r + al], Mz[al] * m[al]));
    CAPTURE(tab.name);
    CHECK(std::abs(lhs) <= 1e-12);
  }
}

TEST_CASE("the solver output satisfies the same identity on a real system") {
  SpecialPartitionedSystem sys = special_smooth();
  ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  const double t = 0.4, h = 0.23;
  Vec q = vec2(0.7, -0.2), p = vec2(0.3, 0.9);
  StepResult qstep = rk_step(sys.q_system(), scheme.base, q, t, h);
  FancyStep step = fancy_p_step(sys, scheme, qstep.stages, p, t, h);

  Mat S(2, 2);
  S << 0.6, -1.3, 0.2, 0.8;
  auto bil = [&](const Vec& u, const Vec& v) { return u.dot(S * v); };

  std::vector<Vec> ell(scheme.r);
  for (int i = 0; i < scheme.r; ++i) {
    Vec qi = qstep.stages.col(i);
    double ti = t + scheme.base.c(i) * h;
    ell[i] = sys.L(qi, ti) + sys.M(qi, ti) * step.P[i];
  }
  // the combined solve and the standalone auxiliary solve agree
  std::vector<Mat> Mz;
  for (int al = scheme.r; al < scheme.base.s; ++al)
    Mz.push_back(sys.M(qstep.stages.col(al), t + scheme.base.c(al) * h));
  std::vector<Vec> m_alone = solve_zero_stage_m(scheme, Mz, ell, h);
  REQUIRE(m_alone.size() == step.m.size());
  for (size_t al = 0; al < m_alone.size(); ++al)
    CHECK((m_alone[al] - step.m[al]).cwiseAbs().maxCoeff() <= 1e-12);

  double lhs = bil(qstep.x, step.p) - bil(q, p);
  for (int i = 0; i < scheme.r; ++i)
    lhs -= h * scheme.base.b(i) *
           (bil(qstep.slopes.col(i), step.P[i]) +
            bil(qstep.stages.col(i), ell[i]));
  for (int al = 0; al < scheme.base.s - scheme.r; ++al) {
    int idx = scheme.r + al;
    lhs -= h * h *
           (bil(qstep.slopes.col(idx), step.m[al]) +
            bil(qstep.stages.col(idx), Mz[al] * step.m[al]));
  }
  CHECK(std::abs(lhs) <= 1e-12);
}

TEST_CASE("the paired bilinear invariant survives a hundred steps") {
  SpecialPartitionedSystem sys = special_bilinear();
  ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  Vec q0 = vec2(1.0, 0.5), p0 = vec2(0.25, -1.0);
  TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 100);
  FancyTrajectory run = fancy_integrate(sys, scheme, q0, p0, grid);

  const double start = q0.dot(p0);
  double drift = 0.0;
  for (int n = 0; n <= 100; ++n)
    drift = std::max(drift, std::abs(run.nodes_q[n].dot(run.nodes_p[n]) - start));
  CHECK(drift <= 1e-12);

  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(run.nodes_q.back()[k] - kBilinearQn[k]) <= 1e-10);
    CHECK(std::abs(run.nodes_p.back()[k] - kBilinearPn[k]) <= 1e-10);
  }
}

TEST_CASE("regularized runs close on the limit integrator at first order") {
  SpecialPartitionedSystem sys = special_bilinear();
  ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  Vec q0 = vec2(1.0, 0.5), p0 = vec2(0.25, -1.0);
  TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 100);
  LimitReport report = limit_validation(
      sys, scheme, q0, p0, grid, {kSweepEps[0], kSweepEps[1], kSweepEps[2], kSweepEps[3]});

  REQUIRE(report.rows.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CAPTURE(kSweepEps[k]);
    CHECK(report.rows[k].gap == doctest::Approx(kSweepGaps[k]).epsilon(1e-6));
  }
  REQUIRE(report.fit.has_value());
  CHECK(report.fit->slope == doctest::Approx(kSweepSlope).epsilon(2e-3));
  CHECK(report.fit->slope == doctest::Approx(1.0).epsilon(0.3));
  // four decades of eps buy three decades of gap
  CHECK(report.rows[3].gap <= 1e-3 * report.rows[0].gap * 10.0);
}

TEST_CASE("the closure rate carries over to a nonlinear system") {
  SpecialPartitionedSystem sys = special_smooth();
  ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 50);
  LimitReport report = limit_validation(sys, scheme, vec2(0.8, -0.3),
                                        vec2(0.5, 1.1), grid, {1e-2, 1e-3});
  REQUIRE(report.rows.size() == 2);
  REQUIRE(report.fit.has_value());
  CHECK(report.fit->slope == doctest::Approx(1.0).epsilon(0.3));
}

TEST_CASE("a single epsilon yields a bare gap without a fit") {
  SpecialPartitionedSystem sys = special_bilinear();
  ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  LimitReport report =
      limit_validation(sys, scheme, vec2(1.0, 0.5), vec2(0.25, -1.0),
                       TimeGrid::uniform(0.0, 1.0, 100), {1e-2});
  REQUIRE(report.rows.size() == 1);
  CHECK(!report.fit.has_value());
  CHECK(std::abs(report.rows[0].gap - kSweepGaps[1]) <= 1e-9);
}

TEST_CASE("one linear step matches the regularized step to first order") {
  SpecialPartitionedSystem sys;
  sys.dim_q = 1;
  sys.dim_p = 1;
  sys.f = [](const Vec& q, double) { return Vec(0.7 * q); };
  sys.f_jac = [](const Vec&, double) { return Mat(0.7 * Mat::Identity(1, 1)); };
  sys.L = [](const Vec& q, double) { return Vec(0.3 * q); };
  sys.M = [](const Vec&, double) { return Mat(1.1 * Mat::Identity(1, 1)); };

  ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  Vec one = Vec::Ones(1);
  TimeGrid grid = TimeGrid::uniform(0.0, 0.2, 1);
  FancyTrajectory lim = fancy_integrate(sys, scheme, one, one, grid);
  CHECK(std::abs(lim.nodes_p[1][0] - 1.3145212633673216) <= 1e-12);

  PartitionedSystem part = sys.as_partitioned();
  double diff[3];
  const double epss[3] = {1e-2, 1e-3, 1e-4};
  for (int k = 0; k < 3; ++k) {
    PrkTableau pair = epsilon_regularized_pair(scheme, epss[k]);
    PrkTrajectory run = prk_integrate(part, pair, one, one, grid);
    diff[k] = std::abs(run.nodes_p[1][0] - lim.nodes_p[1][0]);
  }
  // each decade of eps removes a decade of gap
  CHECK(diff[0] / diff[1] == doctest::Approx(10.0).epsilon(0.05));
  CHECK(diff[1] / diff[2] == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("the smooth testbed converges one order above the promise") {
  SpecialPartitionedSystem sys = special_smooth();
  ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  Vec q0 = vec2(0.8, -0.3), p0 = vec2(0.5, 1.1);

  FancyTrajectory ref =
      fancy_integrate(sys, scheme, q0, p0, TimeGrid::uniform(0.0, 1.0, 12800));

  std::vector<double> hs, errs;
  for (int k = 0; k < 5; ++k) {
    int n = kSmoothSteps[k];
    FancyTrajectory run =
        fancy_integrate(sys, scheme, q0, p0, TimeGrid::uniform(0.0, 1.0, n));
    double err = std::max((run.nodes_q.back() - ref.nodes_q.back()).norm(),
                          (run.nodes_p.back() - ref.nodes_p.back()).norm());
    CHECK(err == doctest::Approx(kSmoothErrs[k]).epsilon(1e-3));
    hs.push_back(1.0 / n);
    errs.push_back(err);
    if (k > 0) CHECK(err < errs[k - 1]);
  }

  auto fit = fit_loglog(hs, errs);
  REQUIRE(fit.has_value());
  // promised at least first order; the measured rate is second
  CHECK(fit->slope >= 0.8);
  CHECK(fit->slope == doctest::Approx(kSmoothSlope).epsilon(1e-3));
}

TEST_CASE("malformed inputs and degenerate systems are refused") {
  SpecialPartitionedSystem empty;
  ZeroWeightScheme scheme = make_scheme(builtin_rk("runge1895"));
  CHECK_THROWS_AS(
      fancy_integrate(empty, scheme, Vec::Ones(2), Vec::Ones(2),
                      TimeGrid::uniform(0.0, 1.0, 2)),
      Error);

  SpecialPartitionedSystem sys = special_bilinear();
  CHECK_THROWS_AS(
      fancy_p_step(sys, scheme, Mat::Zero(2, 3), Vec::Ones(2), 0.0, 0.1),
      GridMismatch);
  CHECK_THROWS_AS(
      fancy_p_step(sys, scheme, Mat::Zero(2, 2), Vec::Ones(3), 0.0, 0.1),
      GridMismatch);
  CHECK_THROWS_AS(
      solve_zero_stage_m(scheme, {}, {Vec::Ones(2), Vec::Ones(2)}, 0.1),
      GridMismatch);

  // an auxiliary block tuned to cancel its own identity
  Mat a = Mat::Zero(2, 2);
  a(1, 1) = 0.3;
  Vec b(2), c(2);
  b << 1.0, 0.0;
  c << 0.0, 0.3;
  ZeroWeightScheme decoupled = make_scheme(RkTableau("decoupled", a, b, c));
  const double h = 0.1;
  Mat bad = Mat(-(1.0 / (h * 0.3)) * Mat::Identity(2, 2));
  CHECK_THROWS_AS(
      solve_zero_stage_m(decoupled, {bad}, {Vec::Ones(2)}, h),
      SingularMSystem);

  SpecialPartitionedSystem sing;
  sing.dim_q = 1;
  sing.dim_p = 2;
  sing.f = [](const Vec&, double) { return Vec(Vec::Zero(1)); };
  sing.L = [](const Vec&, double) { return Vec(Vec::Ones(2)); };
  sing.M = [bad](const Vec&, double) { return bad; };
  CHECK_THROWS_AS(
      fancy_p_step(sing, decoupled, Mat::Zero(1, 2), Vec::Zero(2), 0.0, h),
      SingularMSystem);
}
