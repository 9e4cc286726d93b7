#include <cmath>
#include <random>

#include "doctest.h"
#include "sprk/ode.hpp"
#include "sprk/problems.hpp"

using namespace sprk;

namespace {

QuadraticForm half_norm2(int d) { return {0.5 * Mat::Identity(d, d)}; }
QuadraticForm pairing(int d) { return {Mat::Identity(d, d)}; }

// frozen endpoint of the predator-prey run to T = 1 (fine-step reference)
const double kLotkaRefX1 = 5.007428381144103;
const double kLotkaRefX2 = 7.741066071518767;

}  // namespace

TEST_CASE("time grid construction and validation") {
  TimeGrid g = TimeGrid::uniform(0.0, 1.0, 10);
  CHECK(g.n_steps() == 10);
  CHECK(g.nodes.size() == 11);
  CHECK(g.nodes.front() == 0.0);
  CHECK(g.nodes.back() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(g.same_as(TimeGrid::uniform(0.0, 1.0, 10)));
  CHECK_FALSE(g.same_as(TimeGrid::uniform(0.0, 1.0, 5)));

  CHECK_THROWS_AS(TimeGrid(0.0, {0.1, -0.1}), Error);
  CHECK_THROWS_AS(TimeGrid(0.0, {0.0}), Error);
  CHECK_THROWS_AS(TimeGrid::uniform(0.0, 1.0, 0), Error);
}

TEST_CASE("explicit euler on a rotation gains energy by (h^2/2)|y|^2 per step") {
  OdeSystem sys = harmonic_oscillator();
  RkTableau euler = builtin_rk("euler");
  Vec y0(2);
  y0 << 1.3, -0.4;
  TimeGrid grid = TimeGrid::uniform(0.0, 2.0, 40);
  Trajectory traj = rk_integrate(sys, euler, y0, grid);

  DriftReport drift = quadratic_drift(traj, half_norm2(2));
  for (int n = 0; n < grid.n_steps(); ++n) {
    double h = grid.steps[n];
    double expect = 0.5 * h * h * traj.nodes[n].squaredNorm();
    CHECK(drift.per_step[n] == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("midpoint conserves quadratic invariants to stage-solve accuracy") {
  OdeSystem sys = harmonic_oscillator();
  RkTableau mid = builtin_rk("midpoint");
  Vec y0(2);
  y0 << 2.0, 1.0;
  Trajectory traj = rk_integrate(sys, mid, y0, TimeGrid::uniform(0.0, 10.0, 1000));
  DriftReport drift = quadratic_drift(traj, half_norm2(2));
  CHECK(drift.max_abs <= 1e-13);
}

TEST_CASE("sourced quadratic balance is exact for conserving tableaus") {
  // d/dt (|y|^2/2) = y2 sin t along the forced rotation
  OdeSystem sys = forced_rotation();
  Vec y0(2);
  y0 << 1.0, 0.5;
  auto phi = [](const Vec& y, double t) { return y[1] * std::sin(t); };
  for (const char* name : {"midpoint", "gauss2"}) {
    RkTableau tab = builtin_rk(name);
    Trajectory traj = rk_integrate(sys, tab, y0, TimeGrid::uniform(0.0, 3.0, 300));
    DriftReport drift = quadratic_drift(traj, half_norm2(2), phi);
    CAPTURE(name);
    CHECK(drift.max_abs <= 1e-12);
  }
  // explicit euler does not satisfy the balance; the defect is O(h^2)
  RkTableau euler = builtin_rk("euler");
  Trajectory traj = rk_integrate(sys, euler, y0, TimeGrid::uniform(0.0, 3.0, 300));
  CHECK(quadratic_drift(traj, half_norm2(2), phi).max_abs > 1e-6);
}

TEST_CASE("implicit euler solves a stiff linear step exactly") {
  OdeSystem sys;
  sys.dim = 1;
  const double lambda = -1e6;
  sys.f = [=](const Vec& x, double) { return Vec(lambda * x); };
  sys.jac = [=](const Vec&, double) { return Mat(Mat::Constant(1, 1, lambda)); };
  Vec x0 = Vec::Constant(1, 15.0);
  StepResult r = rk_step(sys, builtin_rk("implicit-euler"), x0, 0.0, 0.1);
  // x1 = x0 / (1 - h lambda)
  CHECK(r.x[0] == doctest::Approx(15.0 / (1.0 + 1e5)).epsilon(1e-13));
}

TEST_CASE("fixed-point fallback matches the Newton path on a mild problem") {
  OdeSystem with_jac = lotka_volterra();
  OdeSystem without = with_jac;
  without.jac = nullptr;
  RkTableau mid = builtin_rk("midpoint");
  TimeGrid grid = TimeGrid::uniform(0.0, 0.2, 200);
  Trajectory a = rk_integrate(with_jac, mid, lotka_start(), grid);
  Trajectory b = rk_integrate(without, mid, lotka_start(), grid);
  CHECK((a.nodes.back() - b.nodes.back()).lpNorm<Eigen::Infinity>() <= 1e-11);
}

TEST_CASE("stage solve failure surfaces instead of returning garbage") {
  OdeSystem sys;
  sys.dim = 1;
  sys.f = [](const Vec& x, double) { return Vec(5.0 * x); };  // no jacobian
  Vec x0 = Vec::Ones(1);
  // h a L = 2.5 > 1, the contraction fails no matter the damping
  CHECK_THROWS_AS(rk_step(sys, builtin_rk("midpoint"), x0, 0.0, 1.0),
                  StageSolveFailed);
}

TEST_CASE("non-finite slopes are rejected") {
  OdeSystem sys;
  sys.dim = 1;
  sys.f = [](const Vec&, double) {
    return Vec(Vec::Constant(1, std::nan("")));
  };
  CHECK_THROWS_AS(rk_step(sys, builtin_rk("euler"), Vec::Ones(1), 0.0, 0.1),
                  NonFiniteValue);
}

TEST_CASE("trajectory stores enough to reconstruct every update") {
  OdeSystem sys = lotka_volterra();
  RkTableau tab = builtin_rk("gauss2");
  TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 50);
  Trajectory traj = rk_integrate(sys, tab, lotka_start(), grid);
  REQUIRE(traj.nodes.size() == 51);
  REQUIRE(traj.stages.size() == 50);
  for (int n = 0; n < 50; ++n) {
    Vec rebuilt = traj.nodes[n];
    for (int i = 0; i < tab.s; ++i)
      rebuilt += grid.steps[n] * tab.b[i] * traj.slopes[n].col(i);
    CHECK((rebuilt - traj.nodes[n + 1]).lpNorm<Eigen::Infinity>() <= 1e-13);
    // stages satisfy their defining relations
    for (int i = 0; i < tab.s; ++i) {
      Vec xi = traj.nodes[n];
      for (int j = 0; j < tab.s; ++j)
        xi += grid.steps[n] * tab.a(i, j) * traj.slopes[n].col(j);
      CHECK((xi - traj.stages[n].col(i)).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
}

TEST_CASE("fourth-order runs hit the fine-step reference endpoint") {
  OdeSystem sys = lotka_volterra();
  TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 1000);
  for (const char* name : {"gauss2", "rk4"}) {
    Trajectory traj = rk_integrate(sys, builtin_rk(name), lotka_start(), grid);
    CAPTURE(name);
    CHECK(traj.nodes.back()[0] == doctest::Approx(kLotkaRefX1).epsilon(1e-8));
    CHECK(traj.nodes.back()[1] == doctest::Approx(kLotkaRefX2).epsilon(1e-8));
  }
}

TEST_CASE("partitioned verlet equals the leapfrog three-liner") {
  PartitionedSystem sys = separable_oscillator();
  PrkTableau verlet = builtin_prk("verlet");
  double h = 0.1;
  Vec q = Vec::Constant(1, 0.7), p = Vec::Constant(1, -0.3);
  double t = 0.0;
  for (int n = 0; n < 25; ++n) {
    Vec p_half = p + 0.5 * h * sys.g(q, p, t);
    Vec q_next = q + h * p_half;
    Vec p_next = p_half + 0.5 * h * sys.g(q_next, p, t + h);
    PrkStepResult r = prk_step(sys, verlet, q, p, t, h);
    CHECK((r.q - q_next).lpNorm<Eigen::Infinity>() <= 1e-13);
    CHECK((r.p - p_next).lpNorm<Eigen::Infinity>() <= 1e-13);
    q = r.q;
    p = r.p;
    t += h;
  }
}

TEST_CASE("identical lower and upper tableaus reduce to the stacked system") {
  PartitionedSystem psys = bilinear_qp();
  RkTableau tab = builtin_rk("gauss2");
  PrkTableau pair{"gauss2-pair", tab, tab};

  OdeSystem stacked;
  stacked.dim = 4;
  stacked.f = [&](const Vec& y, double t) {
    Vec out(4);
    out.head(2) = psys.f(y.head(2), y.tail(2), t);
    out.tail(2) = psys.g(y.head(2), y.tail(2), t);
    return out;
  };
  stacked.jac = [&](const Vec& y, double t) {
    Mat j(4, 4);
    j.topLeftCorner(2, 2) = psys.fq(y.head(2), y.tail(2), t);
    j.topRightCorner(2, 2) = psys.fp(y.head(2), y.tail(2), t);
    j.bottomLeftCorner(2, 2) = psys.gq(y.head(2), y.tail(2), t);
    j.bottomRightCorner(2, 2) = psys.gp(y.head(2), y.tail(2), t);
    return j;
  };

  Vec q0(2), p0(2);
  q0 << 1.0, 0.5;
  p0 << 0.25, -1.0;
  Vec y0(4);
  y0 << q0, p0;
  TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 100);
  PrkTrajectory pt = prk_integrate(psys, pair, q0, p0, grid);
  Trajectory st = rk_integrate(stacked, tab, y0, grid);
  double worst = 0.0;
  for (int n = 0; n <= 100; ++n) {
    Vec y(4);
    y << pt.nodes_q[n], pt.nodes_p[n];
    worst = std::max(worst, (y - st.nodes[n]).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("paired tableaus conserve the bilinear pairing q.p") {
  PartitionedSystem sys = bilinear_qp();
  Vec q0(2), p0(2);
  q0 << 1.0, 0.5;
  p0 << 0.25, -1.0;
  TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 100);

  PrkTableau partner = adjoint_partner(builtin_rk("euler"));
  RkTableau g2 = builtin_rk("gauss2");
  for (const PrkTableau& pair : {partner, PrkTableau{"g2", g2, g2}}) {
    PrkTrajectory traj = prk_integrate(sys, pair, q0, p0, grid);
    DriftReport drift = quadratic_drift(traj, pairing(2));
    CAPTURE(pair.name);
    CHECK(drift.max_abs <= 1e-14);
    CHECK(std::abs(traj.nodes_q.back().dot(traj.nodes_p.back()) - q0.dot(p0)) <=
          1e-13);
  }
}

TEST_CASE("unpaired euler/euler drifts by exactly -h^2 (Mq).(M^T p)") {
  PartitionedSystem sys = bilinear_qp();
  RkTableau euler = builtin_rk("euler");
  PrkTableau pair{"euler-both", euler, euler};
  Vec q0(2), p0(2);
  q0 << 1.0, 0.5;
  p0 << 0.25, -1.0;
  TimeGrid grid = TimeGrid::uniform(0.0, 0.5, 50);
  PrkTrajectory traj = prk_integrate(sys, pair, q0, p0, grid);
  DriftReport drift = quadratic_drift(traj, pairing(2));
  for (int n = 0; n < 50; ++n) {
    double t = grid.nodes[n], h = grid.steps[n];
    Mat m = bilinear_gain(t);
    double expect =
        -h * h * (m * traj.nodes_q[n]).dot(m.transpose() * traj.nodes_p[n]);
    CHECK(drift.per_step[n] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("sourced pairing balance holds when both abscissae agree") {
  // d(q.p)/dt = p^2 - q^2 + q sin t on the forced oscillator
  PartitionedSystem sys = forced_oscillator();
  auto phi = [](const Vec& q, const Vec& p, double t) {
    return p[0] * p[0] - q[0] * q[0] + q[0] * std::sin(t);
  };
  Vec q0 = Vec::Constant(1, 0.8), p0 = Vec::Constant(1, -0.2);
  TimeGrid grid = TimeGrid::uniform(0.0, 2.0, 200);

  PrkTableau partner = adjoint_partner(builtin_rk("euler"));
  RkTableau g2 = builtin_rk("gauss2");
  for (const PrkTableau& pair : {partner, PrkTableau{"g2", g2, g2}}) {
    PrkTrajectory traj = prk_integrate(sys, pair, q0, p0, grid);
    DriftReport drift = quadratic_drift(traj, pairing(1), phi);
    CAPTURE(pair.name);
    CHECK(drift.max_abs <= 1e-12);
  }
}

TEST_CASE("pairing balance is pure tableau algebra, not a property of f") {
  // arbitrary slope vectors wired through the update relations still satisfy
  // the bilinear balance when the coupling defects vanish
  std::mt19937_64 rng(314159);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  auto draw = [&](int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = unif(rng);
    return v;
  };
  const int d = 3;
  Mat m(d, d);
  for (int i = 0; i < d; ++i) m.row(i) = draw(d).transpose();

  RkTableau tab = random_symplectic(4, 2026);
  double h = 0.37;
  Vec q = draw(d), p = draw(d);
  std::vector<Vec> k(4), l(4);
  for (int i = 0; i < 4; ++i) {
    k[i] = draw(d);
    l[i] = draw(d);
  }
  Vec q1 = q, p1 = p;
  double stage_sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    q1 += h * tab.b[i] * k[i];
    p1 += h * tab.b[i] * l[i];
    Vec qi = q, pi = p;
    for (int j = 0; j < 4; ++j) {
      qi += h * tab.a(i, j) * k[j];
      pi += h * tab.a(i, j) * l[j];
    }
    stage_sum += h * tab.b[i] * (k[i].dot(m * pi) + qi.dot(m * l[i]));
  }
  double lhs = q1.dot(m * p1) - q.dot(m * p);
  CHECK(lhs == doctest::Approx(stage_sum).epsilon(1e-13));
}

TEST_CASE("drift accounting rejects mismatched inputs") {
  PartitionedSystem sys = bilinear_qp();
  RkTableau g2 = builtin_rk("gauss2");
  PrkTableau pair{"g2", g2, g2};
  Vec q0(2), p0(2);
  q0 << 1.0, 0.5;
  p0 << 0.25, -1.0;
  PrkTrajectory a = prk_integrate(sys, pair, q0, p0, TimeGrid::uniform(0, 1, 10));
  a.nodes_p.pop_back();  // simulate storage corruption
  CHECK_THROWS_AS(quadratic_drift(a, pairing(2)), GridMismatch);
}

TEST_CASE("finite-difference jacobian agrees with hand-coded ones") {
  OdeSystem lv = lotka_volterra();
  CHECK(check_jacobian(lv, lotka_start(), 0.0) <= 2e-6);
  OdeSystem rot = forced_rotation();
  Vec y(2);
  y << 0.3, -0.9;
  CHECK(check_jacobian(rot, y, 0.7) <= 1e-9);

  OdeSystem nojac;
  nojac.dim = 2;
  nojac.f = rot.f;
  CHECK_THROWS_AS(check_jacobian(nojac, y, 0.0), MissingJacobian);
}
