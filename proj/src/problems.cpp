#include "sprk/problems.hpp"

#include <cmath>

namespace sprk {

OdeSystem lotka_volterra() {
  OdeSystem sys;
  sys.dim = 2;
  sys.f = [](const Vec& x, double) {
    Vec dx(2);
    dx[0] = x[0] - 0.2 * x[0] * x[1];
    dx[1] = -2.0 * x[1] + 0.2 * x[0] * x[1];
    return dx;
  };
  sys.jac = [](const Vec& x, double) {
    Mat j(2, 2);
    j(0, 0) = 1.0 - 0.2 * x[1];
    j(0, 1) = -0.2 * x[0];
    j(1, 0) = 0.2 * x[1];
    j(1, 1) = -2.0 + 0.2 * x[0];
    return j;
  };
  return sys;
}

Vec lotka_start() {
  Vec x0(2);
  x0 << 15.0, 10.0;
  return x0;
}

OdeSystem harmonic_oscillator() {
  OdeSystem sys;
  sys.dim = 2;
  sys.f = [](const Vec& y, double) {
    Vec dy(2);
    dy[0] = -y[1];
    dy[1] = y[0];
    return dy;
  };
  sys.jac = [](const Vec&, double) {
    Mat j(2, 2);
    j << 0.0, -1.0, 1.0, 0.0;
    return j;
  };
  return sys;
}

OdeSystem forced_rotation() {
  OdeSystem sys;
  sys.dim = 2;
  sys.f = [](const Vec& y, double t) {
    Vec dy(2);
    dy[0] = -y[1];
    dy[1] = y[0] + std::sin(t);
    return dy;
  };
  sys.jac = [](const Vec&, double) {
    Mat j(2, 2);
    j << 0.0, -1.0, 1.0, 0.0;
    return j;
  };
  return sys;
}

PartitionedSystem separable_oscillator() {
  PartitionedSystem sys;
  sys.dim_q = 1;
  sys.dim_p = 1;
  sys.f = [](const Vec&, const Vec& p, double) { return p; };
  sys.g = [](const Vec& q, const Vec&, double) { return Vec(-q); };
  sys.fq = [](const Vec&, const Vec&, double) { return Mat::Zero(1, 1); };
  sys.fp = [](const Vec&, const Vec&, double) { return Mat::Identity(1, 1); };
  sys.gq = [](const Vec&, const Vec&, double) { return Mat(-Mat::Identity(1, 1)); };
  sys.gp = [](const Vec&, const Vec&, double) { return Mat::Zero(1, 1); };
  return sys;
}

PartitionedSystem forced_oscillator() {
  PartitionedSystem sys = separable_oscillator();
  sys.g = [](const Vec& q, const Vec&, double t) {
    Vec g(1);
    g[0] = -q[0] + std::sin(t);
    return g;
  };
  return sys;
}

Mat bilinear_gain(double t) {
  Mat m(2, 2);
  m << 0.0, 1.0 + t, -1.0, 0.0;
  return m;
}

PartitionedSystem bilinear_qp() {
  PartitionedSystem sys;
  sys.dim_q = 2;
  sys.dim_p = 2;
  sys.f = [](const Vec& q, const Vec&, double t) { return Vec(bilinear_gain(t) * q); };
  sys.g = [](const Vec&, const Vec& p, double t) {
    return Vec(-bilinear_gain(t).transpose() * p);
  };
  sys.fq = [](const Vec&, const Vec&, double t) { return bilinear_gain(t); };
  sys.fp = [](const Vec&, const Vec&, double) { return Mat::Zero(2, 2); };
  sys.gq = [](const Vec&, const Vec&, double) { return Mat::Zero(2, 2); };
  sys.gp = [](const Vec&, const Vec&, double t) {
    return Mat(-bilinear_gain(t).transpose());
  };
  return sys;
}

SpecialPartitionedSystem special_bilinear() {
  SpecialPartitionedSystem sys;
  sys.dim_q = 2;
  sys.dim_p = 2;
  sys.f = [](const Vec& q, double t) { return Vec(bilinear_gain(t) * q); };
  sys.f_jac = [](const Vec&, double t) { return bilinear_gain(t); };
  sys.L = [](const Vec&, double) { return Vec(Vec::Zero(2)); };
  sys.M = [](const Vec&, double t) { return Mat(-bilinear_gain(t).transpose()); };
  return sys;
}

SpecialPartitionedSystem special_smooth() {
  SpecialPartitionedSystem sys;
  sys.dim_q = 2;
  sys.dim_p = 2;
  sys.f = [](const Vec& q, double t) {
    Vec out(2);
    out << std::sin(q[1]) + 0.3 * t, -0.4 * q[0];
    return out;
  };
  sys.f_jac = [](const Vec& q, double) {
    Mat j(2, 2);
    j << 0.0, std::cos(q[1]), -0.4, 0.0;
    return j;
  };
  sys.L = [](const Vec& q, double t) {
    Vec out(2);
    out << 0.2 * q[0] * q[1], std::cos(t) - q[0];
    return out;
  };
  sys.M = [](const Vec& q, double t) {
    Mat m(2, 2);
    m << 0.1 * q[0], 1.0 + 0.5 * std::sin(q[1]), -1.0 + 0.2 * t, 0.3 * q[1];
    return m;
  };
  return sys;
}

ControlSystem lq_dynamics() {
  ControlSystem sys;
  sys.dim_x = 1;
  sys.dim_u = 1;
  sys.f = [](const Vec&, const Vec& u, double) { return u; };
  sys.jac_x = [](const Vec&, const Vec&, double) { return Mat(Mat::Zero(1, 1)); };
  sys.jac_u = [](const Vec&, const Vec&, double) { return Mat(Mat::Identity(1, 1)); };
  return sys;
}

CostSpec lq_cost() {
  CostSpec cost;
  cost.D = [](const Vec& x, const Vec& u, double) {
    return 0.5 * (x.squaredNorm() + u.squaredNorm());
  };
  cost.grad_x_D = [](const Vec& x, const Vec&, double) { return x; };
  cost.grad_u_D = [](const Vec&, const Vec& u, double) { return u; };
  cost.hess_xx_D = [](const Vec&, const Vec&, double) { return Mat(Mat::Identity(1, 1)); };
  cost.hess_xu_D = [](const Vec&, const Vec&, double) { return Mat(Mat::Zero(1, 1)); };
  cost.hess_uu_D = [](const Vec&, const Vec&, double) { return Mat(Mat::Identity(1, 1)); };
  return cost;
}

double lq_exact_state(double t) { return std::cosh(1.0 - t) / std::cosh(1.0); }
double lq_exact_costate(double t) { return std::sinh(1.0 - t) / std::cosh(1.0); }
double lq_exact_control(double t) { return -lq_exact_costate(t); }

ControlSystem cosine_steering() {
  ControlSystem sys;
  sys.dim_x = 1;
  sys.dim_u = 1;
  sys.f = [](const Vec& x, const Vec& u, double) {
    Vec out(1);
    out << -x[0] + std::cos(u[0]);
    return out;
  };
  sys.jac_x = [](const Vec&, const Vec&, double) {
    return Mat(-Mat::Identity(1, 1));
  };
  sys.jac_u = [](const Vec&, const Vec& u, double) {
    Mat j(1, 1);
    j << -std::sin(u[0]);
    return j;
  };
  return sys;
}

CostSpec terminal_state_cost() {
  CostSpec cost;
  cost.grad_C = [](const Vec& x) { return Vec(Vec::Ones(x.size())); };
  cost.hess_C = [](const Vec& x) { return Mat(Mat::Zero(x.size(), x.size())); };
  return cost;
}

CostSpec tracking_cost() {
  CostSpec cost = terminal_state_cost();
  cost.D = [](const Vec& x, const Vec& u, double) {
    return 0.5 * ((x[0] - 1.0) * (x[0] - 1.0) + u.squaredNorm());
  };
  cost.grad_x_D = [](const Vec& x, const Vec&, double) {
    Vec g(1);
    g << x[0] - 1.0;
    return g;
  };
  cost.grad_u_D = [](const Vec&, const Vec& u, double) { return u; };
  cost.hess_xx_D = [](const Vec&, const Vec&, double) { return Mat(Mat::Identity(1, 1)); };
  cost.hess_xu_D = [](const Vec&, const Vec&, double) { return Mat(Mat::Zero(1, 1)); };
  cost.hess_uu_D = [](const Vec&, const Vec&, double) { return Mat(Mat::Identity(1, 1)); };
  return cost;
}

Lagrangian harmonic_action() {
  Lagrangian lag;
  lag.dim = 1;
  lag.value = [](const Vec& x, const Vec& u, double) {
    return 0.5 * u.squaredNorm() - 0.5 * x.squaredNorm();
  };
  lag.grad_x = [](const Vec& x, const Vec&, double) { return Vec(-x); };
  lag.grad_u = [](const Vec&, const Vec& u, double) { return u; };
  return lag;
}

Lagrangian pendulum_action() {
  Lagrangian lag;
  lag.dim = 1;
  lag.value = [](const Vec& x, const Vec& u, double) {
    return 0.5 * u.squaredNorm() + std::cos(x[0]);
  };
  lag.grad_x = [](const Vec& x, const Vec&, double) {
    Vec g(1);
    g << -std::sin(x[0]);
    return g;
  };
  lag.grad_u = [](const Vec&, const Vec& u, double) { return u; };
  return lag;
}

Lagrangian free_particle_action() {
  Lagrangian lag;
  lag.dim = 1;
  lag.value = [](const Vec&, const Vec& u, double) {
    return 0.5 * u.squaredNorm();
  };
  lag.grad_x = [](const Vec& x, const Vec&, double) {
    return Vec(Vec::Zero(x.size()));
  };
  lag.grad_u = [](const Vec&, const Vec& u, double) { return u; };
  return lag;
}

}  // namespace sprk
