#pragma once

#include "sprk/control.hpp"
#include "sprk/ode.hpp"
#include "sprk/zero_weight.hpp"

namespace sprk {

// two-species predator-prey system used across the examples and benchmarks:
// dx1/dt = x1 - 0.2 x1 x2, dx2/dt = -2 x2 + 0.2 x1 x2, started at (15, 10)
OdeSystem lotka_volterra();
Vec lotka_start();

// dy1/dt = -y2, dy2/dt = y1; preserves |y|^2
OdeSystem harmonic_oscillator();

// dy1/dt = -y2, dy2/dt = y1 + sin t; d|y|^2/dt = 2 y2 sin t
OdeSystem forced_rotation();

// q' = p, p' = -q (unit mass, unit spring)
PartitionedSystem separable_oscillator();

// q' = p, p' = -q + sin t; d(qp)/dt = p^2 - q^2 + q sin t
PartitionedSystem forced_oscillator();

// q' = M(t) q, p' = -M(t)^T p with M(t) = [[0, 1+t], [-1, 0]]; preserves q.p
PartitionedSystem bilinear_qp();
Mat bilinear_gain(double t);

// the same q' = M(t) q, p' = -M(t)^T p written in split form
SpecialPartitionedSystem special_bilinear();

// split form with smooth nonconstant L and M, for step-size studies
SpecialPartitionedSystem special_smooth();

// scalar steering problem dx/dt = u with quadratic running cost
// (x^2 + u^2)/2; on [0, 1] from x(0) = 1 the solution is
// x = cosh(1-t)/cosh 1, lam = sinh(1-t)/cosh 1, u = -lam
ControlSystem lq_dynamics();
CostSpec lq_cost();
double lq_exact_state(double t);
double lq_exact_costate(double t);
double lq_exact_control(double t);

// dx/dt = -x + cos u, nonlinear in the control
ControlSystem cosine_steering();
// pay the final state: C = x, no running cost
CostSpec terminal_state_cost();
// D = ((x-1)^2 + u^2)/2 with C = x; pulls the state toward 1 but the
// terminal gradient pushes the endpoint back down
CostSpec tracking_cost();

// L = u^2/2 - x^2/2; the extremals preserve x^2 + lam^2
Lagrangian harmonic_action();
// L = u^2/2 + cos x
Lagrangian pendulum_action();
// L = u^2/2; extremals are straight lines with constant momentum
Lagrangian free_particle_action();

}  // namespace sprk
