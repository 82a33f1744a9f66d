#pragma once

#include <functional>
#include <vector>

#include "sharedctl/game.hpp"

namespace sharedctl {

/// Exogenous input w(t) added to the state derivative.
using Disturbance = std::function<VectorXd(double t)>;

/// Gains in force during the step starting at time t.
using GainSchedule = std::function<std::vector<MatrixXd>(double t)>;

/// How player inputs behave inside one integration step.
enum class InputHold {
    /// u_j = -K_j x(t) is re-evaluated at every Runge-Kutta stage.
    Continuous,
    /// u_j = -K_j x(t_k) is held over the step, as a sampled controller does.
    SampleAndHold,
};

struct SimulationOptions {
    InputHold hold = InputHold::Continuous;
    /// Any state entry beyond this magnitude aborts with NonFinite.
    double overflow_guard = 1e12;
};

/// Samples at t_k = k dt, k = 0..steps (inclusive of both ends).
struct Trajectory {
    std::vector<double> t;
    std::vector<VectorXd> x;
    /// u[k][j]: player j's input at sample k.
    std::vector<std::vector<VectorXd>> u;
};

/// One classical RK4 step of x' = A x + sum_j B_j u_j + w(t).
VectorXd rk4_step(const GameSystem& sys, const std::vector<MatrixXd>& gains, const VectorXd& x,
                  double t, double dt, const Disturbance& w, InputHold hold);

/// Same, with inputs given directly (held over the step).
VectorXd rk4_step_inputs(const GameSystem& sys, const std::vector<VectorXd>& u, const VectorXd& x,
                         double t, double dt, const Disturbance& w);

/// Fixed-step RK4 of the closed loop under u_j = -K_j x from x0 over
/// round(T / dt) steps. Throws NonFinite with the partial trajectory lost
/// when the state leaves the overflow guard.
Trajectory simulate(const GameSystem& sys, const GainSchedule& gains, const VectorXd& x0,
                    double dt, double T, const Disturbance& w = {},
                    const SimulationOptions& options = {});

Trajectory simulate(const GameSystem& sys, const std::vector<MatrixXd>& gains, const VectorXd& x0,
                    double dt, double T, const Disturbance& w = {},
                    const SimulationOptions& options = {});

} // namespace sharedctl
