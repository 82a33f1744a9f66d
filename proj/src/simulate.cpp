#include "sharedctl/simulate.hpp"

#include <cmath>

namespace sharedctl {
namespace {

VectorXd drift(const GameSystem& sys, const std::vector<VectorXd>& u, const VectorXd& x, double t,
               const Disturbance& w) {
    VectorXd dx = sys.A() * x;
    for (std::size_t j = 0; j < u.size(); ++j) dx.noalias() += sys.B(j) * u[j];
    if (w) dx += w(t);
    return dx;
}

std::vector<VectorXd> feedback(const std::vector<MatrixXd>& gains, const VectorXd& x) {
    std::vector<VectorXd> u(gains.size());
    for (std::size_t j = 0; j < gains.size(); ++j) u[j] = -gains[j] * x;
    return u;
}

} // namespace

VectorXd rk4_step_inputs(const GameSystem& sys, const std::vector<VectorXd>& u, const VectorXd& x,
                         double t, double dt, const Disturbance& w) {
    const VectorXd k1 = drift(sys, u, x, t, w);
    const VectorXd k2 = drift(sys, u, x + 0.5 * dt * k1, t + 0.5 * dt, w);
    const VectorXd k3 = drift(sys, u, x + 0.5 * dt * k2, t + 0.5 * dt, w);
    const VectorXd k4 = drift(sys, u, x + dt * k3, t + dt, w);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

VectorXd rk4_step(const GameSystem& sys, const std::vector<MatrixXd>& gains, const VectorXd& x,
                  double t, double dt, const Disturbance& w, InputHold hold) {
    if (hold == InputHold::SampleAndHold) {
        return rk4_step_inputs(sys, feedback(gains, x), x, t, dt, w);
    }
    auto f = [&](const VectorXd& s, double ts) { return drift(sys, feedback(gains, s), s, ts, w); };
    const VectorXd k1 = f(x, t);
    const VectorXd k2 = f(x + 0.5 * dt * k1, t + 0.5 * dt);
    const VectorXd k3 = f(x + 0.5 * dt * k2, t + 0.5 * dt);
    const VectorXd k4 = f(x + dt * k3, t + dt);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory simulate(const GameSystem& sys, const GainSchedule& gains, const VectorXd& x0,
                    double dt, double T, const Disturbance& w, const SimulationOptions& options) {
    if (!(dt > 0.0) || !(T >= dt)) {
        throw Error(ErrorCode::InvalidArgument, "need dt > 0 and T >= dt");
    }
    if (x0.size() != sys.states()) {
        throw Error(ErrorCode::DimensionMismatch, "initial state has wrong length");
    }
    const auto steps = static_cast<std::size_t>(std::llround(T / dt));
    Trajectory traj;
    traj.t.reserve(steps + 1);
    traj.x.reserve(steps + 1);
    traj.u.reserve(steps + 1);

    VectorXd x = x0;
    for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * dt;
        const auto K = gains(t);
        if (K.size() != sys.players()) {
            throw Error(ErrorCode::DimensionMismatch, "gain schedule must give one gain per player");
        }
        traj.t.push_back(t);
        traj.x.push_back(x);
        traj.u.push_back(feedback(K, x));
        if (k == steps) break;
        x = rk4_step(sys, K, x, t, dt, w, options.hold);
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > options.overflow_guard) {
            throw Error(ErrorCode::NonFinite,
                        "state diverged at t = " + std::to_string(t + dt));
        }
    }
    return traj;
}

Trajectory simulate(const GameSystem& sys, const std::vector<MatrixXd>& gains, const VectorXd& x0,
                    double dt, double T, const Disturbance& w, const SimulationOptions& options) {
    closed_loop_matrix(sys, gains); // shape check
    return simulate(
        sys, [&gains](double) { return gains; }, x0, dt, T, w, options);
}

} // namespace sharedctl
