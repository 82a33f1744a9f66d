#pragma once

#include <atomic>
#include <functional>

#include "sharedctl/game.hpp"

namespace sharedctl {

struct NelderMeadOptions {
    int max_evaluations = 500;
    /// Initial simplex edge length.
    double initial_step = 0.5;
    /// Stop when the simplex diameter and the spread of its values both fall
    /// below these.
    double x_tolerance = 1e-8;
    double f_tolerance = 1e-13;
    /// Box applied by projection; empty means unbounded.
    VectorXd lower;
    VectorXd upper;
    const std::atomic<bool>* cancel = nullptr;
};

struct NelderMeadResult {
    VectorXd x;
    double f = 0.0;
    int evaluations = 0;
    bool converged = false;
    bool cancelled = false;
};

/// Derivative-free simplex minimization (reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2). Infinite values are treated as infeasible.
NelderMeadResult nelder_mead(const std::function<double(const VectorXd&)>& f, const VectorXd& x0,
                             const NelderMeadOptions& options);

} // namespace sharedctl
