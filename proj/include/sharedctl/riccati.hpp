#pragma once

#include <optional>
#include <vector>

#include "sharedctl/game.hpp"

namespace sharedctl {

/// Stabilizing solution of A^T P + P A - P B R^-1 B^T P + Q = 0.
///
/// Computed from the matrix sign function of the Hamiltonian with
/// determinant scaling, then polished with Newton defect-correction steps.
/// A zero input matrix reduces to a Lyapunov equation, which only has a
/// stabilizing solution when A is Hurwitz.
///
/// Throws NotStabilizable when no stabilizing solution exists (imaginary-axis
/// Hamiltonian eigenvalues, or the recovered closed loop is not Hurwitz).
MatrixXd solve_care(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R);

struct RiccatiOptions {
    /// Sweep stops once no gain entry moves by more than this.
    double gain_tolerance = 1e-10;
    /// Required Frobenius residual of every player's coupled equation.
    double residual_tolerance = 1e-9;
    int max_iterations = 500;
};

struct RiccatiSolution {
    std::vector<MatrixXd> P;
    std::vector<MatrixXd> K;
    double residual_norm = 0.0;
    int iterations = 0;
};

/// Feedback Nash equilibrium of the stationary LQ game.
///
/// Players take turns playing their best response (an ordinary Riccati
/// solve against the others' current gains) until the gains stop moving.
/// Starting gains are zero unless `warm_start` supplies one gain per player.
/// The stabilizing equilibrium reached from that start is returned; other
/// equilibria may exist.
///
/// Throws NoConvergence when the sweep hits the iteration cap or the final
/// residual exceeds the tolerance, NotStabilizable when a best response or
/// the final closed loop has no stabilizing solution.
RiccatiSolution solve_coupled_riccati(const GameSystem& sys, const std::vector<CostParams>& costs,
                                      const RiccatiOptions& options = {},
                                      const std::vector<MatrixXd>* warm_start = nullptr);

/// Frobenius norm of each player's coupled Riccati residual
///   A^T P_i + P_i A + Q_i - sum_j P_i S_j P_j - sum_j P_j S_j P_i + sum_j P_j S_ij P_j
/// with S_j = B_j R_jj^-1 B_j^T, S_ij = B_j R_jj^-1 R_ij R_jj^-1 B_j^T and S_ii = S_i.
std::vector<double> coupled_riccati_residuals(const GameSystem& sys,
                                              const std::vector<CostParams>& costs,
                                              const std::vector<MatrixXd>& P);

/// Gain of player i implied by P_i: R_ii^-1 B_i^T P_i.
MatrixXd nash_gain(const GameSystem& sys, const CostParams& cost, std::size_t player,
                   const MatrixXd& P);

/// Best response of `player` when every other player keeps its gain in `gains`.
/// Returns the gain; `P_out` receives the value matrix when non-null.
MatrixXd best_response(const GameSystem& sys, const CostParams& cost, std::size_t player,
                       const std::vector<MatrixXd>& gains, MatrixXd* P_out = nullptr);

} // namespace sharedctl
