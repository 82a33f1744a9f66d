#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "sharedctl/error.hpp"

namespace sharedctl {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Player slots. The automation always occupies the first input channel.
inline constexpr std::size_t kAutomation = 0;
inline constexpr std::size_t kHuman = 1;

/// Continuous-time linear dynamics with one input channel per player:
/// x' = A x + sum_i B_i u_i.
class GameSystem {
public:
    GameSystem() = default;
    GameSystem(MatrixXd A, std::vector<MatrixXd> B);

    [[nodiscard]] const MatrixXd& A() const noexcept { return A_; }
    [[nodiscard]] const MatrixXd& B(std::size_t player) const { return B_.at(player); }
    [[nodiscard]] const std::vector<MatrixXd>& inputs() const noexcept { return B_; }

    [[nodiscard]] Index states() const noexcept { return A_.rows(); }
    [[nodiscard]] Index input_dim(std::size_t player) const { return B_.at(player).cols(); }
    [[nodiscard]] std::size_t players() const noexcept { return B_.size(); }

private:
    MatrixXd A_;
    std::vector<MatrixXd> B_;
};

/// One player's diagonal quadratic weights. Q >= 0, R_self > 0, cross
/// weights >= 0. `r_cross[j]` holds the weight on player j's input; an empty
/// entry (and the player's own slot) means zero.
struct CostParams {
    VectorXd q;
    VectorXd r_self;
    std::vector<VectorXd> r_cross;

    [[nodiscard]] MatrixXd Q() const { return q.asDiagonal(); }
    [[nodiscard]] MatrixXd R() const { return r_self.asDiagonal(); }
    /// Weight matrix on player j's input (m_j x m_j, zero if unset).
    [[nodiscard]] MatrixXd cross(std::size_t j, Index m_j) const;

    /// Throws InvalidArgument/DimensionMismatch if the weights are not a
    /// valid cost for `player` of `sys`.
    void validate(const GameSystem& sys, std::size_t player) const;

    /// Same cost multiplied by c > 0.
    [[nodiscard]] CostParams scaled(double c) const;
};

/// Designer-level objective: diagonal state weight and one diagonal input
/// weight per player.
struct GlobalObjective {
    VectorXd q;
    std::vector<VectorXd> r;

    void validate(const GameSystem& sys) const;
};

/// A -  sum_j B_j K_j.
MatrixXd closed_loop_matrix(const GameSystem& sys, const std::vector<MatrixXd>& gains);

/// Real parts of the eigenvalues of `A_cl`, sorted descending.
std::vector<double> stability_margins(const MatrixXd& A_cl);

/// Largest eigenvalue real part (the Hurwitz certificate is `< 0`).
double max_real_eigenvalue(const MatrixXd& A_cl);

/// Solves A^T X + X A + Q = 0. Throws Unstable when A has an eigenvalue pair
/// summing to zero (singular Lyapunov operator).
MatrixXd solve_lyapunov(const MatrixXd& A, const MatrixXd& Q);

/// Stationary global cost 1/2 trace(P_g X0) of the closed loop under `gains`,
/// where A_cl^T P_g + P_g A_cl + Q_g + sum_j K_j^T R_gj K_j = 0.
/// Throws Unstable if the closed loop is not Hurwitz.
double evaluate_global_cost(const GameSystem& sys, const std::vector<MatrixXd>& gains,
                            const GlobalObjective& objective, const MatrixXd& X0);

/// Single initial state variant, X0 = x0 x0^T.
double evaluate_global_cost(const GameSystem& sys, const std::vector<MatrixXd>& gains,
                            const GlobalObjective& objective, const VectorXd& x0);

/// The integrand of the global objective at one instant:
/// 1/2 (x^T Q_g x + sum_j u_j^T R_gj u_j).
double global_cost_rate(const GlobalObjective& objective, const VectorXd& x,
                        const std::vector<VectorXd>& u);

bool all_finite(const MatrixXd& M);

} // namespace sharedctl
