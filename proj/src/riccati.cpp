#include "sharedctl/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sharedctl {
namespace {

MatrixXd care_residual(const MatrixXd& A, const MatrixXd& S, const MatrixXd& Q, const MatrixXd& P) {
    return A.transpose() * P + P * A - P * S * P + Q;
}

// Matrix sign of H by the scaled Newton iteration Z <- (cZ + (cZ)^-1) / 2.
bool matrix_sign(MatrixXd& Z) {
    const double dim = static_cast<double>(Z.rows());
    for (int it = 0; it < 100; ++it) {
        Eigen::PartialPivLU<MatrixXd> lu(Z);
        const auto diag = lu.matrixLU().diagonal();
        double log_det = 0.0;
        for (Index k = 0; k < diag.size(); ++k) {
            const double a = std::abs(diag[k]);
            if (a == 0.0 || !std::isfinite(a)) return false;
            log_det += std::log(a);
        }
        const double c = std::exp(-log_det / dim);
        MatrixXd next = 0.5 * (c * Z + lu.inverse() / c);
        if (!next.allFinite()) return false;
        const double change = (next - Z).lpNorm<1>();
        Z = std::move(next);
        if (change <= 1e-14 * Z.lpNorm<1>()) return true;
    }
    return false;
}

} // namespace

MatrixXd solve_care(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q, const MatrixXd& R) {
    const Index n = A.rows();
    const Index m = B.cols();
    if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m ||
        R.cols() != m) {
        throw Error(ErrorCode::DimensionMismatch, "CARE operands have inconsistent sizes");
    }
    Eigen::LLT<MatrixXd> R_llt(R);
    if (R_llt.info() != Eigen::Success) {
        throw Error(ErrorCode::InvalidArgument, "input weight must be positive definite");
    }
    const MatrixXd S = B * R_llt.solve(B.transpose());

    MatrixXd Z(2 * n, 2 * n);
    Z << A, -S, -Q, -A.transpose();
    if (!matrix_sign(Z)) {
        throw Error(ErrorCode::NotStabilizable, "Hamiltonian has eigenvalues on the imaginary axis");
    }

    // The stable subspace span[I; P] satisfies sign(H) [I; P] = -[I; P].
    const MatrixXd I = MatrixXd::Identity(n, n);
    MatrixXd lhs(2 * n, n);
    lhs << Z.topRightCorner(n, n), Z.bottomRightCorner(n, n) + I;
    MatrixXd rhs(2 * n, n);
    rhs << Z.topLeftCorner(n, n) + I, Z.bottomLeftCorner(n, n);
    MatrixXd P = lhs.colPivHouseholderQr().solve(-rhs);
    P = 0.5 * (P + P.transpose());

    // Newton defect correction.
    double res = care_residual(A, S, Q, P).norm();
    for (int it = 0; it < 4 && res > 1e-14 * std::max(1.0, P.norm()); ++it) {
        const MatrixXd A_c = A - S * P;
        MatrixXd next;
        try {
            next = solve_lyapunov(A_c, Q + P * S * P);
        } catch (const Error&) {
            break;
        }
        const double next_res = care_residual(A, S, Q, next).norm();
        if (!(next_res < res)) break;
        P = std::move(next);
        res = next_res;
    }

    if (!P.allFinite() || max_real_eigenvalue(A - S * P) >= 0.0) {
        throw Error(ErrorCode::NotStabilizable, "no stabilizing Riccati solution");
    }
    return P;
}

MatrixXd nash_gain(const GameSystem& sys, const CostParams& cost, std::size_t player,
                   const MatrixXd& P) {
    return cost.r_self.cwiseInverse().asDiagonal() * (sys.B(player).transpose() * P);
}

MatrixXd best_response(const GameSystem& sys, const CostParams& cost, std::size_t player,
                       const std::vector<MatrixXd>& gains, MatrixXd* P_out) {
    MatrixXd A_i = sys.A();
    MatrixXd Q_i = cost.Q();
    for (std::size_t j = 0; j < sys.players(); ++j) {
        if (j == player) continue;
        A_i.noalias() -= sys.B(j) * gains[j];
        Q_i.noalias() += gains[j].transpose() * cost.cross(j, sys.input_dim(j)) * gains[j];
    }
    MatrixXd P = solve_care(A_i, sys.B(player), Q_i, cost.R());
    MatrixXd K = nash_gain(sys, cost, player, P);
    if (P_out) *P_out = std::move(P);
    return K;
}

std::vector<double> coupled_riccati_residuals(const GameSystem& sys,
                                              const std::vector<CostParams>& costs,
                                              const std::vector<MatrixXd>& P) {
    const std::size_t N = sys.players();
    if (costs.size() != N || P.size() != N) {
        throw Error(ErrorCode::DimensionMismatch, "need one cost and one P per player");
    }
    std::vector<MatrixXd> S(N);
    for (std::size_t j = 0; j < N; ++j) {
        S[j] = sys.B(j) * costs[j].r_self.cwiseInverse().asDiagonal() * sys.B(j).transpose();
    }
    std::vector<double> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        MatrixXd res = sys.A().transpose() * P[i] + P[i] * sys.A() + costs[i].Q();
        for (std::size_t j = 0; j < N; ++j) {
            res -= P[i] * S[j] * P[j];
            res -= P[j] * S[j] * P[i];
            if (j == i) {
                res += P[j] * S[j] * P[j];
            } else {
                const MatrixXd Rjj_inv = costs[j].r_self.cwiseInverse().asDiagonal();
                const MatrixXd S_ij = sys.B(j) * Rjj_inv * costs[i].cross(j, sys.input_dim(j)) *
                                      Rjj_inv * sys.B(j).transpose();
                res += P[j] * S_ij * P[j];
            }
        }
        out[i] = res.norm();
    }
    return out;
}

RiccatiSolution solve_coupled_riccati(const GameSystem& sys, const std::vector<CostParams>& costs,
                                      const RiccatiOptions& options,
                                      const std::vector<MatrixXd>* warm_start) {
    const std::size_t N = sys.players();
    const Index n = sys.states();
    if (costs.size() != N) {
        throw Error(ErrorCode::DimensionMismatch, "need one cost per player");
    }
    for (std::size_t i = 0; i < N; ++i) costs[i].validate(sys, i);

    RiccatiSolution sol;
    sol.K.resize(N);
    sol.P.assign(N, MatrixXd::Zero(n, n));
    if (warm_start && warm_start->size() == N) {
        sol.K = *warm_start;
        for (std::size_t i = 0; i < N; ++i) {
            if (sol.K[i].rows() != sys.input_dim(i) || sol.K[i].cols() != n) {
                throw Error(ErrorCode::DimensionMismatch, "warm-start gain has wrong shape");
            }
        }
    } else {
        for (std::size_t i = 0; i < N; ++i) sol.K[i] = MatrixXd::Zero(sys.input_dim(i), n);
    }

    bool gains_settled = false;
    for (int it = 1; it <= options.max_iterations; ++it) {
        double change = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            MatrixXd K_new = best_response(sys, costs[i], i, sol.K, &sol.P[i]);
            change = std::max(change, (K_new - sol.K[i]).cwiseAbs().maxCoeff());
            sol.K[i] = std::move(K_new);
        }
        sol.iterations = it;
        if (!gains_settled && change >= options.gain_tolerance) continue;
        gains_settled = true;

        const auto res = coupled_riccati_residuals(sys, costs, sol.P);
        sol.residual_norm = *std::max_element(res.begin(), res.end());
        if (sol.residual_norm <= options.residual_tolerance) break;
    }
    if (!gains_settled || sol.residual_norm > options.residual_tolerance) {
        throw Error(ErrorCode::NoConvergence,
                    "best-response sweep did not settle within " +
                        std::to_string(options.max_iterations) + " iterations");
    }
    // Player i's gain is exactly R_ii^-1 B_i^T P_i for the stored P_i.
    for (std::size_t i = 0; i < N; ++i) sol.K[i] = nash_gain(sys, costs[i], i, sol.P[i]);

    if (max_real_eigenvalue(closed_loop_matrix(sys, sol.K)) >= 0.0) {
        throw Error(ErrorCode::NotStabilizable, "equilibrium closed loop is not Hurwitz");
    }
    return sol;
}

} // namespace sharedctl
