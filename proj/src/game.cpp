#include "sharedctl/game.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace sharedctl {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NotStabilizable: return "NotStabilizable";
    case ErrorCode::Unstable: return "Unstable";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NoStableCandidate: return "NoStableCandidate";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

bool all_finite(const MatrixXd& M) { return M.allFinite(); }

GameSystem::GameSystem(MatrixXd A, std::vector<MatrixXd> B) : A_(std::move(A)), B_(std::move(B)) {
    if (A_.rows() != A_.cols() || A_.rows() == 0) {
        throw Error(ErrorCode::DimensionMismatch, "state matrix must be square and non-empty");
    }
    if (B_.empty()) {
        throw Error(ErrorCode::InvalidArgument, "game needs at least one player");
    }
    for (std::size_t i = 0; i < B_.size(); ++i) {
        if (B_[i].rows() != A_.rows() || B_[i].cols() == 0) {
            throw Error(ErrorCode::DimensionMismatch,
                        "input matrix of player " + std::to_string(i) + " must be n x m with m > 0");
        }
    }
    if (!A_.allFinite() ||
        std::any_of(B_.begin(), B_.end(), [](const MatrixXd& b) { return !b.allFinite(); })) {
        throw Error(ErrorCode::NonFinite, "system matrices contain non-finite entries");
    }
}

MatrixXd CostParams::cross(std::size_t j, Index m_j) const {
    if (j < r_cross.size() && r_cross[j].size() > 0) {
        return r_cross[j].asDiagonal();
    }
    return MatrixXd::Zero(m_j, m_j);
}

void CostParams::validate(const GameSystem& sys, std::size_t player) const {
    if (player >= sys.players()) {
        throw Error(ErrorCode::InvalidArgument, "player index out of range");
    }
    if (q.size() != sys.states()) {
        throw Error(ErrorCode::DimensionMismatch, "state weight has wrong length");
    }
    if (r_self.size() != sys.input_dim(player)) {
        throw Error(ErrorCode::DimensionMismatch, "input weight has wrong length");
    }
    if (!q.allFinite() || (q.array() < 0.0).any()) {
        throw Error(ErrorCode::InvalidArgument, "state weights must be finite and >= 0");
    }
    if (!r_self.allFinite() || (r_self.array() <= 0.0).any()) {
        throw Error(ErrorCode::InvalidArgument, "own input weights must be finite and > 0");
    }
    if (r_cross.size() > sys.players()) {
        throw Error(ErrorCode::DimensionMismatch, "more cross weights than players");
    }
    for (std::size_t j = 0; j < r_cross.size(); ++j) {
        if (r_cross[j].size() == 0) continue;
        if (j == player) {
            throw Error(ErrorCode::InvalidArgument, "cross weight given for the player itself");
        }
        if (r_cross[j].size() != sys.input_dim(j)) {
            throw Error(ErrorCode::DimensionMismatch, "cross weight has wrong length");
        }
        if (!r_cross[j].allFinite() || (r_cross[j].array() < 0.0).any()) {
            throw Error(ErrorCode::InvalidArgument, "cross weights must be finite and >= 0");
        }
    }
}

CostParams CostParams::scaled(double c) const {
    CostParams out = *this;
    out.q *= c;
    out.r_self *= c;
    for (auto& r : out.r_cross) r *= c;
    return out;
}

void GlobalObjective::validate(const GameSystem& sys) const {
    if (q.size() != sys.states()) {
        throw Error(ErrorCode::DimensionMismatch, "objective state weight has wrong length");
    }
    if (!q.allFinite() || (q.array() < 0.0).any()) {
        throw Error(ErrorCode::InvalidArgument, "objective state weights must be finite and >= 0");
    }
    if (r.size() != sys.players()) {
        throw Error(ErrorCode::DimensionMismatch, "objective needs one input weight per player");
    }
    for (std::size_t j = 0; j < r.size(); ++j) {
        if (r[j].size() != sys.input_dim(j)) {
            throw Error(ErrorCode::DimensionMismatch, "objective input weight has wrong length");
        }
        if (!r[j].allFinite() || (r[j].array() <= 0.0).any()) {
            throw Error(ErrorCode::InvalidArgument, "objective input weights must be finite and > 0");
        }
    }
}

MatrixXd closed_loop_matrix(const GameSystem& sys, const std::vector<MatrixXd>& gains) {
    if (gains.size() != sys.players()) {
        throw Error(ErrorCode::DimensionMismatch, "need one gain per player");
    }
    MatrixXd A_cl = sys.A();
    for (std::size_t j = 0; j < gains.size(); ++j) {
        if (gains[j].rows() != sys.input_dim(j) || gains[j].cols() != sys.states()) {
            throw Error(ErrorCode::DimensionMismatch,
                        "gain of player " + std::to_string(j) + " must be m_j x n");
        }
        A_cl.noalias() -= sys.B(j) * gains[j];
    }
    return A_cl;
}

std::vector<double> stability_margins(const MatrixXd& A_cl) {
    if (A_cl.rows() != A_cl.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "closed-loop matrix must be square");
    }
    Eigen::EigenSolver<MatrixXd> es(A_cl, /*computeEigenvectors=*/false);
    std::vector<double> re(static_cast<std::size_t>(A_cl.rows()));
    for (Index k = 0; k < A_cl.rows(); ++k) re[static_cast<std::size_t>(k)] = es.eigenvalues()[k].real();
    std::sort(re.begin(), re.end(), std::greater<>());
    return re;
}

double max_real_eigenvalue(const MatrixXd& A_cl) { return stability_margins(A_cl).front(); }

MatrixXd solve_lyapunov(const MatrixXd& A, const MatrixXd& Q) {
    const Index n = A.rows();
    if (A.cols() != n || Q.rows() != n || Q.cols() != n) {
        throw Error(ErrorCode::DimensionMismatch, "Lyapunov operands must be n x n");
    }
    // Column-major vec: vec(A^T X + X A) = (I kron A^T + A^T kron I) vec(X).
    const MatrixXd I = MatrixXd::Identity(n, n);
    const MatrixXd At = A.transpose();
    MatrixXd L = MatrixXd::Zero(n * n, n * n);
    for (Index c = 0; c < n; ++c) {
        L.block(c * n, c * n, n, n) += At;
        for (Index r = 0; r < n; ++r) {
            L.block(r * n, c * n, n, n) += At(r, c) * I;
        }
    }
    Eigen::FullPivLU<MatrixXd> lu(L);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible()) {
        throw Error(ErrorCode::Unstable, "Lyapunov operator is singular");
    }
    const VectorXd rhs = -Eigen::Map<const VectorXd>(Q.data(), n * n);
    VectorXd v = lu.solve(rhs);
    MatrixXd X = Eigen::Map<MatrixXd>(v.data(), n, n);
    return 0.5 * (X + X.transpose());
}

double evaluate_global_cost(const GameSystem& sys, const std::vector<MatrixXd>& gains,
                            const GlobalObjective& objective, const MatrixXd& X0) {
    objective.validate(sys);
    const Index n = sys.states();
    if (X0.rows() != n || X0.cols() != n) {
        throw Error(ErrorCode::DimensionMismatch, "initial-state weighting must be n x n");
    }
    const MatrixXd A_cl = closed_loop_matrix(sys, gains);
    if (max_real_eigenvalue(A_cl) >= 0.0) {
        throw Error(ErrorCode::Unstable, "closed loop is not Hurwitz");
    }
    MatrixXd W = objective.q.asDiagonal();
    for (std::size_t j = 0; j < gains.size(); ++j) {
        W.noalias() += gains[j].transpose() * objective.r[j].asDiagonal() * gains[j];
    }
    const MatrixXd Pg = solve_lyapunov(A_cl, W);
    return 0.5 * (Pg * X0).trace();
}

double evaluate_global_cost(const GameSystem& sys, const std::vector<MatrixXd>& gains,
                            const GlobalObjective& objective, const VectorXd& x0) {
    return evaluate_global_cost(sys, gains, objective, MatrixXd(x0 * x0.transpose()));
}

double global_cost_rate(const GlobalObjective& objective, const VectorXd& x,
                        const std::vector<VectorXd>& u) {
    double v = x.dot(objective.q.asDiagonal() * x);
    for (std::size_t j = 0; j < u.size() && j < objective.r.size(); ++j) {
        v += u[j].dot(objective.r[j].asDiagonal() * u[j]);
    }
    return 0.5 * v;
}

} // namespace sharedctl
