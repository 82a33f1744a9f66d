#include "sharedctl/rls.hpp"

#include <cmath>

namespace sharedctl {

RlsEstimator::RlsEstimator(Index states, Index inputs, double lambda_f, double p0)
    : lambda_(lambda_f), p0_(p0) {
    if (states <= 0 || inputs <= 0) {
        throw Error(ErrorCode::InvalidArgument, "RLS dimensions must be positive");
    }
    if (!(lambda_f > 0.0 && lambda_f <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "forgetting factor must lie in (0, 1]");
    }
    if (!(p0 > 0.0) || !std::isfinite(p0)) {
        throw Error(ErrorCode::InvalidArgument, "initial covariance scale must be > 0");
    }
    k_hat_ = MatrixXd::Zero(inputs, states);
    P_ = p0 * MatrixXd::Identity(states, states);
}

RlsEstimator::RlsEstimator(const MatrixXd& initial_gain, double lambda_f, double p0)
    : RlsEstimator(initial_gain.cols(), initial_gain.rows(), lambda_f, p0) {
    if (!initial_gain.allFinite()) throw Error(ErrorCode::NonFinite, "initial RLS gain is not finite");
    k_hat_ = initial_gain;
}

RlsEstimator::Update RlsEstimator::update(const VectorXd& x, const VectorXd& u) {
    if (x.size() != k_hat_.cols() || u.size() != k_hat_.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "RLS sample has wrong shape");
    }
    if (!x.allFinite() || !u.allFinite()) {
        ++skipped_nonfinite_;
        return Update::SkippedNonFinite;
    }
    if (x.norm() < kExcitationFloor) {
        ++skipped_unexcited_;
        return Update::SkippedUnexcited;
    }
    const VectorXd Px = P_ * x;
    const VectorXd W = Px / (lambda_ + x.dot(Px));
    // Row j: k_j += W (-u_j - x^T k_j).
    const VectorXd innovation = -u - k_hat_ * x;
    k_hat_.noalias() += innovation * W.transpose();
    P_ = (P_ - W * Px.transpose()) / lambda_;
    P_ = 0.5 * (P_ + P_.transpose());
    ++samples_;
    return Update::Applied;
}

double RlsEstimator::min_covariance_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(P_, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

} // namespace sharedctl
