#pragma once

#include <cstdint>

#include "sharedctl/game.hpp"

namespace sharedctl {

/// Recursive least-squares estimate of one player's feedback gain with
/// exponential forgetting.
///
/// Samples follow the u = -K x convention: each row k_j of the gain is fit to
/// the target -u_j, so `gain()` is directly comparable to a Nash gain. All
/// rows share the regressor x, hence a single covariance.
class RlsEstimator {
public:
    enum class Update { Applied, SkippedUnexcited, SkippedNonFinite };

    RlsEstimator(Index states, Index inputs, double lambda_f, double p0);

    /// Starts from `initial_gain` instead of zero.
    RlsEstimator(const MatrixXd& initial_gain, double lambda_f, double p0);

    Update update(const VectorXd& x, const VectorXd& u);

    /// Current estimate, m x n; row j is k_j.
    [[nodiscard]] const MatrixXd& gain() const noexcept { return k_hat_; }
    [[nodiscard]] const MatrixXd& covariance() const noexcept { return P_; }
    [[nodiscard]] double covariance_trace() const { return P_.trace(); }
    [[nodiscard]] double min_covariance_eigenvalue() const;

    [[nodiscard]] double forgetting() const noexcept { return lambda_; }
    [[nodiscard]] double initial_scale() const noexcept { return p0_; }
    [[nodiscard]] std::int64_t sample_count() const noexcept { return samples_; }
    [[nodiscard]] std::int64_t skipped_nonfinite() const noexcept { return skipped_nonfinite_; }
    [[nodiscard]] std::int64_t skipped_unexcited() const noexcept { return skipped_unexcited_; }

    /// ||x|| below this leaves the estimate untouched.
    static constexpr double kExcitationFloor = 1e-8;

private:
    MatrixXd k_hat_;
    MatrixXd P_;
    double lambda_;
    double p0_;
    std::int64_t samples_ = 0;
    std::int64_t skipped_nonfinite_ = 0;
    std::int64_t skipped_unexcited_ = 0;
};

} // namespace sharedctl
