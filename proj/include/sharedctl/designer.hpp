#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sharedctl/game.hpp"
#include "sharedctl/riccati.hpp"

namespace sharedctl {

/// Box on the automation's diagonal weights. The first own-input weight is
/// pinned to 1, so the input bounds cover the remaining m_a - 1 entries.
struct DesignBounds {
    VectorXd q_lower;
    VectorXd q_upper;
    VectorXd r_lower;
    VectorXd r_upper;

    static DesignBounds uniform(Index n, Index m_a, double lower = 1e-4, double upper = 1e4);
    void validate(Index n, Index m_a) const;
};

struct DesignProblem {
    GameSystem sys;
    CostParams human_cost;
    GlobalObjective objective;
    CostParams theta_a_init;
    DesignBounds bounds;
    /// Maximum number of coupled Riccati solves.
    int budget = 150;
    /// Initial-state weighting of the stationary cost; empty means identity.
    MatrixXd X0;
    std::uint64_t seed = 0;
    int multistart = 4;
    /// Gains used to warm-start the first equilibrium solve.
    std::vector<MatrixXd> warm_gains;
    const std::atomic<bool>* cancel = nullptr;
};

struct DesignResult {
    CostParams theta_a;
    /// Human cost the design was computed against.
    CostParams human_cost;
    MatrixXd K_a;
    MatrixXd K_h;
    double J_g = 0.0;
    int evaluations = 0;
    /// Running minimum of J_g after every evaluation.
    std::vector<double> best_so_far;
    /// Largest closed-loop eigenvalue real part under (K_a, K_h).
    double max_real_eig = 0.0;
    bool converged = false;
    bool budget_exhausted = false;
    bool cancelled = false;
};

/// Chooses the automation's cost so that the Nash closed loop it induces
/// together with `human_cost` minimizes the stationary global cost.
///
/// Search runs over log-diagonal weights (first own-input weight pinned to 1):
/// one simplex run from the warm start, a seeded 4-point multistart around
/// the incumbent, and a final simplex run from the best point. The returned
/// J_g never exceeds the warm start's. Throws NoStableCandidate if no
/// evaluated candidate gives a Hurwitz equilibrium.
DesignResult design_automation(const DesignProblem& problem);

/// Evaluates a fixed automation cost: equilibrium gains and J_g.
DesignResult evaluate_design(const GameSystem& sys, const CostParams& theta_a,
                             const CostParams& human_cost, const GlobalObjective& objective,
                             const MatrixXd& X0 = {});

struct HumanEstimate {
    CostParams cost;
    bool confident = false;
};

struct AdaptPolicy {
    /// Relative change in any normalized human weight that triggers a redesign.
    double deadband = 0.05;
    /// A candidate is published only if its certificate is below this.
    double max_real_eig = 0.0;
    int budget = 150;
    int multistart = 4;
    /// A continued (unconverged) design must lower J_g by more than this
    /// relative amount to be published; otherwise it counts as converged.
    double stationary_tolerance = 1e-6;
    DesignBounds bounds;
    MatrixXd X0;
    std::uint64_t seed = 0;
    const std::atomic<bool>* cancel = nullptr;
};

struct AdaptOutcome {
    /// Present when a new design is published.
    std::optional<DesignResult> published;
    std::string cause;
    /// Certificate of the candidate, when one was computed.
    std::optional<double> certificate;
    /// Continuing an unconverged design found no further improvement.
    bool stationary = false;

    [[nodiscard]] bool held() const { return !published.has_value(); }
};

/// One adaptation decision. Redesigns (warm-started from `current`) when the
/// identified human is confident and moved beyond the deadband, or when the
/// current design had not converged; otherwise holds. The certificate is the
/// worst eigenvalue real part over the predicted equilibrium and, when given,
/// the loop closed with the observed human gain `K_h_observed`. Errors from
/// the design are reported as a hold with their message as cause.
AdaptOutcome adapt_step(const GameSystem& sys, const DesignResult& current,
                        const HumanEstimate& human, const GlobalObjective& objective,
                        const AdaptPolicy& policy, const MatrixXd* K_h_observed = nullptr);

/// Largest relative change between two pinned-normalized human costs.
double relative_cost_change(const CostParams& before, const CostParams& after);

} // namespace sharedctl
