#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sharedctl/game.hpp"

namespace sharedctl {

/// Column layout of the unknown vector for one player:
///   [ vech(P) | diag(Q) | diag(R_ii) | diag(R_ij) for each cross player j ]
/// vech stacks the upper triangle row by row.
struct ThetaLayout {
    Index n = 0;
    Index m_self = 0;
    /// (player j, m_j) for every cross weight carried as an unknown.
    std::vector<std::pair<std::size_t, Index>> cross;

    [[nodiscard]] Index p_count() const { return n * (n + 1) / 2; }
    [[nodiscard]] Index q_offset() const { return p_count(); }
    [[nodiscard]] Index r_offset() const { return q_offset() + n; }
    [[nodiscard]] Index cross_offset(std::size_t k) const;
    [[nodiscard]] Index size() const;
};

/// Linear Nash-stationarity system M theta = 0 for one player. M depends only
/// on the system and the supplied gains.
struct ResidualSystem {
    MatrixXd M;
    ThetaLayout layout;
    std::size_t player = 0;
};

/// Builds, with A_cl = A - sum_j B_j K_j,
///   E1: A_cl^T P + P A_cl + Q + K_i^T R_ii K_i + sum_{j!=i} K_j^T R_ij K_j = 0  (upper triangle)
///   E2: B_i^T P - R_ii K_i = 0
/// as rows of M. With `identify_cross` false the cross weights are fixed to 0.
ResidualSystem build_residual_system(const GameSystem& sys, const std::vector<MatrixXd>& gains,
                                     std::size_t player, bool identify_cross = false);

enum class Normalization {
    FirstInputWeight, ///< R_ii(0,0) = 1
    FirstStateWeight, ///< Q(0,0) = 1
};

struct IdentifyOptions {
    double r_floor = 1e-6;
    Normalization pin = Normalization::FirstInputWeight;
    /// Second-smallest singular value on the feasible slice below this flags
    /// a non-unique solution set.
    double ill_conditioned = 1e-10;
};

struct ThetaVector {
    VectorXd p_entries;
    VectorXd q;
    VectorXd r_self;
    std::vector<VectorXd> r_cross;
    Index pinned = 0;
    /// All unknowns in layout order.
    VectorXd raw;

    [[nodiscard]] CostParams cost() const;
    [[nodiscard]] MatrixXd P() const;
};

struct Identification {
    ThetaVector theta;
    /// ||M theta||_2.
    double residual = 0.0;
    /// Projected-gradient KKT violation of the column-scaled problem.
    double kkt_residual = 0.0;
    /// One flag per unknown: held at its lower bound.
    std::vector<bool> at_bound;
};

/// Minimizes theta^T M^T M theta subject to the pinned entry = 1, Q >= 0,
/// R_ii >= r_floor, R_ij >= 0 with an active-set bounded least-squares solve.
Identification identify_cost(const ResidualSystem& rs, const IdentifyOptions& options = {});

struct IdentificationConfidence {
    double residual_norm = 0.0;
    /// ||M theta|| / (||M||_F ||theta||).
    double relative_residual = 0.0;
    double sigma_min = 0.0;
    double sigma_second = 0.0;
    /// sigma_second / sigma_min on the feasible slice (capped at 1e16).
    double null_space_gap = 0.0;
    int active_constraints = 0;
    std::vector<bool> active;
    bool low_confidence = false;
};

/// Diagnostics on the columns of M not held at a bound.
IdentificationConfidence identification_confidence(const ResidualSystem& rs,
                                                   const Identification& id,
                                                   const IdentifyOptions& options = {});

/// Unknown vector of a known cost and its value matrix P, scaled so the pinned
/// entry is 1.
VectorXd theta_from_cost(const ThetaLayout& layout, const MatrixXd& P, const CostParams& cost,
                         Normalization pin = Normalization::FirstInputWeight);

} // namespace sharedctl
