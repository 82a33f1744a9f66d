#include "sharedctl/designer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "sharedctl/nelder_mead.hpp"

namespace sharedctl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Uniform in [0, 1) from the top 53 bits; identical on every platform.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct SearchSpace {
    Index n = 0;
    Index m_a = 0;
    VectorXd lower;
    VectorXd upper;

    [[nodiscard]] Index dim() const { return n + m_a - 1; }

    [[nodiscard]] CostParams decode(const VectorXd& z) const {
        CostParams c;
        c.q = z.head(n).array().exp();
        c.r_self = VectorXd::Ones(m_a);
        for (Index k = 1; k < m_a; ++k) c.r_self[k] = std::exp(z[n + k - 1]);
        return c;
    }

    [[nodiscard]] VectorXd encode(const CostParams& c) const {
        const double pin = c.r_self[0];
        VectorXd z(dim());
        z.head(n) = (c.q / pin).array().log();
        for (Index k = 1; k < m_a; ++k) z[n + k - 1] = std::log(c.r_self[k] / pin);
        return z;
    }
};

SearchSpace make_space(const DesignBounds& b, Index n, Index m_a) {
    SearchSpace s;
    s.n = n;
    s.m_a = m_a;
    s.lower.resize(n + m_a - 1);
    s.upper.resize(n + m_a - 1);
    s.lower.head(n) = b.q_lower.array().log();
    s.upper.head(n) = b.q_upper.array().log();
    for (Index k = 0; k + 1 < m_a; ++k) {
        s.lower[n + k] = std::log(b.r_lower[k]);
        s.upper[n + k] = std::log(b.r_upper[k]);
    }
    return s;
}

MatrixXd weighting_or_identity(const MatrixXd& X0, Index n) {
    return X0.size() == 0 ? MatrixXd(MatrixXd::Identity(n, n)) : X0;
}

} // namespace

DesignBounds DesignBounds::uniform(Index n, Index m_a, double lower, double upper) {
    DesignBounds b;
    b.q_lower = VectorXd::Constant(n, lower);
    b.q_upper = VectorXd::Constant(n, upper);
    b.r_lower = VectorXd::Constant(std::max<Index>(m_a - 1, 0), lower);
    b.r_upper = VectorXd::Constant(std::max<Index>(m_a - 1, 0), upper);
    return b;
}

void DesignBounds::validate(Index n, Index m_a) const {
    if (q_lower.size() != n || q_upper.size() != n || r_lower.size() != m_a - 1 ||
        r_upper.size() != m_a - 1) {
        throw Error(ErrorCode::DimensionMismatch, "design bounds have wrong length");
    }
    auto check = [](const VectorXd& lo, const VectorXd& hi) {
        for (Index k = 0; k < lo.size(); ++k) {
            if (!(lo[k] > 0.0) || !std::isfinite(hi[k]) || !(hi[k] >= lo[k])) {
                throw Error(ErrorCode::InvalidArgument,
                            "design bounds must satisfy 0 < lower <= upper < inf");
            }
        }
    };
    check(q_lower, q_upper);
    check(r_lower, r_upper);
}

DesignResult evaluate_design(const GameSystem& sys, const CostParams& theta_a,
                             const CostParams& human_cost, const GlobalObjective& objective,
                             const MatrixXd& X0) {
    const auto sol = solve_coupled_riccati(sys, {theta_a, human_cost});
    DesignResult r;
    r.theta_a = theta_a;
    r.human_cost = human_cost;
    r.K_a = sol.K[kAutomation];
    r.K_h = sol.K[kHuman];
    r.J_g = evaluate_global_cost(sys, sol.K, objective, weighting_or_identity(X0, sys.states()));
    r.max_real_eig = max_real_eigenvalue(closed_loop_matrix(sys, sol.K));
    r.evaluations = 1;
    r.best_so_far = {r.J_g};
    r.converged = true;
    return r;
}

DesignResult design_automation(const DesignProblem& pb) {
    const GameSystem& sys = pb.sys;
    if (sys.players() != 2) {
        throw Error(ErrorCode::InvalidArgument, "design expects an automation and a human player");
    }
    const Index n = sys.states();
    const Index m_a = sys.input_dim(kAutomation);
    pb.human_cost.validate(sys, kHuman);
    pb.theta_a_init.validate(sys, kAutomation);
    pb.objective.validate(sys);
    pb.bounds.validate(n, m_a);
    if (pb.budget < static_cast<int>(n + m_a) + 1) {
        throw Error(ErrorCode::InvalidArgument, "design budget too small for one simplex");
    }
    const MatrixXd X0 = weighting_or_identity(pb.X0, n);
    const SearchSpace space = make_space(pb.bounds, n, m_a);
    const VectorXd z_init = space.encode(pb.theta_a_init);
    if ((z_init.array() < space.lower.array() - 1e-12).any() ||
        (z_init.array() > space.upper.array() + 1e-12).any()) {
        throw Error(ErrorCode::InvalidArgument, "warm start lies outside the design bounds");
    }

    std::vector<MatrixXd> warm = pb.warm_gains;
    DesignResult best;
    best.J_g = kInf;
    int evaluations = 0;

    auto objective = [&](const VectorXd& z) -> double {
        ++evaluations;
        const CostParams theta_a = space.decode(z);
        double J = kInf;
        RiccatiSolution sol;
        bool solved = false;
        const std::vector<CostParams> costs{theta_a, pb.human_cost};
        if (warm.size() == 2) {
            try {
                sol = solve_coupled_riccati(sys, costs, {}, &warm);
                solved = true;
            } catch (const Error&) {
            }
        }
        if (!solved) {
            try {
                sol = solve_coupled_riccati(sys, costs);
                solved = true;
            } catch (const Error&) {
            }
        }
        if (solved) {
            try {
                J = evaluate_global_cost(sys, sol.K, pb.objective, X0);
            } catch (const Error&) {
                J = kInf;
            }
        }
        if (J < best.J_g) {
            best.J_g = J;
            best.theta_a = theta_a;
            best.K_a = sol.K[kAutomation];
            best.K_h = sol.K[kHuman];
            warm = sol.K;
        }
        best.best_so_far.push_back(best.J_g);
        return J;
    };

    NelderMeadOptions nm;
    nm.lower = space.lower;
    nm.upper = space.upper;
    nm.cancel = pb.cancel;
    nm.x_tolerance = 1e-7;
    nm.f_tolerance = 1e-13;

    // Stage 1: simplex from the warm start.
    const int stage1 = std::max(static_cast<int>(space.dim()) + 2,
                                static_cast<int>(std::lround(0.6 * pb.budget)));
    nm.max_evaluations = stage1;
    nm.initial_step = 0.5;
    NelderMeadResult run = nelder_mead(objective, z_init, nm);
    bool converged = run.converged;
    bool cancelled = run.cancelled;

    // Stage 2: seeded multistart around the incumbent.
    VectorXd z_best = std::isfinite(best.J_g) ? space.encode(best.theta_a) : z_init;
    std::mt19937_64 rng(pb.seed);
    for (int s = 0; s < pb.multistart && !cancelled && evaluations < pb.budget; ++s) {
        VectorXd z = z_best;
        for (Index k = 0; k < z.size(); ++k) z[k] += 4.0 * unit_uniform(rng) - 2.0;
        z = z.cwiseMax(space.lower).cwiseMin(space.upper);
        const double before = best.J_g;
        objective(z);
        if (best.J_g < before) converged = false;
    }

    // Stage 3: polish from the best point found.
    if (!cancelled && evaluations < pb.budget && std::isfinite(best.J_g)) {
        z_best = space.encode(best.theta_a);
        nm.max_evaluations = pb.budget - evaluations;
        nm.initial_step = converged ? 0.05 : 0.25;
        if (nm.max_evaluations >= static_cast<int>(space.dim()) + 1) {
            const NelderMeadResult polish = nelder_mead(objective, z_best, nm);
            converged = polish.converged;
            cancelled = polish.cancelled;
        }
    }

    if (!std::isfinite(best.J_g)) {
        throw Error(ErrorCode::NoStableCandidate,
                    "no evaluated automation cost gave a stable equilibrium");
    }
    best.human_cost = pb.human_cost;
    best.evaluations = evaluations;
    best.converged = converged && !cancelled;
    best.cancelled = cancelled;
    best.budget_exhausted = !best.converged && !cancelled && evaluations >= pb.budget;
    best.max_real_eig = max_real_eigenvalue(closed_loop_matrix(sys, {best.K_a, best.K_h}));
    return best;
}

double relative_cost_change(const CostParams& before, const CostParams& after) {
    if (before.q.size() != after.q.size() || before.r_self.size() != after.r_self.size()) {
        return kInf;
    }
    const double pb = before.r_self[0];
    const double pa = after.r_self[0];
    double worst = 0.0;
    auto cmp = [&](double b, double a) {
        b /= pb;
        a /= pa;
        worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-6));
    };
    for (Index k = 0; k < before.q.size(); ++k) cmp(before.q[k], after.q[k]);
    for (Index k = 0; k < before.r_self.size(); ++k) cmp(before.r_self[k], after.r_self[k]);
    return worst;
}

AdaptOutcome adapt_step(const GameSystem& sys, const DesignResult& current,
                        const HumanEstimate& human, const GlobalObjective& objective,
                        const AdaptPolicy& policy, const MatrixXd* K_h_observed) {
    AdaptOutcome out;
    if (!human.confident) {
        out.cause = "low-confidence identification";
        return out;
    }
    const double change = relative_cost_change(current.human_cost, human.cost);
    const bool moved = change > policy.deadband;
    if (!moved && current.converged) {
        out.cause = "deadband";
        return out;
    }

    DesignProblem pb;
    pb.sys = sys;
    pb.human_cost = human.cost;
    pb.objective = objective;
    pb.theta_a_init = current.theta_a;
    pb.bounds = policy.bounds;
    pb.budget = policy.budget;
    pb.X0 = policy.X0;
    pb.seed = policy.seed;
    pb.multistart = policy.multistart;
    pb.warm_gains = {current.K_a, current.K_h};
    pb.cancel = policy.cancel;

    DesignResult candidate;
    try {
        candidate = design_automation(pb);
    } catch (const Error& e) {
        out.cause = e.what();
        return out;
    }
    if (candidate.cancelled) {
        out.cause = "cancelled";
        return out;
    }
    if (!moved) {
        const double start = candidate.best_so_far.front();
        if (!(candidate.J_g < start - policy.stationary_tolerance * std::abs(start))) {
            out.cause = "design stationary";
            out.stationary = true;
            return out;
        }
    }
    double certificate = candidate.max_real_eig;
    if (K_h_observed != nullptr) {
        certificate = std::max(certificate,
                               max_real_eigenvalue(closed_loop_matrix(sys, {candidate.K_a, *K_h_observed})));
    }
    out.certificate = certificate;
    if (!(certificate < policy.max_real_eig)) {
        out.cause = "stability certificate failed";
        return out;
    }
    out.cause = moved ? "human cost changed" : "continuing unconverged design";
    out.published = std::move(candidate);
    return out;
}

} // namespace sharedctl
