#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sharedctl/designer.hpp"
#include "sharedctl/game.hpp"
#include "sharedctl/inverse_game.hpp"
#include "sharedctl/rls.hpp"
#include "sharedctl/simulate.hpp"

namespace sharedctl {

/// Exogenous excitation w(t) = direction * s(t) on the error dynamics.
struct Excitation {
    enum class Kind {
        Sinusoids, ///< s(t) = sum_k a_k sin(2 pi f_k t + phi_k), phases drawn from the seed
        Steps,     ///< alternating smooth (sinusoid) and constant-level segments
        None,
    };
    Kind kind = Kind::Sinusoids;
    std::vector<double> amplitudes{0.5, 0.3, 0.2};
    std::vector<double> frequencies{0.1, 0.23, 0.41};
    /// Empty means every state equally.
    VectorXd direction;
    double step_period = 10.0;

    /// Scalar profile s(t) for a given seed.
    [[nodiscard]] std::function<double(double)> signal(std::uint64_t seed) const;
    [[nodiscard]] Disturbance disturbance(Index states, std::uint64_t seed) const;
};

struct HumanPhase {
    double start = 0.0;
    CostParams cost;
};

/// Everything the control/adaptation pipeline needs, shared by the offline
/// scenario and the live service.
struct PipelineSettings {
    GameSystem sys;
    GlobalObjective objective;
    double control_rate = 25.0;
    double adaptation_period = 1.0;
    double lambda_f = 0.985;
    double p0 = 1000.0;
    /// No identification before this time.
    double warmup = 5.0;
    bool adaptive = true;
    /// Identification runs only while trace(P_rls) is below this; unset means n * p0.
    std::optional<double> rls_trace_gate;
    /// Identification also waits until the gain estimate moved by less than
    /// this fraction of its norm over the last adaptation period.
    double settle_tolerance = 0.05;
    IdentifyOptions identify;
    AdaptPolicy policy;

    [[nodiscard]] double control_period() const { return 1.0 / control_rate; }
    [[nodiscard]] int ticks_per_adaptation() const;
    [[nodiscard]] double trace_gate() const;
};

struct AdaptationEvent {
    double t = 0.0;
    bool published = false;
    std::string cause;
    std::optional<CostParams> identified;
    std::optional<IdentificationConfidence> confidence;
    /// Design in force after the event.
    CostParams theta_a;
    double J_g = 0.0;
    std::optional<double> certificate;
    /// The current design should be treated as converged from now on.
    bool stationary = false;
    double elapsed_seconds = 0.0;
    std::optional<DesignResult> design;
};

/// One adaptation opportunity: gates on warm-up, RLS covariance and the
/// drift of K_h_hat since `K_hat_previous` (the estimate one period ago),
/// identifies the human from (K_a, K_h_hat), then runs adapt_step.
AdaptationEvent run_adaptation_cycle(const PipelineSettings& settings, const DesignResult& current,
                                     const RlsEstimator& human_rls, const MatrixXd& K_hat_previous,
                                     double t, const std::atomic<bool>* cancel = nullptr);

/// Offline design against `human` starting from the objective's own weights.
DesignResult design_offline(const PipelineSettings& settings, const CostParams& human, int budget);

struct ScenarioConfig {
    PipelineSettings pipeline;
    std::vector<HumanPhase> phases;
    double duration = 120.0;
    VectorXd x0;
    Excitation excitation;
    std::uint64_t seed = 1;
    int offline_budget = 2000;
    /// Skips the offline design when set.
    std::optional<CostParams> theta_a_offline;

    /// Vehicle-manipulator defaults: the three-state error model with the
    /// human switching from diag(50, 0.2, 0.2) to diag(0.5, 0.2, 0.2) at 60 s.
    static ScenarioConfig vehicle_manipulator();
    void validate() const;
    [[nodiscard]] const HumanPhase& phase_at(double t) const;
};

/// One control tick.
struct Sample {
    double t = 0.0;
    VectorXd x;
    double ref_m = 0.0;
    double ref_v = 0.0;
    VectorXd u_a;
    VectorXd u_h;
    MatrixXd K_a;
    /// Gain the human actually applied.
    MatrixXd K_h;
    MatrixXd K_h_hat;
    /// Real parts of eig(A - B_a K_a - B_h K_h_hat), descending.
    std::vector<double> eig;
    double e_K = 0.0;
    double cost_rate = 0.0;

    [[nodiscard]] double p_m() const { return ref_m + x[0]; }
    [[nodiscard]] double p_v() const { return ref_v + x[1]; }
};

using TimeSeries = std::vector<Sample>;

/// Control-rate half of the pipeline: plant state, human RLS and the
/// published design. Deterministic given the inputs it is fed.
class SharedLoop {
public:
    SharedLoop(PipelineSettings settings, DesignResult initial, VectorXd x0, Disturbance w,
               std::function<double(double)> reference);

    /// Applies u_a = -K_a x_k and `u_h` over one control period, feeds the
    /// RLS with (x_k, u_h) and returns the record of tick k. `K_h_reference`
    /// is the gain e_K is measured against; without it the design's predicted
    /// human gain is used. With `feed_estimator` false the sample is not
    /// given to the RLS. Throws NonFinite if the state leaves the guard.
    Sample tick(const VectorXd& u_h, const MatrixXd* K_h_reference = nullptr, bool feed_estimator = true);

    /// True right after every full adaptation period of ticks.
    [[nodiscard]] bool adaptation_due() const;

    /// Runs one adaptation cycle on the live estimator and publishes its result.
    AdaptationEvent adapt(const std::atomic<bool>* cancel = nullptr);

    void publish(const DesignResult& design) { design_ = design; }
    void reset(const VectorXd& x0);

    [[nodiscard]] double time() const { return static_cast<double>(ticks_) * settings_.control_period(); }
    [[nodiscard]] std::int64_t ticks() const noexcept { return ticks_; }
    [[nodiscard]] const VectorXd& state() const noexcept { return x_; }
    [[nodiscard]] const RlsEstimator& rls() const noexcept { return rls_; }
    /// Estimate at the previous adaptation opportunity.
    [[nodiscard]] const MatrixXd& previous_estimate() const noexcept { return K_hat_previous_; }
    /// Records the current estimate as the reference for the next settle check.
    void mark_adaptation() { K_hat_previous_ = rls_.gain(); }
    [[nodiscard]] const DesignResult& design() const noexcept { return design_; }
    [[nodiscard]] const PipelineSettings& settings() const noexcept { return settings_; }
    [[nodiscard]] double reference(double t) const { return reference_ ? reference_(t) : 0.0; }

private:
    PipelineSettings settings_;
    DesignResult design_;
    VectorXd x_;
    Disturbance w_;
    std::function<double(double)> reference_;
    RlsEstimator rls_;
    MatrixXd K_hat_previous_;
    std::int64_t ticks_ = 0;
};

struct ScenarioSummary {
    double rmse_adaptive_window = 0.0;
    double rmse_full = 0.0;
    std::vector<double> final_eigs;
    int holds = 0;
    int adaptations = 0;
    std::uint64_t seed = 0;
    /// Not part of the persisted summary.
    std::vector<double> mean_e_K_per_phase;
    double max_eig_over_trace = 0.0;
};

struct ScenarioResult {
    TimeSeries series;
    std::vector<AdaptationEvent> events;
    ScenarioSummary summary;
    DesignResult offline;
    bool aborted = false;
    std::string abort_reason;
};

/// Runs the dual-rate loop on a simulated clock. Every tick applies
/// u_h = -K_h x (synthetic human) and u_a = -K_a x held over the step, feeds
/// the human RLS, and integrates one RK4 step; every adaptation period either
/// publishes a redesign or records a hold. `offline` skips the offline design.
ScenarioResult run_scenario(const ScenarioConfig& cfg, const DesignResult* offline = nullptr);

/// sqrt(mean(d_m^2)) over samples with t >= t_from, d_m = x_1.
double rmse_manipulator(const TimeSeries& series, double t_from = -1e300);

/// ||K_true[k] - K_hat[k]||_2 per sample.
std::vector<double> gain_error(const std::vector<MatrixXd>& truth, const std::vector<MatrixXd>& estimate);

/// Human's best response to the automation gain for its phase cost.
MatrixXd synthetic_human(const CostParams& phase_cost, const MatrixXd& K_a, const GameSystem& sys);

ScenarioSummary summarize(const ScenarioConfig& cfg, const TimeSeries& series,
                          const std::vector<AdaptationEvent>& events);

} // namespace sharedctl
