#include "sharedctl/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "sharedctl/riccati.hpp"

namespace sharedctl {
namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double spectral_norm(const MatrixXd& M) {
    if (M.rows() == 1 || M.cols() == 1) return M.norm();
    return Eigen::JacobiSVD<MatrixXd>(M).singularValues()(0);
}

CostParams objective_as_cost(const GlobalObjective& g, const DesignBounds& b) {
    CostParams c;
    const double pin = g.r[kAutomation][0];
    c.q = (g.q / pin).cwiseMax(b.q_lower).cwiseMin(b.q_upper);
    c.r_self = g.r[kAutomation] / pin;
    for (Index k = 1; k < c.r_self.size(); ++k) {
        c.r_self[k] = std::clamp(c.r_self[k], b.r_lower[k - 1], b.r_upper[k - 1]);
    }
    return c;
}

// The estimator starts from the human gain the design predicts.
MatrixXd initial_estimate(const PipelineSettings& settings, const DesignResult& design) {
    if (design.K_h.rows() == settings.sys.input_dim(kHuman) && design.K_h.cols() == settings.sys.states()) {
        return design.K_h;
    }
    return MatrixXd::Zero(settings.sys.input_dim(kHuman), settings.sys.states());
}

} // namespace

std::function<double(double)> Excitation::signal(std::uint64_t seed) const {
    if (amplitudes.size() != frequencies.size()) {
        throw Error(ErrorCode::Config, "excitation amplitudes and frequencies differ in length");
    }
    std::mt19937_64 rng(seed);
    std::vector<double> phases(amplitudes.size());
    for (auto& p : phases) p = 2.0 * std::numbers::pi * unit_uniform(rng);
    const auto amp = amplitudes;
    const auto freq = frequencies;
    auto smooth = [amp, freq, phases](double t) {
        double s = 0.0;
        for (std::size_t k = 0; k < amp.size(); ++k) {
            s += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * t + phases[k]);
        }
        return s;
    };
    switch (kind) {
    case Kind::None:
        return [](double) { return 0.0; };
    case Kind::Sinusoids:
        return smooth;
    case Kind::Steps: {
        double total = 0.0;
        for (double a : amp) total += std::abs(a);
        std::vector<double> levels(64);
        for (auto& l : levels) l = total * (2.0 * unit_uniform(rng) - 1.0);
        const double period = step_period;
        // Even segments follow the smooth profile, odd ones jump to a constant.
        return [smooth, levels, period](double t) {
            const auto seg = static_cast<std::size_t>(std::max(0.0, std::floor(t / period)));
            if (seg % 2 == 0) return smooth(t);
            return levels[(seg / 2) % levels.size()];
        };
    }
    }
    return [](double) { return 0.0; };
}

Disturbance Excitation::disturbance(Index states, std::uint64_t seed) const {
    VectorXd dir = direction;
    if (dir.size() == 0) {
        dir = VectorXd::Ones(states);
    }
    if (dir.size() != states) {
        throw Error(ErrorCode::DimensionMismatch, "excitation direction has wrong length");
    }
    if (kind == Kind::None) return {};
    auto s = signal(seed);
    return [dir, s](double t) { return VectorXd(dir * s(t)); };
}

int PipelineSettings::ticks_per_adaptation() const {
    return std::max(1, static_cast<int>(std::lround(adaptation_period * control_rate)));
}

double PipelineSettings::trace_gate() const {
    return rls_trace_gate ? *rls_trace_gate : static_cast<double>(sys.states()) * p0;
}

MatrixXd synthetic_human(const CostParams& phase_cost, const MatrixXd& K_a, const GameSystem& sys) {
    phase_cost.validate(sys, kHuman);
    std::vector<MatrixXd> gains(sys.players());
    gains[kAutomation] = K_a;
    gains[kHuman] = MatrixXd::Zero(sys.input_dim(kHuman), sys.states());
    return best_response(sys, phase_cost, kHuman, gains);
}

DesignResult design_offline(const PipelineSettings& settings, const CostParams& human, int budget) {
    DesignProblem pb;
    pb.sys = settings.sys;
    pb.human_cost = human;
    pb.objective = settings.objective;
    pb.bounds = settings.policy.bounds;
    pb.theta_a_init = objective_as_cost(settings.objective, pb.bounds);
    pb.budget = budget;
    pb.X0 = settings.policy.X0;
    pb.seed = settings.policy.seed;
    pb.multistart = settings.policy.multistart;
    return design_automation(pb);
}

AdaptationEvent run_adaptation_cycle(const PipelineSettings& settings, const DesignResult& current,
                                     const RlsEstimator& human_rls, const MatrixXd& K_hat_previous,
                                     double t, const std::atomic<bool>* cancel) {
    const auto start = std::chrono::steady_clock::now();
    AdaptationEvent ev;
    ev.t = t;
    ev.theta_a = current.theta_a;
    ev.J_g = current.J_g;
    auto finish = [&] {
        ev.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return ev;
    };
    if (!settings.adaptive) {
        ev.cause = "adaptation disabled";
        return finish();
    }
    if (t < settings.warmup) {
        ev.cause = "warm-up";
        return finish();
    }
    if (!(human_rls.covariance_trace() < settings.trace_gate())) {
        ev.cause = "estimator covariance above gate";
        return finish();
    }

    const MatrixXd K_hat = human_rls.gain();
    const bool comparable = K_hat_previous.rows() == K_hat.rows() && K_hat_previous.cols() == K_hat.cols();
    if (!comparable ||
        !((K_hat - K_hat_previous).norm() <= settings.settle_tolerance * K_hat.norm())) {
        ev.cause = "gain estimate not settled";
        return finish();
    }
    std::vector<MatrixXd> gains(settings.sys.players());
    gains[kAutomation] = current.K_a;
    gains[kHuman] = K_hat;
    const ResidualSystem rs = build_residual_system(settings.sys, gains, kHuman);
    const Identification id = identify_cost(rs, settings.identify);
    const IdentificationConfidence conf = identification_confidence(rs, id, settings.identify);
    ev.identified = id.theta.cost();
    ev.confidence = conf;

    AdaptPolicy policy = settings.policy;
    policy.cancel = cancel;
    const AdaptOutcome out = adapt_step(settings.sys, current,
                                        HumanEstimate{*ev.identified, !conf.low_confidence},
                                        settings.objective, policy, &K_hat);
    ev.cause = out.cause;
    ev.certificate = out.certificate;
    ev.stationary = out.stationary;
    if (out.published) {
        ev.published = true;
        ev.design = out.published;
        ev.theta_a = out.published->theta_a;
        ev.J_g = out.published->J_g;
    }
    return finish();
}

ScenarioConfig ScenarioConfig::vehicle_manipulator() {
    ScenarioConfig cfg;
    MatrixXd A(3, 3);
    A << -0.1, 0, 0, 0, 0, 0.9, 0, 0, 0;
    MatrixXd Ba(3, 1);
    Ba << 1.95, 0, 1.25;
    MatrixXd Bh(3, 1);
    Bh << 0.85, 0, 0;
    cfg.pipeline.sys = GameSystem(A, {Ba, Bh});
    cfg.pipeline.objective.q = VectorXd(3);
    cfg.pipeline.objective.q << 35, 1, 3;
    cfg.pipeline.objective.r = {VectorXd::Ones(1), VectorXd::Ones(1)};
    cfg.pipeline.policy.bounds = DesignBounds::uniform(3, 1);

    CostParams h1;
    h1.q = VectorXd(3);
    h1.q << 50, 0.2, 0.2;
    h1.r_self = VectorXd::Ones(1);
    CostParams h2 = h1;
    h2.q << 0.5, 0.2, 0.2;
    cfg.phases = {{0.0, h1}, {60.0, h2}};
    cfg.x0 = VectorXd::Zero(3);
    return cfg;
}

void ScenarioConfig::validate() const {
    const auto& p = pipeline;
    if (p.sys.players() != 2) throw Error(ErrorCode::Config, "scenario needs two players");
    p.objective.validate(p.sys);
    p.policy.bounds.validate(p.sys.states(), p.sys.input_dim(kAutomation));
    if (!(p.control_rate > 0.0) || !(p.adaptation_period > 0.0)) {
        throw Error(ErrorCode::Config, "rates must be positive");
    }
    if (!(p.lambda_f > 0.0 && p.lambda_f <= 1.0)) {
        throw Error(ErrorCode::Config, "lambda_f must lie in (0, 1]");
    }
    if (!(p.p0 > 0.0)) throw Error(ErrorCode::Config, "p0 must be positive");
    if (!(duration > 0.0)) throw Error(ErrorCode::Config, "duration must be positive");
    if (phases.empty() || phases.front().start != 0.0) {
        throw Error(ErrorCode::Config, "the first human phase must start at t = 0");
    }
    for (std::size_t k = 0; k < phases.size(); ++k) {
        phases[k].cost.validate(p.sys, kHuman);
        if (k > 0 && !(phases[k].start > phases[k - 1].start)) {
            throw Error(ErrorCode::Config, "human phases must be strictly time-ordered");
        }
    }
    if (!(phases.back().start < duration)) {
        throw Error(ErrorCode::Config, "duration must cover every human phase");
    }
    if (x0.size() != p.sys.states()) throw Error(ErrorCode::Config, "x0 has wrong length");
    if (offline_budget < 1) throw Error(ErrorCode::Config, "offline budget must be positive");
    if (theta_a_offline) theta_a_offline->validate(p.sys, kAutomation);
}

const HumanPhase& ScenarioConfig::phase_at(double t) const {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < phases.size(); ++k) {
        if (phases[k].start <= t + 1e-9) idx = k;
    }
    return phases[idx];
}

SharedLoop::SharedLoop(PipelineSettings settings, DesignResult initial, VectorXd x0, Disturbance w,
                       std::function<double(double)> reference)
    : settings_(std::move(settings)),
      design_(std::move(initial)),
      x_(std::move(x0)),
      w_(std::move(w)),
      reference_(std::move(reference)),
      rls_(initial_estimate(settings_, design_), settings_.lambda_f, settings_.p0),
      K_hat_previous_(rls_.gain()) {}

Sample SharedLoop::tick(const VectorXd& u_h, const MatrixXd* K_h_reference, bool feed_estimator) {
    const double dt = settings_.control_period();
    const double t = static_cast<double>(ticks_) * dt;
    Sample s;
    s.t = t;
    s.x = x_;
    s.ref_m = 0.0;
    s.ref_v = reference(t);
    s.K_a = design_.K_a;
    s.u_a = -design_.K_a * x_;
    s.u_h = u_h;
    if (feed_estimator) rls_.update(x_, u_h);
    s.K_h_hat = rls_.gain();
    s.K_h = K_h_reference != nullptr ? *K_h_reference : design_.K_h;
    s.eig = stability_margins(closed_loop_matrix(settings_.sys, {s.K_a, s.K_h_hat}));
    s.e_K = spectral_norm(s.K_h - s.K_h_hat);
    s.cost_rate = global_cost_rate(settings_.objective, x_, {s.u_a, s.u_h});

    const VectorXd next = rk4_step_inputs(settings_.sys, {s.u_a, s.u_h}, x_, t, dt, w_);
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > 1e12) {
        throw Error(ErrorCode::NonFinite, "state diverged at t = " + std::to_string(t + dt));
    }
    x_ = next;
    ++ticks_;
    return s;
}

bool SharedLoop::adaptation_due() const {
    return ticks_ > 0 && ticks_ % settings_.ticks_per_adaptation() == 0;
}

AdaptationEvent SharedLoop::adapt(const std::atomic<bool>* cancel) {
    AdaptationEvent ev = run_adaptation_cycle(settings_, design_, rls_, K_hat_previous_, time(), cancel);
    mark_adaptation();
    if (ev.design) design_ = *ev.design;
    if (ev.stationary) design_.converged = true;
    return ev;
}

void SharedLoop::reset(const VectorXd& x0) {
    x_ = x0;
    ticks_ = 0;
    rls_ = RlsEstimator(initial_estimate(settings_, design_), settings_.lambda_f, settings_.p0);
    K_hat_previous_ = rls_.gain();
}

ScenarioResult run_scenario(const ScenarioConfig& cfg_in, const DesignResult* offline) {
    cfg_in.validate();
    ScenarioConfig cfg = cfg_in;
    cfg.pipeline.policy.seed = cfg.seed;
    const GameSystem& sys = cfg.pipeline.sys;

    ScenarioResult result;
    if (offline != nullptr) {
        result.offline = *offline;
    } else if (cfg.theta_a_offline) {
        result.offline = evaluate_design(sys, *cfg.theta_a_offline, cfg.phases.front().cost,
                                         cfg.pipeline.objective, cfg.pipeline.policy.X0);
    } else {
        result.offline = design_offline(cfg.pipeline, cfg.phases.front().cost, cfg.offline_budget);
    }

    SharedLoop loop(cfg.pipeline, result.offline, cfg.x0,
                    cfg.excitation.disturbance(sys.states(), cfg.seed),
                    cfg.excitation.signal(cfg.seed));
    const double dt = cfg.pipeline.control_period();
    const auto steps = static_cast<std::int64_t>(std::llround(cfg.duration / dt));
    result.series.reserve(static_cast<std::size_t>(steps));

    const HumanPhase* phase = nullptr;
    MatrixXd K_a_for_human;
    MatrixXd K_h;
    try {
        for (std::int64_t k = 0; k < steps; ++k) {
            const HumanPhase& now = cfg.phase_at(static_cast<double>(k) * dt);
            if (&now != phase || loop.design().K_a != K_a_for_human) {
                phase = &now;
                K_a_for_human = loop.design().K_a;
                K_h = synthetic_human(now.cost, K_a_for_human, sys);
            }
            const VectorXd u_h = -K_h * loop.state();
            result.series.push_back(loop.tick(u_h, &K_h));
            if (loop.adaptation_due()) result.events.push_back(loop.adapt());
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFinite && e.code() != ErrorCode::NotStabilizable) throw;
        result.aborted = true;
        result.abort_reason = e.what();
    }
    result.summary = summarize(cfg, result.series, result.events);
    return result;
}

double rmse_manipulator(const TimeSeries& series, double t_from) {
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& s : series) {
        if (s.t + 1e-9 < t_from) continue;
        acc += s.x[0] * s.x[0];
        ++count;
    }
    if (count == 0) throw Error(ErrorCode::InvalidArgument, "RMSE of an empty series");
    return std::sqrt(acc / static_cast<double>(count));
}

std::vector<double> gain_error(const std::vector<MatrixXd>& truth, const std::vector<MatrixXd>& estimate) {
    if (truth.size() != estimate.size()) {
        throw Error(ErrorCode::DimensionMismatch, "gain schedules are not aligned");
    }
    std::vector<double> e(truth.size());
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (truth[k].rows() != estimate[k].rows() || truth[k].cols() != estimate[k].cols()) {
            throw Error(ErrorCode::DimensionMismatch, "gain shapes differ");
        }
        e[k] = spectral_norm(truth[k] - estimate[k]);
    }
    return e;
}

ScenarioSummary summarize(const ScenarioConfig& cfg, const TimeSeries& series,
                          const std::vector<AdaptationEvent>& events) {
    ScenarioSummary s;
    s.seed = cfg.seed;
    for (const auto& ev : events) {
        if (ev.published) {
            ++s.adaptations;
        } else {
            ++s.holds;
        }
    }
    if (series.empty()) return s;
    s.rmse_full = rmse_manipulator(series);
    const double window = cfg.phases.empty() ? 0.0 : cfg.phases.back().start;
    s.rmse_adaptive_window = series.back().t + 1e-9 >= window ? rmse_manipulator(series, window) : 0.0;
    s.final_eigs = series.back().eig;
    s.max_eig_over_trace = -std::numeric_limits<double>::infinity();
    for (const auto& r : series) s.max_eig_over_trace = std::max(s.max_eig_over_trace, r.eig.front());
    s.mean_e_K_per_phase.assign(cfg.phases.size(), 0.0);
    std::vector<int> counts(cfg.phases.size(), 0);
    for (const auto& r : series) {
        std::size_t idx = 0;
        for (std::size_t k = 0; k < cfg.phases.size(); ++k) {
            if (cfg.phases[k].start <= r.t + 1e-9) idx = k;
        }
        s.mean_e_K_per_phase[idx] += r.e_K;
        ++counts[idx];
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] > 0) s.mean_e_K_per_phase[k] /= counts[k];
    }
    return s;
}

} // namespace sharedctl
