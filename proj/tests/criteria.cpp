#include "criteria.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sharedctl/inverse_game.hpp"
#include "sharedctl/riccati.hpp"

namespace criteria {

using namespace sharedctl;

namespace {

double normalized_error(const CostParams& truth, const CostParams& estimate) {
    const double s_t = truth.r_self[0];
    const double s_e = estimate.r_self[0];
    VectorXd a(truth.q.size() + truth.r_self.size());
    VectorXd b(a.size());
    a << truth.q / s_t, truth.r_self / s_t;
    b << estimate.q / s_e, estimate.r_self / s_e;
    return (a - b).cwiseAbs().maxCoeff();
}

double relative_error(const CostParams& truth, const CostParams& estimate) {
    const VectorXd a = truth.q / truth.r_self[0];
    const VectorXd b = estimate.q / estimate.r_self[0];
    return (a - b).norm() / a.norm();
}

MatrixXd row(std::initializer_list<double> v) {
    MatrixXd m(1, static_cast<Index>(v.size()));
    Index k = 0;
    for (double e : v) m(0, k++) = e;
    return m;
}

} // namespace

RoundTrip inverse_round_trip(int draws, double noise, std::uint64_t seed) {
    const GameSystem sys = ScenarioConfig::vehicle_manipulator().pipeline.sys;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> log_q(std::log(0.1), std::log(100.0));
    std::uniform_real_distribution<double> log_r(std::log(0.2), std::log(5.0));
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto draw = [&] {
        CostParams c;
        c.q = VectorXd(3);
        for (Index k = 0; k < 3; ++k) c.q[k] = std::exp(log_q(rng));
        c.r_self = VectorXd::Constant(1, std::exp(log_r(rng)));
        return c;
    };

    RoundTrip out;
    std::vector<double> noisy;
    while (out.draws < draws) {
        const std::vector<CostParams> costs{draw(), draw()};
        RiccatiSolution sol;
        try {
            sol = solve_coupled_riccati(sys, costs);
        } catch (const Error&) {
            continue; // no stabilizing equilibrium reached for this draw
        }
        ++out.draws;
        std::vector<MatrixXd> K_noisy = sol.K;
        for (auto& K : K_noisy) {
            for (Index k = 0; k < K.size(); ++k) K.data()[k] += noise * gauss(rng);
        }
        bool hit = true;
        for (std::size_t i = 0; i < 2; ++i) {
            const auto exact = identify_cost(build_residual_system(sys, sol.K, i));
            const double err = normalized_error(costs[i], exact.theta.cost());
            out.max_exact_error = std::max(out.max_exact_error, err);
            hit = hit && err <= 1e-4;
            const auto rough = identify_cost(build_residual_system(sys, K_noisy, i));
            noisy.push_back(relative_error(costs[i], rough.theta.cost()));
        }
        if (hit) ++out.exact_hits;
    }
    std::nth_element(noisy.begin(), noisy.begin() + static_cast<long>(noisy.size() / 2), noisy.end());
    out.median_noisy_error = noisy[noisy.size() / 2];
    return out;
}

MatrixXd reference_K_a() { return row({4.39, 0.69, 1.62}); }
MatrixXd reference_K_h() { return row({3.16, -0.69, -1.88}); }
MatrixXd reference_K_h_switch() { return row({0.72, -0.38, -1.13}); }

DesignResult reference_implied_design() {
    const auto cfg = ScenarioConfig::vehicle_manipulator();
    const auto& sys = cfg.pipeline.sys;
    const auto id = identify_cost(build_residual_system(sys, {reference_K_a(), reference_K_h()}, kAutomation));
    CostParams theta = id.theta.cost();
    theta.r_cross.clear();
    return evaluate_design(sys, theta, cfg.phases.front().cost, cfg.pipeline.objective);
}

MatrixXd switch_automation_gain(const CostParams& theta_a) {
    const auto cfg = ScenarioConfig::vehicle_manipulator();
    const auto sol = solve_coupled_riccati(cfg.pipeline.sys, {theta_a, cfg.phases.back().cost});
    return sol.K[kAutomation];
}

const Sample& sample_at(const TimeSeries& series, double t) {
    auto it = std::min_element(series.begin(), series.end(), [t](const Sample& a, const Sample& b) {
        return std::abs(a.t - t) < std::abs(b.t - t);
    });
    return *it;
}

ScenarioCheck scenario_check(const ScenarioConfig& cfg) {
    ScenarioConfig adaptive = cfg;
    adaptive.pipeline.adaptive = true;
    ScenarioConfig fixed = cfg;
    fixed.pipeline.adaptive = false;
    const auto a = run_scenario(adaptive);
    const auto f = run_scenario(fixed, &a.offline);

    ScenarioCheck out;
    out.rmse_adaptive = a.summary.rmse_adaptive_window;
    out.rmse_fixed = f.summary.rmse_adaptive_window;
    out.final_eigs = a.summary.final_eigs;
    out.max_eig = -1e300;
    for (const auto* r : {&a, &f}) {
        for (const auto& s : r->series) {
            for (double e : s.eig) out.max_eig = std::max(out.max_eig, e);
        }
        if (r->aborted) out.max_eig = std::max(out.max_eig, 1e300);
    }
    for (std::size_t k = 1; k < cfg.phases.size(); ++k) {
        const double ts = cfg.phases[k].start;
        out.decay_ratios.push_back(sample_at(a.series, ts + 30.0).e_K / sample_at(a.series, ts + 1.0).e_K);
    }
    return out;
}

AppConfig bundled_config() { return load_config(SHAREDCTL_SOURCE_DIR "/configs/paper_s4.json"); }

} // namespace criteria

#include <sys/wait.h>

#include <fstream>
#include <thread>

#include "sharedctl/hil_server.hpp"
#include "sharedctl/identify.hpp"
#include "sharedctl/trace_io.hpp"
#include "ws_client.hpp"

namespace criteria {

using namespace sharedctl;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return 1e300;
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
    return d;
}

} // namespace

PipelineCheck pipeline_consistency(AppConfig cfg, const std::filesystem::path& workdir) {
    PipelineCheck out;
    // Power-of-two gain keeps u_h = gain * (u_h / gain) exact.
    cfg.hil.input_gain = 8.0;
    cfg.hil.excitation = cfg.scenario.excitation;
    const auto offline = run_scenario(cfg.scenario);
    out.offline_rows = offline.series.size();

    HilSession session(cfg, offline.offline);
    session.set_virtual_clock(true);
    {
        HilServer server(session, "127.0.0.1", 0);
        server.start();
        WsClient client("127.0.0.1", server.port());
        // Accept completes asynchronously; wait until the server counts us.
        for (int k = 0; k < 200 && server.clients() == 0; ++k) {
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        for (const auto& s : offline.series) {
            const double axis = s.u_h[0] / cfg.hil.input_gain;
            client.send(Json{{"type", "input"}, {"axis", axis}}.dump());
        }
        const auto target = static_cast<std::int64_t>(offline.series.size());
        for (int k = 0; k < 60000; ++k) {
            if (static_cast<std::int64_t>(session.recorded().size()) >= target) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        server.stop();
    }

    const auto live = session.recorded();
    out.live_rows = live.size();
    const std::size_t rows = std::min(live.size(), offline.series.size());
    for (std::size_t k = 0; k < rows; ++k) {
        out.max_state_diff = std::max(out.max_state_diff, (live[k].x - offline.series[k].x).cwiseAbs().maxCoeff());
    }
    if (live.size() != offline.series.size()) out.max_state_diff = 1e300;

    const auto a = offline.summary;
    const auto b = session.summary();
    out.max_metric_diff = std::max({std::abs(a.rmse_adaptive_window - b.rmse_adaptive_window),
                                    std::abs(a.rmse_full - b.rmse_full), max_abs_diff(a.final_eigs, b.final_eigs),
                                    std::abs(static_cast<double>(a.holds - b.holds)),
                                    std::abs(static_cast<double>(a.adaptations - b.adaptations))});

    const auto events = session.events();
    out.events_match = events.size() == offline.events.size();
    for (std::size_t k = 0; out.events_match && k < events.size(); ++k) {
        out.events_match = events[k].published == offline.events[k].published &&
                           events[k].cause == offline.events[k].cause;
    }

    // Re-identify the recorded session with the command-line tool.
    std::filesystem::create_directories(workdir);
    const auto csv = workdir / "session_trace.csv";
    session.record(csv, workdir / "session_summary.json");
    Json doc{{"schema_version", 1},
             {"trace_identify",
              {{"trace", csv.string()}, {"lambda_f", cfg.scenario.pipeline.lambda_f}, {"p0", cfg.scenario.pipeline.p0}}}};
    const auto cfg_path = workdir / "identify_config.json";
    std::ofstream(cfg_path) << doc.dump(2);
    const std::string cmd = std::string(SHAREDCTL_CLI) + " identify --config " + cfg_path.string() + " --out " +
                            (workdir / "identify").string() + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    out.identify_exit = WIFEXITED(status) ? WEXITSTATUS(status) : -1;

    const AdaptationEvent* last = nullptr;
    for (const auto& ev : events) {
        if (ev.identified) last = &ev;
    }
    out.identify_rel_diff = 1e300;
    if (last != nullptr && (out.identify_exit == 0 || out.identify_exit == 4)) {
        std::ifstream in(workdir / "identify" / "identify.json");
        const Json j = Json::parse(in);
        const auto& human = j["players"][1]["theta"];
        const VectorXd q = vector_from_json(human["q"], "q") / human["r"][0].get<double>();
        const VectorXd q_live = last->identified->q / last->identified->r_self[0];
        out.identify_rel_diff = (q - q_live).norm() / q_live.norm();
        out.live_identify_t = last->t;
    }
    return out;
}

SoakCheck realtime_soak(const AppConfig& cfg, double seconds) {
    SoakCheck out;
    const auto& p = cfg.scenario.pipeline;
    const auto offline = design_offline(p, cfg.scenario.phases.front().cost, cfg.scenario.offline_budget);

    // Forced full redesigns: a confident, moved human estimate every time.
    {
        PipelineSettings s = p;
        s.warmup = 0.0;
        s.settle_tolerance = 1e300;
        s.rls_trace_gate = 1e300;
        const MatrixXd K_switch = synthetic_human(cfg.scenario.phases.back().cost, offline.K_a, p.sys);
        RlsEstimator rls(K_switch, p.lambda_f, p.p0);
        for (int k = 0; k < 5; ++k) {
            const auto ev = run_adaptation_cycle(s, offline, rls, K_switch, 10.0);
            out.worst_forced_cycle = std::max(out.worst_forced_cycle, ev.elapsed_seconds);
        }
    }

    HilSession session(cfg, offline);
    WallClockDriver driver(session, [] { return true; });
    std::atomic<bool> stop{false};
    const double gain = cfg.hil.input_gain;
    std::thread human([&] {
        const auto start = std::chrono::steady_clock::now();
        auto next = start;
        MatrixXd K_a = offline.K_a;
        MatrixXd K_h = offline.K_h;
        bool switched = false;
        while (!stop) {
            next += std::chrono::milliseconds(40);
            std::this_thread::sleep_until(next);
            const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            const auto design = session.published();
            if (!switched && t > seconds / 2) switched = true;
            if (design->K_a != K_a || (switched && K_h == offline.K_h)) {
                K_a = design->K_a;
                const auto& cost = switched ? cfg.scenario.phases.back().cost : cfg.scenario.phases.front().cost;
                K_h = synthetic_human(cost, K_a, p.sys);
            }
            const auto hist = session.history();
            const VectorXd x = hist.empty() ? VectorXd::Zero(p.sys.states()) : hist.back().x;
            const double axis = std::clamp(-(K_h * x)(0) / gain, -1.0, 1.0);
            session.handle_line(Json{{"type", "input"}, {"axis", axis}}.dump());
        }
    });
    driver.start();
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    driver.stop();
    stop = true;
    human.join();

    out.seconds = seconds;
    const auto timings = session.timings();
    out.counters = session.counters();
    out.ticks = timings.tick_seconds.size();
    std::size_t hits = 0;
    for (double t : timings.tick_seconds) {
        hits += t < p.control_period() ? 1 : 0;
        out.worst_tick = std::max(out.worst_tick, t);
    }
    // A tick that started late also missed its deadline.
    const auto late = static_cast<std::size_t>(out.counters.missed_ticks);
    out.tick_hit_rate = out.ticks == 0 ? 0.0
                                       : static_cast<double>(hits - std::min(hits, late)) / static_cast<double>(out.ticks);
    out.cycles = timings.adaptation_seconds.size();
    std::size_t in_time = 0;
    for (double t : timings.adaptation_seconds) {
        in_time += t < p.adaptation_period ? 1 : 0;
        out.worst_adaptation = std::max(out.worst_adaptation, t);
    }
    // The overrun counter also holds due cycles skipped while one was running.
    const std::size_t late_cycles = out.cycles - in_time;
    const auto overruns = static_cast<std::size_t>(out.counters.adaptation_overruns);
    const std::size_t skipped = overruns > late_cycles ? overruns - late_cycles : 0;
    const std::size_t scheduled = out.cycles + skipped;
    out.adaptation_hit_rate = scheduled == 0 ? 0.0 : static_cast<double>(in_time) / static_cast<double>(scheduled);
    for (const auto& ev : session.events()) out.published += ev.published ? 1 : 0;
    return out;
}

} // namespace criteria
