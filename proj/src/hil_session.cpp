#include "sharedctl/hil_session.hpp"

#include <algorithm>
#include <chrono>

#include "sharedctl/trace_io.hpp"

namespace sharedctl {
namespace {

PipelineSettings live_settings(const AppConfig& cfg) {
    PipelineSettings p = cfg.scenario.pipeline;
    p.policy.max_real_eig = std::min(p.policy.max_real_eig, cfg.hil.max_real_eig);
    p.policy.seed = cfg.scenario.seed;
    return p;
}

Json flat(const MatrixXd& M) {
    Json a = Json::array();
    for (Index r = 0; r < M.rows(); ++r) {
        for (Index c = 0; c < M.cols(); ++c) a.push_back(M(r, c));
    }
    return a;
}

double steady_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

} // namespace

HilSession::HilSession(const AppConfig& config, DesignResult initial)
    : config_(config),
      initial_(initial),
      loop_(live_settings(config), initial, config.scenario.x0,
            config.hil.excitation.disturbance(config.scenario.pipeline.sys.states(), config.scenario.seed),
            config.hil.excitation.signal(config.scenario.seed)),
      design_(std::make_shared<const DesignResult>(std::move(initial))) {}

HilSession::~HilSession() = default;

void HilSession::set_sink(std::function<void(const std::string&)> sink) {
    std::lock_guard lock(sink_mutex_);
    sink_ = std::move(sink);
}

void HilSession::emit(const std::string& line) {
    std::lock_guard lock(sink_mutex_);
    if (sink_) sink_(line);
}

std::string HilSession::state_message(const Sample& s, const std::string& mode) {
    Json eig = Json::array();
    for (double e : s.eig) eig.push_back(e);
    Json j{{"type", "state"},
           {"t", s.t},
           {"x", to_json(s.x)},
           {"ref", Json::array({s.ref_m, s.ref_v})},
           {"u_a", to_json(s.u_a)},
           {"u_h", to_json(s.u_h)},
           {"K_a", flat(s.K_a)},
           {"K_h_hat", flat(s.K_h_hat)},
           {"eig", eig},
           {"e_K", s.e_K},
           {"mode", mode}};
    return j.dump();
}

std::string HilSession::adaptation_message(const AdaptationEvent& ev) {
    Json j{{"type", "adaptation"},
           {"t", ev.t},
           {"theta_a", Json{{"q", to_json(ev.theta_a.q)}, {"r", to_json(ev.theta_a.r_self)}}},
           {"J_g", ev.J_g},
           {"held", !ev.published},
           {"cause", ev.cause}};
    return j.dump();
}

bool HilSession::present_locked(double now) const {
    if (!axis_) return false;
    if (virtual_clock_) return true;
    return now - last_input_time_ <= config_.hil.absent_timeout;
}

void HilSession::tick_locked(const VectorXd& u_h, bool present) {
    const auto start = std::chrono::steady_clock::now();
    Sample s = loop_.tick(u_h, nullptr, present);
    const std::string mode = (present && !fixed_by_client_) ? "adaptive" : "fixed";
    recorded_.push_back(s);
    history_.push_back(s);
    const auto keep = static_cast<std::size_t>(
        std::max(1.0, std::ceil(config_.hil.history_seconds * loop_.settings().control_rate)));
    while (history_.size() > keep) history_.pop_front();
    ++counters_.ticks;
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    timings_.tick_seconds.push_back(elapsed);
    if (elapsed > loop_.settings().control_period()) ++counters_.tick_overruns;
    emit(state_message(s, mode));
}

bool HilSession::handle_line(std::string_view line) {
    Json msg;
    try {
        msg = Json::parse(line);
    } catch (const nlohmann::json::exception&) {
        std::lock_guard lock(mutex_);
        ++counters_.malformed_messages;
        return false;
    }
    auto malformed = [&] {
        std::lock_guard lock(mutex_);
        ++counters_.malformed_messages;
        return false;
    };
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) return malformed();
    const std::string type = msg["type"].get<std::string>();
    if (type == "input") {
        if (!msg.contains("axis") || !msg["axis"].is_number()) return malformed();
        const double axis = msg["axis"].get<double>();
        if (!std::isfinite(axis)) return malformed();
        bool due = false;
        {
            std::lock_guard lock(mutex_);
            axis_ = std::clamp(axis, -1.0, 1.0);
            last_input_time_ = now_;
            if (virtual_clock_) {
                const VectorXd u_h = VectorXd::Constant(loop_.settings().sys.input_dim(kHuman),
                                                        config_.hil.input_gain * *axis_);
                tick_locked(u_h, true);
                due = loop_.adaptation_due();
            }
        }
        if (due) adaptation_cycle();
        return true;
    }
    if (type == "mode") {
        if (!msg.contains("value") || !msg["value"].is_string()) return malformed();
        const std::string value = msg["value"].get<std::string>();
        if (value != "adaptive" && value != "fixed") return malformed();
        std::lock_guard lock(mutex_);
        fixed_by_client_ = value == "fixed";
        return true;
    }
    if (type == "reset") {
        reset();
        return true;
    }
    return malformed();
}

bool HilSession::control_tick(double now) {
    std::lock_guard lock(mutex_);
    now_ = now;
    const bool present = present_locked(now);
    const double axis = present ? *axis_ : 0.0;
    const VectorXd u_h = VectorXd::Constant(loop_.settings().sys.input_dim(kHuman), config_.hil.input_gain * axis);
    tick_locked(u_h, present);
    return loop_.adaptation_due();
}

void HilSession::adaptation_cycle(const std::atomic<bool>* cancel) {
    std::unique_lock lock(mutex_);
    const std::uint64_t generation = generation_;
    const PipelineSettings settings = loop_.settings();
    const DesignResult current = loop_.design();
    const RlsEstimator rls = loop_.rls();
    const MatrixXd previous = loop_.previous_estimate();
    const double t = loop_.time();
    const bool present = present_locked(now_);
    const bool fixed = fixed_by_client_;
    loop_.mark_adaptation();
    lock.unlock();

    AdaptationEvent ev;
    if (!present || fixed) {
        ev.t = t;
        ev.theta_a = current.theta_a;
        ev.J_g = current.J_g;
        ev.cause = present ? "fixed mode" : "human absent";
    } else {
        ev = run_adaptation_cycle(settings, current, rls, previous, t, cancel);
    }
    // Wall-clock budget only applies when time is real.
    const bool overrun = (!virtual_clock_ && ev.elapsed_seconds > settings.adaptation_period) ||
                         (cancel != nullptr && cancel->load());

    lock.lock();
    if (generation != generation_) return;
    ++counters_.adaptation_cycles;
    timings_.adaptation_seconds.push_back(ev.elapsed_seconds);
    if (overrun) {
        ++counters_.adaptation_overruns;
        ev.published = false;
        ev.design.reset();
        ev.stationary = false;
        ev.theta_a = current.theta_a;
        ev.J_g = current.J_g;
        ev.cause = "adaptation overrun";
    }
    if (ev.design) {
        loop_.publish(*ev.design);
        design_ = std::make_shared<const DesignResult>(*ev.design);
    } else if (ev.stationary) {
        DesignResult d = loop_.design();
        d.converged = true;
        loop_.publish(d);
        design_ = std::make_shared<const DesignResult>(std::move(d));
    }
    events_.push_back(ev);
    const std::string msg = adaptation_message(ev);
    lock.unlock();
    emit(msg);
}

void HilSession::reset() {
    std::lock_guard lock(mutex_);
    ++generation_;
    loop_.publish(initial_);
    loop_.reset(config_.scenario.x0);
    design_ = std::make_shared<const DesignResult>(initial_);
    axis_.reset();
    last_input_time_ = -1e300;
    recorded_.clear();
    history_.clear();
    events_.clear();
}

void HilSession::record(const std::filesystem::path& csv, const std::filesystem::path& summary) const {
    std::lock_guard lock(mutex_);
    write_trace_csv(csv, recorded_, loop_.settings().sys.states());
    write_summary_json(summary, summarize(config_.scenario, recorded_, events_));
}

TimeSeries HilSession::recorded() const {
    std::lock_guard lock(mutex_);
    return recorded_;
}

std::vector<AdaptationEvent> HilSession::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

ScenarioSummary HilSession::summary() const {
    std::lock_guard lock(mutex_);
    return summarize(config_.scenario, recorded_, events_);
}

std::vector<Sample> HilSession::history() const {
    std::lock_guard lock(mutex_);
    return {history_.begin(), history_.end()};
}

HealthCounters HilSession::counters() const {
    std::lock_guard lock(mutex_);
    return counters_;
}

TimingLog HilSession::timings() const {
    std::lock_guard lock(mutex_);
    return timings_;
}

void HilSession::count_dropped_frame() {
    std::lock_guard lock(mutex_);
    ++counters_.dropped_frames;
}

void HilSession::count_missed_tick() {
    std::lock_guard lock(mutex_);
    ++counters_.missed_ticks;
}

void HilSession::count_adaptation_overrun() {
    std::lock_guard lock(mutex_);
    ++counters_.adaptation_overruns;
}

std::shared_ptr<const DesignResult> HilSession::published() const {
    std::lock_guard lock(mutex_);
    return design_;
}

std::string HilSession::mode() const {
    std::lock_guard lock(mutex_);
    return (present_locked(now_) && !fixed_by_client_) ? "adaptive" : "fixed";
}

double HilSession::time() const {
    std::lock_guard lock(mutex_);
    return loop_.time();
}

WallClockDriver::WallClockDriver(HilSession& session, std::function<bool()> active)
    : session_(session), active_(std::move(active)) {}

WallClockDriver::~WallClockDriver() { stop(); }

void WallClockDriver::start() {
    if (running_.exchange(true)) return;
    started_at_ = steady_seconds();
    adaptation_ = std::thread([this] { adaptation_loop(); });
    control_ = std::thread([this] { control_loop(); });
}

void WallClockDriver::stop() {
    if (!running_.exchange(false)) return;
    cancel_ = true;
    cv_.notify_all();
    if (control_.joinable()) control_.join();
    if (adaptation_.joinable()) adaptation_.join();
}

void WallClockDriver::control_loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(session_.config().scenario.pipeline.control_period()));
    const double adapt_period = session_.config().scenario.pipeline.adaptation_period;
    auto next = clock::now() + period;
    double adapt_started = 0.0;
    while (running_) {
        std::this_thread::sleep_until(next);
        const auto woke = clock::now();
        if (woke - next > period) session_.count_missed_tick();
        // Skip ahead instead of bursting after a stall.
        next += period;
        if (next < woke) next = woke + period;
        if (active_ && !active_()) continue;
        const double now = steady_seconds() - started_at_;
        const bool due = session_.control_tick(now);
        std::lock_guard lock(mutex_);
        if (busy_ && now - adapt_started > adapt_period) cancel_ = true;
        if (due) {
            if (busy_) {
                session_.count_adaptation_overrun();
            } else {
                due_ = true;
                adapt_started = now;
                cv_.notify_one();
            }
        }
    }
}

void WallClockDriver::adaptation_loop() {
    while (true) {
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [this] { return due_ || !running_; });
            if (!running_) return;
            due_ = false;
            busy_ = true;
            cancel_ = false;
        }
        session_.adaptation_cycle(&cancel_);
        std::lock_guard lock(mutex_);
        busy_ = false;
    }
}

} // namespace sharedctl
