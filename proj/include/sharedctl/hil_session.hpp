#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "sharedctl/config.hpp"
#include "sharedctl/scenario.hpp"

namespace sharedctl {

struct HealthCounters {
    std::int64_t ticks = 0;
    /// Ticks that started more than one period late.
    std::int64_t missed_ticks = 0;
    /// Ticks whose own work took longer than one period.
    std::int64_t tick_overruns = 0;
    std::int64_t adaptation_cycles = 0;
    /// Cycles that ran past the adaptation period; their result is dropped.
    std::int64_t adaptation_overruns = 0;
    std::int64_t malformed_messages = 0;
    std::int64_t dropped_frames = 0;
};

/// Durations (seconds) of every control tick and adaptation cycle.
struct TimingLog {
    std::vector<double> tick_seconds;
    std::vector<double> adaptation_seconds;
};

/// Live shared-control session, independent of the transport.
///
/// All public members are thread-safe. Outbound messages (one JSON object per
/// line, without the newline) go to the sink set with `set_sink`. State
/// messages read one design snapshot; an adaptation message is emitted only
/// after its design has been swapped in.
class HilSession {
public:
    HilSession(const AppConfig& config, DesignResult initial);
    ~HilSession();

    HilSession(const HilSession&) = delete;
    HilSession& operator=(const HilSession&) = delete;

    void set_sink(std::function<void(const std::string&)> sink);

    /// Handles one upstream line. In virtual-clock mode an input message
    /// advances the session by one control tick (and one adaptation cycle
    /// when due). Malformed lines are dropped and counted; returns false.
    bool handle_line(std::string_view line);

    /// Virtual clock: time advances only through input messages.
    void set_virtual_clock(bool on) { virtual_clock_ = on; }
    [[nodiscard]] bool virtual_clock() const { return virtual_clock_; }

    /// One wall-clock control tick at session-relative time `now` (seconds of
    /// steady clock). Uses the latest human input; returns true when an
    /// adaptation cycle is due.
    bool control_tick(double now);

    /// Runs one adaptation cycle on a snapshot and publishes its result unless
    /// the session was reset meanwhile or the cycle was cancelled.
    void adaptation_cycle(const std::atomic<bool>* cancel = nullptr);

    void reset();

    /// CSV trace and JSON summary in the scenario format.
    void record(const std::filesystem::path& csv, const std::filesystem::path& summary) const;
    [[nodiscard]] TimeSeries recorded() const;
    [[nodiscard]] std::vector<AdaptationEvent> events() const;
    [[nodiscard]] ScenarioSummary summary() const;
    /// Samples of the last `history_seconds`.
    [[nodiscard]] std::vector<Sample> history() const;

    [[nodiscard]] HealthCounters counters() const;
    [[nodiscard]] TimingLog timings() const;
    void count_dropped_frame();
    void count_missed_tick();
    void count_adaptation_overrun();

    [[nodiscard]] std::shared_ptr<const DesignResult> published() const;
    [[nodiscard]] std::string mode() const;
    [[nodiscard]] double time() const;
    [[nodiscard]] const AppConfig& config() const { return config_; }

    static std::string state_message(const Sample& s, const std::string& mode);
    static std::string adaptation_message(const AdaptationEvent& ev);

private:
    struct Snapshot;

    bool present_locked(double now) const;
    void tick_locked(const VectorXd& u_h, bool present);
    void emit(const std::string& line);

    AppConfig config_;
    DesignResult initial_;
    std::atomic<bool> virtual_clock_{false};

    mutable std::mutex mutex_;
    SharedLoop loop_;
    std::shared_ptr<const DesignResult> design_;
    std::uint64_t generation_ = 0;
    std::optional<double> axis_;
    double last_input_time_ = -1e300;
    double now_ = 0.0;
    bool fixed_by_client_ = false;
    TimeSeries recorded_;
    std::deque<Sample> history_;
    std::vector<AdaptationEvent> events_;
    HealthCounters counters_;
    TimingLog timings_;

    std::mutex sink_mutex_;
    std::function<void(const std::string&)> sink_;
};

/// Drives a session from the steady clock: a 25 Hz control thread and an
/// adaptation thread woken every adaptation period. The control thread never
/// waits on adaptation; a cycle still running at its deadline is cancelled
/// and counted as an overrun. Ticks only run while `active()` is true.
class WallClockDriver {
public:
    explicit WallClockDriver(HilSession& session, std::function<bool()> active = {});
    ~WallClockDriver();

    void start();
    void stop();

private:
    void control_loop();
    void adaptation_loop();

    HilSession& session_;
    std::function<bool()> active_;
    std::atomic<bool> running_{false};
    std::atomic<bool> cancel_{false};
    std::mutex mutex_;
    std::condition_variable cv_;
    bool due_ = false;
    bool busy_ = false;
    double started_at_ = 0.0;
    std::thread control_;
    std::thread adaptation_;
};

} // namespace sharedctl
