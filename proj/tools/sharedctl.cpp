#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "sharedctl/config.hpp"
#include "sharedctl/hil_server.hpp"
#include "sharedctl/hil_session.hpp"
#include "sharedctl/identify.hpp"
#include "sharedctl/trace_io.hpp"

namespace fs = std::filesystem;
using namespace sharedctl;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfigError = 2, kUnstable = 3, kLowConfidence = 4 };

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int exit_code(const Error& e) {
    switch (e.code()) {
    case ErrorCode::Config:
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
        return kConfigError;
    case ErrorCode::NonFinite:
    case ErrorCode::Unstable:
    case ErrorCode::NotStabilizable:
    case ErrorCode::NoStableCandidate:
        return kUnstable;
    default:
        return kOther;
    }
}

fs::path prepare_out(const std::string& out) {
    const fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw Error(ErrorCode::Config, "output directory '" + out + "' cannot be created");
    const fs::path probe = dir / ".sharedctl_write_test";
    {
        std::ofstream f(probe);
        if (!f) throw Error(ErrorCode::Config, "output directory '" + out + "' is not writable");
    }
    fs::remove(probe, ec);
    return dir;
}

void write_json(const fs::path& path, const Json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

DesignResult offline_design(const AppConfig& cfg) {
    const auto& sc = cfg.scenario;
    if (sc.theta_a_offline) {
        return evaluate_design(sc.pipeline.sys, *sc.theta_a_offline, sc.phases.front().cost, sc.pipeline.objective,
                               sc.pipeline.policy.X0);
    }
    PipelineSettings p = sc.pipeline;
    p.policy.seed = sc.seed;
    return design_offline(p, sc.phases.front().cost, sc.offline_budget);
}

struct Common {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    int verbose = 0;
};

AppConfig load(const Common& c) {
    AppConfig cfg = load_config(c.config);
    if (c.seed) cfg.scenario.seed = *c.seed;
    return cfg;
}

int cmd_simulate(const Common& c, bool compare) {
    const AppConfig cfg = load(c);
    const fs::path dir = prepare_out(c.out);
    const DesignResult offline = offline_design(cfg);
    const Index n = cfg.scenario.pipeline.sys.states();

    struct Run {
        std::string label;
        ScenarioResult result;
    };
    std::vector<Run> runs;
    if (compare) {
        ScenarioConfig adaptive = cfg.scenario;
        adaptive.pipeline.adaptive = true;
        ScenarioConfig baseline = cfg.scenario;
        baseline.pipeline.adaptive = false;
        runs.push_back({"adaptive", run_scenario(adaptive, &offline)});
        runs.push_back({"baseline", run_scenario(baseline, &offline)});
    } else {
        runs.push_back({"", run_scenario(cfg.scenario, &offline)});
    }

    bool aborted = false;
    for (const auto& r : runs) {
        const std::string suffix = r.label.empty() ? "" : "_" + r.label;
        write_trace_csv(dir / ("trace" + suffix + ".csv"), r.result.series, n);
        write_summary_json(dir / ("summary" + suffix + ".json"), r.result.summary);
        if (c.verbose > 0) {
            for (const auto& ev : r.result.events) {
                if (ev.published || c.verbose > 1) {
                    std::cout << (r.label.empty() ? "" : r.label + " ") << "t=" << format_g9(ev.t)
                              << (ev.published ? " publish " : " hold ") << ev.cause << '\n';
                }
            }
        }
        if (r.result.aborted) {
            std::cerr << "error: " << (r.label.empty() ? "run" : r.label + " run")
                      << " aborted: " << r.result.abort_reason << '\n';
            aborted = true;
        }
    }

    std::printf("%-10s %14s %14s %8s %6s\n", "run", "rmse_window", "rmse_full", "adapts", "holds");
    for (const auto& r : runs) {
        const auto& s = r.result.summary;
        std::printf("%-10s %14.6g %14.6g %8d %6d\n", r.label.empty() ? "run" : r.label.c_str(),
                    s.rmse_adaptive_window, s.rmse_full, s.adaptations, s.holds);
    }
    if (compare && runs[0].result.summary.rmse_adaptive_window > 0.0) {
        std::printf("baseline / adaptive RMSE ratio: %.4g\n",
                    runs[1].result.summary.rmse_adaptive_window / runs[0].result.summary.rmse_adaptive_window);
    }
    return aborted ? kUnstable : kOk;
}

int cmd_identify(const Common& c, std::string trace_path) {
    const AppConfig cfg = load(c);
    const fs::path dir = prepare_out(c.out);
    if (trace_path.empty()) trace_path = cfg.trace_identify.trace;
    if (trace_path.empty()) throw Error(ErrorCode::Config, "no trace given (use --trace or trace_identify.trace)");
    fs::path trace(trace_path);
    if (trace.is_relative() && !fs::exists(trace)) trace = fs::path(c.config).parent_path() / trace;

    const auto& sys = cfg.scenario.pipeline.sys;
    const TraceData data = read_trace_csv(trace, sys.states());
    const auto players = identify_trace(sys, data, cfg.trace_identify, cfg.scenario.pipeline.identify);

    Json out{{"trace", trace.string()}, {"samples", data.size()}};
    Json list = Json::array();
    bool low = false;
    for (const auto& p : players) {
        list.push_back(to_json(p));
        low = low || p.low_confidence;
    }
    out["players"] = list;
    out["low_confidence"] = low;
    write_json(dir / "identify.json", out);
    for (const auto& p : players) {
        std::cout << (p.player == kAutomation ? "automation" : "human") << ": q = "
                  << p.id.theta.cost().q.transpose() << ", r = " << p.id.theta.cost().r_self.transpose()
                  << (p.low_confidence ? "  [low confidence: " + p.reason + "]" : "") << '\n';
    }
    return low ? kLowConfidence : kOk;
}

int cmd_design(const Common& c) {
    const AppConfig cfg = load(c);
    const fs::path dir = prepare_out(c.out);
    const auto& p = cfg.scenario.pipeline;
    DesignResult d;
    if (cfg.theta_a_init) {
        DesignProblem pb;
        pb.sys = p.sys;
        pb.human_cost = cfg.design_human();
        pb.objective = p.objective;
        pb.theta_a_init = *cfg.theta_a_init;
        pb.bounds = p.policy.bounds;
        pb.budget = cfg.scenario.offline_budget;
        pb.X0 = p.policy.X0;
        pb.seed = cfg.scenario.seed;
        pb.multistart = p.policy.multistart;
        d = design_automation(pb);
    } else {
        PipelineSettings s = p;
        s.policy.seed = cfg.scenario.seed;
        d = design_offline(s, cfg.design_human(), cfg.scenario.offline_budget);
    }
    write_json(dir / "design.json", to_json(d, p.sys));
    std::cout << "theta_a: q = " << d.theta_a.q.transpose() << ", r = " << d.theta_a.r_self.transpose() << '\n'
              << "K_a = " << d.K_a << "\nK_h = " << d.K_h << "\nJ_g = " << format_g9(d.J_g) << '\n';
    return kOk;
}

int cmd_hil(const Common& c, const std::string& bind, bool virtual_clock, double duration) {
    const AppConfig cfg = load(c);
    const fs::path dir = prepare_out(c.out);
    const auto [host, port] = parse_bind_address(bind);
    HilSession session(cfg, offline_design(cfg));
    session.set_virtual_clock(virtual_clock);
    HilServer server(session, host, port);
    WallClockDriver driver(session, [&server] { return server.clients() > 0; });
    server.start();
    if (!virtual_clock) driver.start();
    std::cout << "listening on " << host << ":" << server.port() << (virtual_clock ? " (virtual clock)" : "")
              << std::endl;

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const auto start = std::chrono::steady_clock::now();
    while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        if (duration > 0.0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= duration) {
            break;
        }
    }
    driver.stop();
    server.stop();
    session.record(dir / "session_trace.csv", dir / "session_summary.json");
    const auto h = session.counters();
    std::cout << "ticks " << h.ticks << ", missed " << h.missed_ticks << ", adaptation cycles "
              << h.adaptation_cycles << ", overruns " << h.adaptation_overruns << ", malformed "
              << h.malformed_messages << ", dropped frames " << h.dropped_frames << '\n';
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive shared control: scenarios, identification, design and a live HIL service"};
    app.require_subcommand(1);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "JSON config file")->required();
        sub->add_option("--out", common.out, "Output directory");
        sub->add_option("--seed", common.seed, "Override the config seed");
        sub->add_flag("-v,--verbose", common.verbose, "More output (repeatable)");
    };

    bool compare = false;
    auto* simulate = app.add_subcommand("simulate", "Run the scenario and write trace + summary");
    add_common(simulate);
    simulate->add_flag("--compare", compare, "Run adaptive and baseline back to back");

    std::string trace;
    auto* identify = app.add_subcommand("identify", "Identify player costs from a recorded trace");
    add_common(identify);
    identify->add_option("--trace", trace, "Trace CSV (overrides trace_identify.trace)");

    auto* design = app.add_subcommand("design", "Design the automation cost for a human cost");
    add_common(design);

    std::string bind = "127.0.0.1:8765";
    bool virtual_clock = false;
    double duration = 0.0;
    auto* hil = app.add_subcommand("hil", "Serve the live session over WebSocket");
    add_common(hil);
    hil->add_option("--bind", bind, "host:port");
    hil->add_flag("--virtual-clock", virtual_clock, "Advance one tick per input message");
    hil->add_option("--duration", duration, "Stop after this many seconds (0 = until signalled)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*simulate) return cmd_simulate(common, compare);
        if (*identify) return cmd_identify(common, trace);
        if (*design) return cmd_design(common);
        if (*hil) return cmd_hil(common, bind, virtual_clock, duration);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kOther;
    }
    return kOther;
}
