#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "sharedctl/scenario.hpp"

namespace sharedctl {

/// Column names of the trace CSV for n states and single-input players.
std::vector<std::string> trace_header(Index n);

/// One row per sample, floats with 9 significant digits.
void write_trace_csv(std::ostream& out, const TimeSeries& series, Index n);
void write_trace_csv(const std::filesystem::path& path, const TimeSeries& series, Index n);

void write_summary_json(const std::filesystem::path& path, const ScenarioSummary& summary);

/// Columns needed to re-identify both players from a recorded trace.
struct TraceData {
    std::vector<double> t;
    std::vector<VectorXd> x;
    std::vector<VectorXd> u_a;
    std::vector<VectorXd> u_h;

    [[nodiscard]] std::size_t size() const { return t.size(); }
};

/// Reads t, x1..xn, u_a, u_h by header name. Throws Error(Config) on a
/// missing column, a short row, or a non-numeric or non-finite entry.
TraceData read_trace_csv(const std::filesystem::path& path, Index n);
TraceData read_trace_csv(std::istream& in, Index n);

/// printf-style "%.9g".
std::string format_g9(double v);

} // namespace sharedctl
