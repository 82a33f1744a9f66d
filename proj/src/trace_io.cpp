#include "sharedctl/trace_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "sharedctl/config.hpp"

namespace sharedctl {
namespace {

void indexed(std::vector<std::string>& h, const std::string& prefix, Index n) {
    for (Index k = 1; k <= n; ++k) h.push_back(prefix + std::to_string(k));
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

std::string format_g9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::vector<std::string> trace_header(Index n) {
    std::vector<std::string> h{"t"};
    indexed(h, "x", n);
    for (const char* c : {"p_m", "ref_m", "p_v", "ref_v", "u_a", "u_h"}) h.emplace_back(c);
    indexed(h, "ka", n);
    indexed(h, "kh", n);
    indexed(h, "khhat", n);
    indexed(h, "eig", n);
    h.emplace_back("eK");
    return h;
}

void write_trace_csv(std::ostream& out, const TimeSeries& series, Index n) {
    const auto header = trace_header(n);
    for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
    out << '\n';
    std::string line;
    for (const auto& s : series) {
        if (s.x.size() != n || s.u_a.size() != 1 || s.u_h.size() != 1) {
            throw Error(ErrorCode::DimensionMismatch, "trace rows need n states and scalar inputs");
        }
        line.clear();
        auto put = [&](double v) {
            if (!line.empty()) line += ',';
            line += format_g9(v);
        };
        put(s.t);
        for (Index i = 0; i < n; ++i) put(s.x[i]);
        put(s.p_m());
        put(s.ref_m);
        put(n > 1 ? s.p_v() : s.ref_v);
        put(s.ref_v);
        put(s.u_a[0]);
        put(s.u_h[0]);
        for (Index i = 0; i < n; ++i) put(s.K_a(0, i));
        for (Index i = 0; i < n; ++i) put(s.K_h(0, i));
        for (Index i = 0; i < n; ++i) put(s.K_h_hat(0, i));
        for (Index i = 0; i < n; ++i) put(s.eig[static_cast<std::size_t>(i)]);
        put(s.e_K);
        out << line << '\n';
    }
}

void write_trace_csv(const std::filesystem::path& path, const TimeSeries& series, Index n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    write_trace_csv(out, series, n);
    if (!out) throw Error(ErrorCode::Io, "write to '" + path.string() + "' failed");
}

void write_summary_json(const std::filesystem::path& path, const ScenarioSummary& summary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out << to_json(summary).dump(2) << '\n';
    if (!out) throw Error(ErrorCode::Io, "write to '" + path.string() + "' failed");
}

TraceData read_trace_csv(std::istream& in, Index n) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::Config, "trace is empty (no header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line);
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t k = 0; k < header.size(); ++k) col[header[k]] = k;
    auto need = [&](const std::string& name) {
        const auto it = col.find(name);
        if (it == col.end()) throw Error(ErrorCode::Config, "trace has no column '" + name + "'");
        return it->second;
    };
    const std::size_t ct = need("t");
    std::vector<std::size_t> cx;
    for (Index i = 1; i <= n; ++i) cx.push_back(need("x" + std::to_string(i)));
    const std::size_t ca = need("u_a");
    const std::size_t ch = need("u_h");

    TraceData data;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw Error(ErrorCode::Config, "trace row " + std::to_string(row) + " has " +
                                               std::to_string(cells.size()) + " fields, expected " +
                                               std::to_string(header.size()));
        }
        auto value = [&](std::size_t c) {
            const std::string& s = cells[c];
            char* end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
                throw Error(ErrorCode::Config, "trace row " + std::to_string(row) + " column '" +
                                                   header[c] + "' is not a finite number");
            }
            return v;
        };
        data.t.push_back(value(ct));
        VectorXd x(n);
        for (Index i = 0; i < n; ++i) x[i] = value(cx[static_cast<std::size_t>(i)]);
        data.x.push_back(x);
        data.u_a.push_back(VectorXd::Constant(1, value(ca)));
        data.u_h.push_back(VectorXd::Constant(1, value(ch)));
    }
    return data;
}

TraceData read_trace_csv(const std::filesystem::path& path, Index n) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Config, "cannot open trace '" + path.string() + "'");
    return read_trace_csv(in, n);
}

} // namespace sharedctl
