#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "sharedctl/designer.hpp"
#include "sharedctl/scenario.hpp"

namespace sharedctl {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Live-service settings.
struct HilSettings {
    /// u_h = input_gain * axis, axis clamped to [-1, 1].
    double input_gain = 1.0;
    /// No input for longer than this switches the session to "fixed".
    double absent_timeout = 1.0;
    /// Publication gate on the stability certificate.
    double max_real_eig = -0.01;
    /// Length of the in-memory sample history.
    double history_seconds = 30.0;
    Excitation excitation;

    HilSettings();
};

/// Settings for identification from a recorded trace.
struct TraceIdentifySettings {
    std::string trace;
    double lambda_f = 1.0;
    double p0 = 1e8;
    bool identify_cross = false;
    /// Unset means n * p0.
    std::optional<double> rls_trace_gate;
};

/// Everything a config file can carry. Each subcommand reads the parts it needs.
struct AppConfig {
    ScenarioConfig scenario;
    /// Human cost for `design`; unset means the first human phase.
    std::optional<CostParams> human;
    std::optional<CostParams> theta_a_init;
    HilSettings hil;
    TraceIdentifySettings trace_identify;

    [[nodiscard]] const CostParams& design_human() const;
};

/// Parses a config document. Missing fields keep the vehicle-manipulator
/// defaults; unknown fields, a wrong schema_version or invalid values throw
/// Error(Config) naming the offending field.
AppConfig parse_config(const Json& doc);
AppConfig load_config(const std::filesystem::path& path);

Json to_json(const MatrixXd& M);
Json to_json(const VectorXd& v);
Json to_json(const CostParams& c);
Json to_json(const DesignResult& d, const GameSystem& sys);
Json to_json(const IdentificationConfidence& c);
Json to_json(const AdaptationEvent& ev);
Json to_json(const ScenarioSummary& s);

MatrixXd matrix_from_json(const Json& j, const std::string& field);
VectorXd vector_from_json(const Json& j, const std::string& field);

} // namespace sharedctl
