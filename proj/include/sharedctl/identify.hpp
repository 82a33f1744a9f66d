#pragma once

#include <cstdint>
#include <vector>

#include "sharedctl/config.hpp"
#include "sharedctl/inverse_game.hpp"
#include "sharedctl/trace_io.hpp"

namespace sharedctl {

struct PlayerIdentification {
    std::size_t player = 0;
    /// RLS estimate at the end of the trace.
    MatrixXd K_hat;
    double rls_trace = 0.0;
    std::int64_t samples = 0;
    Identification id;
    IdentificationConfidence confidence;
    /// Too few excited samples, covariance above the gate, or a flat residual.
    bool low_confidence = false;
    std::string reason;
};

/// Fits every player's feedback gain to the trace with RLS, then identifies
/// each cost from the final gain estimates.
std::vector<PlayerIdentification> identify_trace(const GameSystem& sys, const TraceData& trace,
                                                 const TraceIdentifySettings& settings,
                                                 const IdentifyOptions& options = {});

Json to_json(const PlayerIdentification& p);

} // namespace sharedctl
