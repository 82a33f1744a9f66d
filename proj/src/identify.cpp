#include "sharedctl/identify.hpp"

#include "sharedctl/rls.hpp"

namespace sharedctl {

std::vector<PlayerIdentification> identify_trace(const GameSystem& sys, const TraceData& trace,
                                                 const TraceIdentifySettings& settings,
                                                 const IdentifyOptions& options) {
    if (sys.players() != 2) throw Error(ErrorCode::InvalidArgument, "trace identification expects two players");
    const Index n = sys.states();
    std::vector<RlsEstimator> rls;
    for (std::size_t i = 0; i < sys.players(); ++i) {
        rls.emplace_back(n, sys.input_dim(i), settings.lambda_f, settings.p0);
    }
    for (std::size_t k = 0; k < trace.size(); ++k) {
        rls[kAutomation].update(trace.x[k], trace.u_a[k]);
        rls[kHuman].update(trace.x[k], trace.u_h[k]);
    }
    const double gate = settings.rls_trace_gate ? *settings.rls_trace_gate : static_cast<double>(n) * settings.p0;

    std::vector<MatrixXd> gains;
    for (const auto& r : rls) gains.push_back(r.gain());

    std::vector<PlayerIdentification> out;
    for (std::size_t i = 0; i < sys.players(); ++i) {
        PlayerIdentification p;
        p.player = i;
        p.K_hat = gains[i];
        p.rls_trace = rls[i].covariance_trace();
        p.samples = rls[i].sample_count();
        const ResidualSystem rs = build_residual_system(sys, gains, i, settings.identify_cross);
        p.id = identify_cost(rs, options);
        p.confidence = identification_confidence(rs, p.id, options);
        if (p.samples < n) {
            p.low_confidence = true;
            p.reason = "unexcited trace";
        } else if (!(p.rls_trace < gate)) {
            p.low_confidence = true;
            p.reason = "estimator covariance above gate";
        } else if (p.confidence.low_confidence) {
            p.low_confidence = true;
            p.reason = "ill-conditioned residual system";
        }
        out.push_back(std::move(p));
    }
    return out;
}

Json to_json(const PlayerIdentification& p) {
    Json j{{"player", p.player == kAutomation ? "automation" : "human"},
           {"K_hat", to_json(p.K_hat)},
           {"theta", to_json(p.id.theta.cost())},
           {"P", to_json(p.id.theta.P())},
           {"residual", p.id.residual},
           {"rls_trace", p.rls_trace},
           {"samples", p.samples},
           {"confidence", to_json(p.confidence)},
           {"low_confidence", p.low_confidence}};
    if (!p.reason.empty()) j["reason"] = p.reason;
    return j;
}

} // namespace sharedctl
