#include <gtest/gtest.h>

#include <sstream>

#include "criteria.hpp"
#include "vehicle_system.hpp"
#include "sharedctl/config.hpp"
#include "sharedctl/identify.hpp"
#include "sharedctl/trace_io.hpp"

using namespace sharedctl;
using namespace testdata;

namespace {

Json minimal() { return Json{{"schema_version", 1}}; }

std::string config_error_of(const Json& doc) {
    try {
        parse_config(doc);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config) << e.what();
        return e.what();
    }
    return {};
}

} // namespace

TEST(Config, BundledMatchesBuiltInDefaults) {
    const auto cfg = criteria::bundled_config();
    const auto def = ScenarioConfig::vehicle_manipulator();
    EXPECT_EQ(cfg.scenario.pipeline.sys.A(), def.pipeline.sys.A());
    EXPECT_EQ(cfg.scenario.pipeline.sys.B(0), def.pipeline.sys.B(0));
    EXPECT_EQ(cfg.scenario.pipeline.sys.B(1), def.pipeline.sys.B(1));
    EXPECT_EQ(cfg.scenario.pipeline.objective.q, def.pipeline.objective.q);
    ASSERT_EQ(cfg.scenario.phases.size(), 2u);
    EXPECT_EQ(cfg.scenario.phases[1].start, 60.0);
    EXPECT_EQ(cfg.scenario.phases[1].cost.q, human_phase2().q);
    EXPECT_EQ(cfg.scenario.pipeline.lambda_f, 0.985);
    EXPECT_EQ(cfg.scenario.pipeline.policy.max_real_eig, -0.01);
    EXPECT_EQ(cfg.hil.excitation.kind, Excitation::Kind::Steps);
}

TEST(Config, MinimalDocumentUsesDefaults) {
    const auto cfg = parse_config(minimal());
    EXPECT_EQ(cfg.scenario.duration, 120.0);
    EXPECT_EQ(cfg.scenario.seed, 1u);
    EXPECT_FALSE(cfg.human);
}

TEST(Config, UnknownFieldsNamed) {
    auto doc = minimal();
    doc["durration"] = 10;
    EXPECT_NE(config_error_of(doc).find("durration"), std::string::npos);
    doc = minimal();
    doc["design"] = {{"bounds", {{"q_lowr", 1}}}};
    EXPECT_NE(config_error_of(doc).find("q_lowr"), std::string::npos);
    doc = minimal();
    doc["hil"] = {{"gain", 1}};
    EXPECT_NE(config_error_of(doc).find("gain"), std::string::npos);
}

TEST(Config, SchemaVersionRequired) {
    EXPECT_NE(config_error_of(Json::object()).find("schema_version"), std::string::npos);
    EXPECT_NE(config_error_of(Json{{"schema_version", 2}}).find("schema_version"), std::string::npos);
}

TEST(Config, FieldErrorsNamed) {
    auto doc = minimal();
    doc["lambda_f"] = "high";
    EXPECT_NE(config_error_of(doc).find("lambda_f"), std::string::npos);
    doc = minimal();
    doc["seed"] = -3;
    EXPECT_NE(config_error_of(doc).find("seed"), std::string::npos);
    doc = minimal();
    doc["excitation"] = {{"kind", "square"}};
    EXPECT_NE(config_error_of(doc).find("excitation.kind"), std::string::npos);
    doc = minimal();
    doc["x0"] = {1, 2};
    EXPECT_FALSE(config_error_of(doc).empty());
    doc = minimal();
    doc["system"] = {{"A", {{1, 2}, {3}}}, {"B", Json::array()}};
    EXPECT_FALSE(config_error_of(doc).empty());
}

TEST(Config, InfeasibleBounds) {
    auto doc = minimal();
    doc["design"] = {{"bounds", {{"q_lower", 10}, {"q_upper", 1}}}};
    EXPECT_FALSE(config_error_of(doc).empty());
}

TEST(Config, OverridesApplied) {
    auto doc = minimal();
    doc["seed"] = 7;
    doc["human"] = {{"q", {1, 2, 3}}, {"r", {2}}};
    doc["design"] = {{"budget", 42}, {"bounds", {{"q_upper", {100, 200, 300}}}}};
    doc["hil"] = {{"input_gain", 8}};
    doc["trace_identify"] = {{"trace", "a.csv"}, {"lambda_f", 0.99}};
    const auto cfg = parse_config(doc);
    EXPECT_EQ(cfg.scenario.seed, 7u);
    ASSERT_TRUE(cfg.human);
    EXPECT_EQ(cfg.design_human().r_self[0], 2.0);
    EXPECT_EQ(cfg.scenario.pipeline.policy.budget, 42);
    EXPECT_EQ(cfg.scenario.pipeline.policy.bounds.q_upper[2], 300.0);
    EXPECT_EQ(cfg.hil.input_gain, 8.0);
    EXPECT_EQ(cfg.trace_identify.trace, "a.csv");
}

TEST(Config, MissingFileIsConfigError) {
    try {
        load_config("/nonexistent/config.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
    }
}

TEST(TraceCsv, HeaderAndPrecision) {
    auto cfg = ScenarioConfig::vehicle_manipulator();
    cfg.duration = 0.2;
    cfg.phases = {{0.0, human_phase1()}};
    cfg.theta_a_offline = designed_theta_a();
    const auto r = run_scenario(cfg);
    std::ostringstream out;
    write_trace_csv(out, r.series, 3);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line,
              "t,x1,x2,x3,p_m,ref_m,p_v,ref_v,u_a,u_h,ka1,ka2,ka3,kh1,kh2,kh3,khhat1,khhat2,khhat3,eig1,eig2,eig3,eK");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 5);
    EXPECT_EQ(format_g9(1.0 / 3.0), "0.333333333");
    EXPECT_EQ(format_g9(-12345.6789012), "-12345.6789");
    EXPECT_EQ(format_g9(0.0), "0");
}

TEST(TraceCsv, RoundTrip) {
    auto cfg = ScenarioConfig::vehicle_manipulator();
    cfg.duration = 1.0;
    cfg.phases = {{0.0, human_phase1()}};
    cfg.theta_a_offline = designed_theta_a();
    const auto r = run_scenario(cfg);
    std::stringstream buf;
    write_trace_csv(buf, r.series, 3);
    const auto data = read_trace_csv(buf, 3);
    ASSERT_EQ(data.size(), r.series.size());
    for (std::size_t k = 0; k < data.size(); ++k) {
        EXPECT_NEAR(data.t[k], r.series[k].t, 1e-9);
        EXPECT_LT((data.x[k] - r.series[k].x).norm(), 1e-8 * (1.0 + r.series[k].x.norm()));
        EXPECT_NEAR(data.u_h[k][0], r.series[k].u_h[0], 1e-8 * (1.0 + std::abs(r.series[k].u_h[0])));
    }
}

TEST(TraceCsv, MalformedInputs) {
    const std::string header = "t,x1,x2,x3,u_a,u_h\n";
    auto read = [](const std::string& s) {
        std::istringstream in(s);
        return read_trace_csv(in, 3);
    };
    EXPECT_NO_THROW(read(header + "0,1,2,3,4,5\n"));
    EXPECT_THROW(read(header + "0,1,nan,3,4,5\n"), Error);
    EXPECT_THROW(read(header + "0,1,abc,3,4,5\n"), Error);
    EXPECT_THROW(read(header + "0,1,2,3,4\n"), Error);
    EXPECT_THROW(read("t,x1,x2,u_a,u_h\n0,1,2,3,4\n"), Error);
    EXPECT_EQ(read(header).size(), 0u);
    try {
        read(header + "0,1,inf,3,4,5\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
    }
}

TEST(Json, SummaryKeysInOrder) {
    ScenarioSummary s;
    s.rmse_adaptive_window = 0.5;
    s.final_eigs = {-1, -2};
    s.holds = 3;
    s.adaptations = 4;
    s.seed = 9;
    const Json j = to_json(s);
    std::vector<std::string> keys;
    for (const auto& [k, _] : j.items()) keys.push_back(k);
    EXPECT_EQ(keys, (std::vector<std::string>{"rmse_adaptive_window", "rmse_full", "final_eigs", "holds",
                                              "adaptations", "seed"}));
    EXPECT_TRUE(j["holds"].is_number_integer());
}

TEST(Json, DesignResultFields) {
    const auto d = evaluate_design(vehicle_system(), designed_theta_a(), human_phase1(), vehicle_objective());
    const Json j = to_json(d, vehicle_system());
    for (const char* key : {"theta_a", "K_a", "K_h", "J_g", "eigenvalues"}) EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["eigenvalues"].size(), 3u);
    EXPECT_EQ(j["K_a"][0].size(), 3u);
    EXPECT_NEAR(j["J_g"].get<double>(), d.J_g, 0.0);
    const MatrixXd K = matrix_from_json(j["K_a"], "K_a");
    EXPECT_EQ(K, d.K_a);
}

TEST(IdentifyTrace, RecoversKnownCostsFromSyntheticTrace) {
    // Excited closed loop under fixed Nash gains of known costs.
    const auto sys = vehicle_system();
    const auto d = evaluate_design(sys, designed_theta_a(), human_phase2(), vehicle_objective());
    auto cfg = ScenarioConfig::vehicle_manipulator();
    const auto w = cfg.excitation.disturbance(3, 4);
    TraceData data;
    VectorXd x = VectorXd::Zero(3);
    for (int k = 0; k < 1500; ++k) {
        const VectorXd ua = -d.K_a * x;
        const VectorXd uh = -d.K_h * x;
        data.t.push_back(k * 0.04);
        data.x.push_back(x);
        data.u_a.push_back(ua);
        data.u_h.push_back(uh);
        x = rk4_step_inputs(sys, {ua, uh}, x, k * 0.04, 0.04, w);
    }
    const auto players = identify_trace(sys, data, TraceIdentifySettings{});
    ASSERT_EQ(players.size(), 2u);
    const std::vector<CostParams> truth{designed_theta_a(), human_phase2()};
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_FALSE(players[i].low_confidence) << players[i].reason;
        const auto est = players[i].id.theta.cost();
        EXPECT_LT((est.q - truth[i].q).cwiseAbs().maxCoeff(), 1e-3 * std::max(1.0, truth[i].q.maxCoeff()))
            << "player " << i << ": " << est.q.transpose();
    }
}

TEST(IdentifyTrace, ZeroTraceIsLowConfidence) {
    TraceData data;
    for (int k = 0; k < 100; ++k) {
        data.t.push_back(k * 0.04);
        data.x.push_back(VectorXd::Zero(3));
        data.u_a.push_back(VectorXd::Zero(1));
        data.u_h.push_back(VectorXd::Zero(1));
    }
    const auto players = identify_trace(vehicle_system(), data, TraceIdentifySettings{});
    for (const auto& p : players) {
        EXPECT_TRUE(p.low_confidence);
        EXPECT_EQ(p.reason, "unexcited trace");
    }
}
