#include "sharedctl/config.hpp"

#include <fstream>
#include <set>

namespace sharedctl {
namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::Config, msg); }

void check_fields(const Json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) config_error("'" + where + "' must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (allowed.count(key) == 0) {
            config_error("unknown field '" + key + "' in " + (where.empty() ? "config" : "'" + where + "'"));
        }
    }
}

std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

double number(const Json& j, const std::string& field) {
    if (!j.is_number()) config_error("'" + field + "' must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) config_error("'" + field + "' must be finite");
    return v;
}

double positive(const Json& j, const std::string& field) {
    const double v = number(j, field);
    if (!(v > 0.0)) config_error("'" + field + "' must be positive");
    return v;
}

CostParams cost_from_json(const Json& j, const std::string& where) {
    check_fields(j, where, {"q", "r", "r_cross"});
    if (!j.contains("q") || !j.contains("r")) config_error("'" + where + "' needs q and r");
    CostParams c;
    c.q = vector_from_json(j["q"], join(where, "q"));
    c.r_self = vector_from_json(j["r"], join(where, "r"));
    if (j.contains("r_cross")) {
        const auto& rc = j["r_cross"];
        if (!rc.is_array()) config_error("'" + join(where, "r_cross") + "' must be an array");
        for (std::size_t k = 0; k < rc.size(); ++k) {
            c.r_cross.push_back(rc[k].is_null()
                                    ? VectorXd()
                                    : vector_from_json(rc[k], join(where, "r_cross")));
        }
    }
    return c;
}

VectorXd bound_vector(const Json& j, const std::string& field, Index n) {
    if (j.is_number()) return VectorXd::Constant(n, number(j, field));
    VectorXd v = vector_from_json(j, field);
    if (v.size() != n) config_error("'" + field + "' has wrong length");
    return v;
}

Excitation excitation_from_json(const Json& j, const std::string& where, Excitation e) {
    check_fields(j, where, {"kind", "amplitudes", "frequencies", "direction", "step_period"});
    if (j.contains("kind")) {
        const auto kind = j["kind"].get<std::string>();
        if (kind == "sinusoids") {
            e.kind = Excitation::Kind::Sinusoids;
        } else if (kind == "steps") {
            e.kind = Excitation::Kind::Steps;
        } else if (kind == "none") {
            e.kind = Excitation::Kind::None;
        } else {
            config_error("'" + join(where, "kind") + "' must be sinusoids, steps or none");
        }
    }
    auto list = [&](const char* key) {
        std::vector<double> out;
        for (const auto& v : j[key]) out.push_back(number(v, join(where, key)));
        return out;
    };
    if (j.contains("amplitudes")) e.amplitudes = list("amplitudes");
    if (j.contains("frequencies")) e.frequencies = list("frequencies");
    if (e.amplitudes.size() != e.frequencies.size()) {
        config_error("'" + where + "' amplitudes and frequencies differ in length");
    }
    if (j.contains("direction")) e.direction = vector_from_json(j["direction"], join(where, "direction"));
    if (j.contains("step_period")) e.step_period = positive(j["step_period"], join(where, "step_period"));
    return e;
}

void parse_design(const Json& j, AppConfig& cfg) {
    check_fields(j, "design", {"budget", "offline_budget", "multistart", "deadband", "max_real_eig",
                               "bounds", "X0", "theta_a_init", "theta_a_offline"});
    auto& p = cfg.scenario.pipeline;
    const Index n = p.sys.states();
    const Index m_a = p.sys.input_dim(kAutomation);
    if (j.contains("budget")) p.policy.budget = j["budget"].get<int>();
    if (j.contains("offline_budget")) cfg.scenario.offline_budget = j["offline_budget"].get<int>();
    if (j.contains("multistart")) p.policy.multistart = j["multistart"].get<int>();
    if (j.contains("deadband")) p.policy.deadband = number(j["deadband"], "design.deadband");
    if (j.contains("max_real_eig")) p.policy.max_real_eig = number(j["max_real_eig"], "design.max_real_eig");
    p.policy.bounds = DesignBounds::uniform(n, m_a);
    if (j.contains("bounds")) {
        const auto& b = j["bounds"];
        check_fields(b, "design.bounds", {"q_lower", "q_upper", "r_lower", "r_upper"});
        auto& db = p.policy.bounds;
        if (b.contains("q_lower")) db.q_lower = bound_vector(b["q_lower"], "design.bounds.q_lower", n);
        if (b.contains("q_upper")) db.q_upper = bound_vector(b["q_upper"], "design.bounds.q_upper", n);
        if (b.contains("r_lower")) db.r_lower = bound_vector(b["r_lower"], "design.bounds.r_lower", m_a - 1);
        if (b.contains("r_upper")) db.r_upper = bound_vector(b["r_upper"], "design.bounds.r_upper", m_a - 1);
    }
    if (j.contains("X0")) p.policy.X0 = matrix_from_json(j["X0"], "design.X0");
    if (j.contains("theta_a_init")) cfg.theta_a_init = cost_from_json(j["theta_a_init"], "design.theta_a_init");
    if (j.contains("theta_a_offline")) {
        cfg.scenario.theta_a_offline = cost_from_json(j["theta_a_offline"], "design.theta_a_offline");
    }
    if (p.policy.budget < 1 || cfg.scenario.offline_budget < 1 || p.policy.multistart < 0) {
        config_error("design budgets must be positive");
    }
}

} // namespace

HilSettings::HilSettings() { excitation.kind = Excitation::Kind::Steps; }

const CostParams& AppConfig::design_human() const {
    return human ? *human : scenario.phases.front().cost;
}

MatrixXd matrix_from_json(const Json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) config_error("'" + field + "' must be a non-empty array of rows");
    const auto rows = static_cast<Index>(j.size());
    if (!j[0].is_array()) config_error("'" + field + "' must be an array of rows");
    const auto cols = static_cast<Index>(j[0].size());
    MatrixXd M(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
            config_error("'" + field + "' rows differ in length");
        }
        for (Index c = 0; c < cols; ++c) M(r, c) = number(row[static_cast<std::size_t>(c)], field);
    }
    return M;
}

VectorXd vector_from_json(const Json& j, const std::string& field) {
    if (j.is_number()) return VectorXd::Constant(1, number(j, field));
    if (!j.is_array()) config_error("'" + field + "' must be an array of numbers");
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Index>(k)] = number(j[k], field);
    return v;
}

AppConfig parse_config(const Json& doc) {
    check_fields(doc, "", {"schema_version", "system", "objective", "human_phases", "human", "duration",
                           "control_rate", "adaptation_period", "lambda_f", "p0", "warmup", "adaptive",
                           "rls_trace_gate", "x0", "excitation", "seed", "design", "identify", "hil",
                           "trace_identify"});
    if (!doc.contains("schema_version")) config_error("missing field 'schema_version'");
    if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != kSchemaVersion) {
        config_error("unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
    }

    AppConfig cfg;
    cfg.scenario = ScenarioConfig::vehicle_manipulator();
    auto& sc = cfg.scenario;
    auto& p = sc.pipeline;
    try {
        if (doc.contains("system")) {
            const auto& s = doc["system"];
            check_fields(s, "system", {"A", "B"});
            if (!s.contains("A") || !s.contains("B")) config_error("'system' needs A and B");
            std::vector<MatrixXd> B;
            if (!s["B"].is_array()) config_error("'system.B' must list one matrix per player");
            for (const auto& b : s["B"]) B.push_back(matrix_from_json(b, "system.B"));
            p.sys = GameSystem(matrix_from_json(s["A"], "system.A"), std::move(B));
            sc.x0 = VectorXd::Zero(p.sys.states());
            p.policy.bounds = DesignBounds::uniform(p.sys.states(), p.sys.input_dim(kAutomation));
        }
        if (doc.contains("objective")) {
            const auto& o = doc["objective"];
            check_fields(o, "objective", {"q", "r"});
            if (!o.contains("q") || !o.contains("r")) config_error("'objective' needs q and r");
            p.objective.q = vector_from_json(o["q"], "objective.q");
            p.objective.r.clear();
            for (const auto& r : o["r"]) p.objective.r.push_back(vector_from_json(r, "objective.r"));
        }
        if (doc.contains("human_phases")) {
            sc.phases.clear();
            for (const auto& ph : doc["human_phases"]) {
                check_fields(ph, "human_phases[]", {"start", "q", "r", "r_cross"});
                Json cost = ph;
                cost.erase("start");
                sc.phases.push_back({ph.contains("start") ? number(ph["start"], "human_phases.start") : 0.0,
                                     cost_from_json(cost, "human_phases[]")});
            }
        }
        if (doc.contains("human")) cfg.human = cost_from_json(doc["human"], "human");
        if (doc.contains("duration")) sc.duration = positive(doc["duration"], "duration");
        if (doc.contains("control_rate")) p.control_rate = positive(doc["control_rate"], "control_rate");
        if (doc.contains("adaptation_period")) {
            p.adaptation_period = positive(doc["adaptation_period"], "adaptation_period");
        }
        if (doc.contains("lambda_f")) p.lambda_f = number(doc["lambda_f"], "lambda_f");
        if (doc.contains("p0")) p.p0 = positive(doc["p0"], "p0");
        if (doc.contains("warmup")) p.warmup = number(doc["warmup"], "warmup");
        if (doc.contains("adaptive")) {
            if (!doc["adaptive"].is_boolean()) config_error("'adaptive' must be a boolean");
            p.adaptive = doc["adaptive"].get<bool>();
        }
        if (doc.contains("rls_trace_gate") && !doc["rls_trace_gate"].is_null()) {
            p.rls_trace_gate = positive(doc["rls_trace_gate"], "rls_trace_gate");
        }
        if (doc.contains("x0")) sc.x0 = vector_from_json(doc["x0"], "x0");
        if (doc.contains("excitation")) sc.excitation = excitation_from_json(doc["excitation"], "excitation", sc.excitation);
        if (doc.contains("seed")) {
            const auto& seed = doc["seed"];
            if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
                config_error("'seed' must be a non-negative integer");
            }
            sc.seed = seed.get<std::uint64_t>();
        }
        if (doc.contains("design")) {
            parse_design(doc["design"], cfg);
        } else {
            p.policy.bounds = DesignBounds::uniform(p.sys.states(), p.sys.input_dim(kAutomation));
        }
        if (doc.contains("identify")) {
            const auto& id = doc["identify"];
            check_fields(id, "identify", {"r_floor", "pin", "ill_conditioned"});
            if (id.contains("r_floor")) p.identify.r_floor = positive(id["r_floor"], "identify.r_floor");
            if (id.contains("ill_conditioned")) {
                p.identify.ill_conditioned = positive(id["ill_conditioned"], "identify.ill_conditioned");
            }
            if (id.contains("pin")) {
                const auto pin = id["pin"].get<std::string>();
                if (pin == "first_input_weight") {
                    p.identify.pin = Normalization::FirstInputWeight;
                } else if (pin == "first_state_weight") {
                    p.identify.pin = Normalization::FirstStateWeight;
                } else {
                    config_error("'identify.pin' must be first_input_weight or first_state_weight");
                }
            }
        }
        if (doc.contains("hil")) {
            const auto& h = doc["hil"];
            check_fields(h, "hil", {"input_gain", "absent_timeout", "max_real_eig", "history_seconds", "excitation"});
            if (h.contains("input_gain")) cfg.hil.input_gain = positive(h["input_gain"], "hil.input_gain");
            if (h.contains("absent_timeout")) cfg.hil.absent_timeout = positive(h["absent_timeout"], "hil.absent_timeout");
            if (h.contains("max_real_eig")) cfg.hil.max_real_eig = number(h["max_real_eig"], "hil.max_real_eig");
            if (h.contains("history_seconds")) {
                cfg.hil.history_seconds = positive(h["history_seconds"], "hil.history_seconds");
            }
            if (h.contains("excitation")) cfg.hil.excitation = excitation_from_json(h["excitation"], "hil.excitation", cfg.hil.excitation);
        }
        if (doc.contains("trace_identify")) {
            const auto& t = doc["trace_identify"];
            auto& ti = cfg.trace_identify;
            check_fields(t, "trace_identify", {"trace", "lambda_f", "p0", "identify_cross", "rls_trace_gate"});
            if (t.contains("trace")) ti.trace = t["trace"].get<std::string>();
            if (t.contains("lambda_f")) ti.lambda_f = number(t["lambda_f"], "trace_identify.lambda_f");
            if (t.contains("p0")) ti.p0 = positive(t["p0"], "trace_identify.p0");
            if (t.contains("identify_cross")) ti.identify_cross = t["identify_cross"].get<bool>();
            if (t.contains("rls_trace_gate") && !t["rls_trace_gate"].is_null()) {
                ti.rls_trace_gate = positive(t["rls_trace_gate"], "trace_identify.rls_trace_gate");
            }
            if (!(ti.lambda_f > 0.0 && ti.lambda_f <= 1.0)) config_error("'trace_identify.lambda_f' must lie in (0, 1]");
        }
        sc.validate();
        if (cfg.human) cfg.human->validate(p.sys, kHuman);
        if (cfg.theta_a_init) cfg.theta_a_init->validate(p.sys, kAutomation);
    } catch (const nlohmann::json::exception& e) {
        config_error(std::string("malformed config: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Config) throw;
        config_error(e.what());
    }
    return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) config_error("cannot open config file '" + path.string() + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        config_error("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

Json to_json(const MatrixXd& M) {
    Json rows = Json::array();
    for (Index r = 0; r < M.rows(); ++r) {
        Json row = Json::array();
        for (Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(row);
    }
    return rows;
}

Json to_json(const VectorXd& v) {
    Json a = Json::array();
    for (Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
    return a;
}

Json to_json(const CostParams& c) {
    Json j{{"q", to_json(c.q)}, {"r", to_json(c.r_self)}};
    bool any_cross = false;
    for (const auto& rc : c.r_cross) any_cross = any_cross || rc.size() > 0;
    if (any_cross) {
        Json rc = Json::array();
        for (const auto& v : c.r_cross) rc.push_back(v.size() > 0 ? to_json(v) : Json());
        j["r_cross"] = rc;
    }
    return j;
}

Json to_json(const DesignResult& d, const GameSystem& sys) {
    const MatrixXd A_cl = closed_loop_matrix(sys, {d.K_a, d.K_h});
    const Eigen::VectorXcd ev = A_cl.eigenvalues();
    std::vector<std::pair<double, double>> eig;
    for (Index k = 0; k < ev.size(); ++k) eig.emplace_back(ev[k].real(), ev[k].imag());
    std::sort(eig.begin(), eig.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second > b.second;
    });
    Json eigs = Json::array();
    for (const auto& [re, im] : eig) eigs.push_back({re, im});
    return Json{{"theta_a", to_json(d.theta_a)},
                {"human", to_json(d.human_cost)},
                {"K_a", to_json(d.K_a)},
                {"K_h", to_json(d.K_h)},
                {"J_g", d.J_g},
                {"eigenvalues", eigs},
                {"max_real_eig", d.max_real_eig},
                {"evaluations", d.evaluations},
                {"converged", d.converged},
                {"budget_exhausted", d.budget_exhausted}};
}

Json to_json(const IdentificationConfidence& c) {
    int active = 0;
    for (bool a : c.active) active += a ? 1 : 0;
    return Json{{"residual_norm", c.residual_norm},
                {"relative_residual", c.relative_residual},
                {"sigma_min", c.sigma_min},
                {"sigma_second", c.sigma_second},
                {"null_space_gap", c.null_space_gap},
                {"active_constraints", active},
                {"low_confidence", c.low_confidence}};
}

Json to_json(const AdaptationEvent& ev) {
    Json j{{"t", ev.t},
           {"published", ev.published},
           {"cause", ev.cause},
           {"theta_a", to_json(ev.theta_a)},
           {"J_g", ev.J_g},
           {"elapsed_seconds", ev.elapsed_seconds}};
    j["certificate"] = ev.certificate ? Json(*ev.certificate) : Json();
    j["identified"] = ev.identified ? to_json(*ev.identified) : Json();
    return j;
}

Json to_json(const ScenarioSummary& s) {
    Json eig = Json::array();
    for (double e : s.final_eigs) eig.push_back(e);
    return Json{{"rmse_adaptive_window", s.rmse_adaptive_window},
                {"rmse_full", s.rmse_full},
                {"final_eigs", eig},
                {"holds", s.holds},
                {"adaptations", s.adaptations},
                {"seed", s.seed}};
}

} // namespace sharedctl
