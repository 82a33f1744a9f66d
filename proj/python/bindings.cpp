#include <algorithm>

#include <pybind11/pybind11.h>
#include <pybind11/eigen.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sharedctl/config.hpp"
#include "sharedctl/designer.hpp"
#include "sharedctl/game.hpp"
#include "sharedctl/identify.hpp"
#include "sharedctl/inverse_game.hpp"
#include "sharedctl/riccati.hpp"
#include "sharedctl/rls.hpp"
#include "sharedctl/scenario.hpp"
#include "sharedctl/trace_io.hpp"

namespace py = pybind11;
using namespace sharedctl;

namespace {

CostParams make_cost(VectorXd q, VectorXd r_self, std::vector<VectorXd> r_cross) {
    CostParams c;
    c.q = std::move(q);
    c.r_self = std::move(r_self);
    c.r_cross = std::move(r_cross);
    return c;
}

// Identified cost of one player from exact (or estimated) gains.
py::dict identify_gains(const GameSystem& sys, const std::vector<MatrixXd>& gains, std::size_t player,
                        bool identify_cross, double r_floor) {
    const ResidualSystem rs = build_residual_system(sys, gains, player, identify_cross);
    IdentifyOptions opt;
    opt.r_floor = r_floor;
    const Identification id = identify_cost(rs, opt);
    const IdentificationConfidence conf = identification_confidence(rs, id, opt);
    py::dict out;
    out["cost"] = make_cost(id.theta.q, id.theta.r_self, id.theta.r_cross);
    out["P"] = id.theta.p_entries;
    out["residual"] = id.residual;
    out["relative_residual"] = conf.relative_residual;
    out["null_space_gap"] = conf.null_space_gap;
    out["low_confidence"] = conf.low_confidence;
    return out;
}

py::dict scenario(const std::filesystem::path& config, std::optional<bool> adaptive,
                  std::optional<std::uint64_t> seed) {
    AppConfig cfg = load_config(config);
    if (adaptive) cfg.scenario.pipeline.adaptive = *adaptive;
    if (seed) cfg.scenario.seed = *seed;
    ScenarioResult res;
    {
        py::gil_scoped_release release;
        res = run_scenario(cfg.scenario);
    }
    const auto n = static_cast<Index>(res.series.size());
    const Index states = cfg.scenario.pipeline.sys.states();
    VectorXd t(n), e_K(n), max_eig(n);
    MatrixXd x(n, states), K_a(n, states), K_h_hat(n, states);
    for (Index k = 0; k < n; ++k) {
        const Sample& s = res.series[static_cast<std::size_t>(k)];
        t[k] = s.t;
        x.row(k) = s.x.transpose();
        K_a.row(k) = s.K_a.row(0);
        K_h_hat.row(k) = s.K_h_hat.row(0);
        e_K[k] = s.e_K;
        max_eig[k] = s.eig.empty() ? 0.0 : *std::max_element(s.eig.begin(), s.eig.end());
    }
    py::dict out;
    out["summary"] = to_json(res.summary).dump();
    out["aborted"] = res.aborted;
    out["abort_reason"] = res.abort_reason;
    out["t"] = t;
    out["x"] = x;
    out["K_a"] = K_a;
    out["K_h_hat"] = K_h_hat;
    out["e_K"] = e_K;
    out["max_eig"] = max_eig;
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Shared-control game core";

    // Carries the error category as `code`.
    static py::handle error = PyErr_NewException("sharedctl._core.Error", PyExc_RuntimeError, nullptr);
    m.attr("Error") = error;
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error)(e.what());
            exc.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error.ptr(), exc.ptr());
        }
    });

    py::class_<GameSystem>(m, "GameSystem")
        .def(py::init<MatrixXd, std::vector<MatrixXd>>(), py::arg("A"), py::arg("B"))
        .def_property_readonly("A", &GameSystem::A)
        .def_property_readonly("inputs", &GameSystem::inputs)
        .def_property_readonly("states", &GameSystem::states)
        .def_property_readonly("players", &GameSystem::players)
        .def("input_dim", &GameSystem::input_dim);

    py::class_<CostParams>(m, "CostParams")
        .def(py::init(&make_cost), py::arg("q"), py::arg("r_self"),
             py::arg("r_cross") = std::vector<VectorXd>{})
        .def_readwrite("q", &CostParams::q)
        .def_readwrite("r_self", &CostParams::r_self)
        .def_readwrite("r_cross", &CostParams::r_cross)
        .def("scaled", &CostParams::scaled)
        .def("__repr__", [](const CostParams& c) { return "CostParams(" + to_json(c).dump() + ")"; });

    py::class_<GlobalObjective>(m, "GlobalObjective")
        .def(py::init([](VectorXd q, std::vector<VectorXd> r) {
                 GlobalObjective g;
                 g.q = std::move(q);
                 g.r = std::move(r);
                 return g;
             }),
             py::arg("q"), py::arg("r"))
        .def_readwrite("q", &GlobalObjective::q)
        .def_readwrite("r", &GlobalObjective::r);

    py::class_<RiccatiSolution>(m, "RiccatiSolution")
        .def_readonly("P", &RiccatiSolution::P)
        .def_readonly("K", &RiccatiSolution::K)
        .def_readonly("residual_norm", &RiccatiSolution::residual_norm)
        .def_readonly("iterations", &RiccatiSolution::iterations);

    m.def("solve_care", &solve_care, py::arg("A"), py::arg("B"), py::arg("Q"), py::arg("R"));
    m.def(
        "solve_coupled_riccati",
        [](const GameSystem& sys, const std::vector<CostParams>& costs) { return solve_coupled_riccati(sys, costs); },
        py::arg("sys"), py::arg("costs"));
    m.def("coupled_riccati_residuals", &coupled_riccati_residuals, py::arg("sys"), py::arg("costs"), py::arg("P"));
    m.def("closed_loop_matrix", &closed_loop_matrix, py::arg("sys"), py::arg("gains"));
    m.def("max_real_eigenvalue", &max_real_eigenvalue);
    m.def(
        "evaluate_global_cost",
        [](const GameSystem& sys, const std::vector<MatrixXd>& gains, const GlobalObjective& obj) {
            return evaluate_global_cost(sys, gains, obj, MatrixXd(MatrixXd::Identity(sys.states(), sys.states())));
        },
        py::arg("sys"), py::arg("gains"), py::arg("objective"));

    py::class_<DesignResult>(m, "DesignResult")
        .def_readonly("theta_a", &DesignResult::theta_a)
        .def_readonly("human_cost", &DesignResult::human_cost)
        .def_readonly("K_a", &DesignResult::K_a)
        .def_readonly("K_h", &DesignResult::K_h)
        .def_readonly("J_g", &DesignResult::J_g)
        .def_readonly("evaluations", &DesignResult::evaluations)
        .def_readonly("max_real_eig", &DesignResult::max_real_eig)
        .def_readonly("converged", &DesignResult::converged);

    m.def(
        "evaluate_design",
        [](const GameSystem& sys, const CostParams& theta_a, const CostParams& human, const GlobalObjective& obj) {
            return evaluate_design(sys, theta_a, human, obj);
        },
        py::arg("sys"), py::arg("theta_a"), py::arg("human"), py::arg("objective"));
    m.def(
        "design_automation",
        [](const GameSystem& sys, const CostParams& human, const GlobalObjective& obj, const CostParams& init,
           int budget, std::uint64_t seed) {
            DesignProblem p;
            p.sys = sys;
            p.human_cost = human;
            p.objective = obj;
            p.theta_a_init = init;
            p.bounds = DesignBounds::uniform(sys.states(), sys.input_dim(kAutomation));
            p.budget = budget;
            p.seed = seed;
            py::gil_scoped_release release;
            return design_automation(p);
        },
        py::arg("sys"), py::arg("human"), py::arg("objective"), py::arg("theta_a_init"), py::arg("budget") = 150,
        py::arg("seed") = 0);
    m.def("design_json", [](const DesignResult& d, const GameSystem& sys) { return to_json(d, sys).dump(); });

    py::class_<RlsEstimator>(m, "RlsEstimator")
        .def(py::init<Index, Index, double, double>(), py::arg("states"), py::arg("inputs"), py::arg("lambda_f"),
             py::arg("p0"))
        .def(py::init<const MatrixXd&, double, double>(), py::arg("initial_gain"), py::arg("lambda_f"),
             py::arg("p0"))
        .def("update", [](RlsEstimator& r, const VectorXd& x, const VectorXd& u) {
            return r.update(x, u) == RlsEstimator::Update::Applied;
        })
        .def_property_readonly("gain", &RlsEstimator::gain)
        .def_property_readonly("covariance", &RlsEstimator::covariance)
        .def_property_readonly("sample_count", &RlsEstimator::sample_count);

    m.def("identify_gains", &identify_gains, py::arg("sys"), py::arg("gains"), py::arg("player"),
          py::arg("identify_cross") = false, py::arg("r_floor") = 1e-6);

    m.def(
        "check_config",
        [](const std::filesystem::path& path) {
            const AppConfig cfg = load_config(path);
            return cfg.scenario.pipeline.sys.states();
        },
        "Loads and validates a config file; returns the state dimension.");
    m.def("run_scenario", &scenario, py::arg("config"), py::arg("adaptive") = py::none(),
          py::arg("seed") = py::none());
    m.def(
        "identify_trace",
        [](const std::filesystem::path& config, const std::filesystem::path& trace, double lambda_f, double p0) {
            const AppConfig cfg = load_config(config);
            TraceIdentifySettings s = cfg.trace_identify;
            s.lambda_f = lambda_f;
            s.p0 = p0;
            const GameSystem& sys = cfg.scenario.pipeline.sys;
            const auto players = identify_trace(sys, read_trace_csv(trace, sys.states()), s,
                                                cfg.scenario.pipeline.identify);
            std::vector<std::string> out;
            for (const auto& p : players) out.push_back(to_json(p).dump());
            return out;
        },
        py::arg("config"), py::arg("trace"), py::arg("lambda_f") = 1.0, py::arg("p0") = 1e8);
}
