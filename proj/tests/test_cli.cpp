#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include "criteria.hpp"
#include "vehicle_system.hpp"
#include "sharedctl/config.hpp"
#include "sharedctl/riccati.hpp"
#include "sharedctl/trace_io.hpp"

using namespace sharedctl;
using namespace testdata;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("sharedctl_cli_" + std::string(info->name()) + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(const std::string& args) const {
        const std::string cmd = std::string(SHAREDCTL_CLI) + " " + args + " > " + (dir_ / "stdout.txt").string() +
                                " 2> " + (dir_ / "stderr.txt").string();
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    fs::path write_config(const Json& doc, const std::string& name = "config.json") const {
        const fs::path p = dir_ / name;
        std::ofstream(p) << doc.dump(2);
        return p;
    }

    static Json read_json(const fs::path& p) {
        std::ifstream in(p);
        return Json::parse(in);
    }

    static std::string read_text(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    std::string out() const { return (dir_ / "out").string(); }

    fs::path dir_;
};

Json short_run() {
    return Json{{"schema_version", 1},
                {"duration", 12},
                {"human_phases",
                 Json::array({Json{{"start", 0}, {"q", {50, 0.2, 0.2}}, {"r", {1}}},
                              Json{{"start", 6}, {"q", {0.5, 0.2, 0.2}}, {"r", {1}}}})},
                {"design", {{"offline_budget", 300}}}};
}

// Closed loop under the Nash gains of (theta_a, theta_h), excited by the default sinusoids.
void write_synthetic_trace(const fs::path& path, const CostParams& theta_a, const CostParams& theta_h) {
    const auto sys = vehicle_system();
    const auto d = evaluate_design(sys, theta_a, theta_h, vehicle_objective());
    const auto w = Excitation{}.disturbance(3, 3);
    std::ofstream out(path);
    out << "t,x1,x2,x3,u_a,u_h\n";
    VectorXd x = VectorXd::Zero(3);
    for (int k = 0; k < 1500; ++k) {
        const VectorXd ua = -d.K_a * x;
        const VectorXd uh = -d.K_h * x;
        out << format_g9(k * 0.04) << ',' << format_g9(x[0]) << ',' << format_g9(x[1]) << ',' << format_g9(x[2])
            << ',' << format_g9(ua[0]) << ',' << format_g9(uh[0]) << '\n';
        x = rk4_step_inputs(sys, {ua, uh}, x, k * 0.04, 0.04, w);
    }
}

} // namespace

TEST_F(Cli, MissingConfigExits2) {
    EXPECT_EQ(run("simulate --config " + (dir_ / "absent.json").string() + " --out " + out()), 2);
    EXPECT_NE(read_text(dir_ / "stderr.txt").find("absent.json"), std::string::npos);
}

TEST_F(Cli, UnknownFieldExits2) {
    Json doc = short_run();
    doc["extra"] = true;
    EXPECT_EQ(run("simulate --config " + write_config(doc).string() + " --out " + out()), 2);
    EXPECT_NE(read_text(dir_ / "stderr.txt").find("extra"), std::string::npos);
}

TEST_F(Cli, BadUsageExits2) {
    EXPECT_EQ(run("simulate"), 2);
    EXPECT_EQ(run("frobnicate --config x"), 2);
}

TEST_F(Cli, UnwritableOutputExits2) {
    const fs::path blocker = dir_ / "file";
    std::ofstream(blocker) << "x";
    EXPECT_EQ(run("simulate --config " + write_config(short_run()).string() + " --out " + (blocker / "sub").string()),
              2);
}

TEST_F(Cli, SimulateWritesTraceAndSummary) {
    ASSERT_EQ(run("simulate --config " + write_config(short_run()).string() + " --out " + out()), 0);
    const Json s = read_json(fs::path(out()) / "summary.json");
    for (const char* k : {"rmse_adaptive_window", "rmse_full", "final_eigs", "holds", "adaptations", "seed"}) {
        EXPECT_TRUE(s.contains(k)) << k;
    }
    EXPECT_EQ(s["holds"].get<int>() + s["adaptations"].get<int>(), 12);
    const auto data = read_trace_csv(fs::path(out()) / "trace.csv", 3);
    EXPECT_EQ(data.size(), 300u);
}

TEST_F(Cli, SeedOverrideIsByteReproducible) {
    const auto cfg = write_config(short_run()).string();
    ASSERT_EQ(run("simulate --config " + cfg + " --seed 7 --out " + (dir_ / "a").string()), 0);
    ASSERT_EQ(run("simulate --config " + cfg + " --seed 7 --out " + (dir_ / "b").string()), 0);
    ASSERT_EQ(run("simulate --config " + cfg + " --seed 8 --out " + (dir_ / "c").string()), 0);
    const auto a = read_text(dir_ / "a" / "trace.csv");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, read_text(dir_ / "b" / "trace.csv"));
    EXPECT_EQ(read_text(dir_ / "a" / "summary.json"), read_text(dir_ / "b" / "summary.json"));
    EXPECT_NE(a, read_text(dir_ / "c" / "trace.csv"));
    EXPECT_EQ(read_json(dir_ / "a" / "summary.json")["seed"].get<int>(), 7);
}

TEST_F(Cli, CompareOnBundledConfig) {
    ASSERT_EQ(run("simulate --config " SHAREDCTL_SOURCE_DIR "/configs/paper_s4.json --compare --out " + out()), 0);
    const double adaptive = read_json(fs::path(out()) / "summary_adaptive.json")["rmse_adaptive_window"];
    const double baseline = read_json(fs::path(out()) / "summary_baseline.json")["rmse_adaptive_window"];
    EXPECT_LT(adaptive, baseline);
    const auto table = read_text(dir_ / "stdout.txt");
    EXPECT_NE(table.find("adaptive"), std::string::npos);
    EXPECT_NE(table.find("baseline"), std::string::npos);
}

TEST_F(Cli, IdentifyRecoversSyntheticCosts) {
    write_synthetic_trace(dir_ / "trace.csv", designed_theta_a(), human_phase2());
    Json doc{{"schema_version", 1}, {"trace_identify", {{"trace", "trace.csv"}}}};
    ASSERT_EQ(run("identify --config " + write_config(doc).string() + " --out " + out()), 0)
        << read_text(dir_ / "stderr.txt");
    const Json j = read_json(fs::path(out()) / "identify.json");
    ASSERT_EQ(j["players"].size(), 2u);
    const std::vector<CostParams> truth{designed_theta_a(), human_phase2()};
    for (std::size_t i = 0; i < 2; ++i) {
        const VectorXd q = vector_from_json(j["players"][i]["theta"]["q"], "q");
        const double r = j["players"][i]["theta"]["r"][0];
        EXPECT_DOUBLE_EQ(r, 1.0);
        EXPECT_LT((q - truth[i].q).cwiseAbs().maxCoeff(), 1e-3 * std::max(1.0, truth[i].q.maxCoeff()))
            << q.transpose();
        EXPECT_TRUE(j["players"][i].contains("confidence"));
    }
    EXPECT_FALSE(j["low_confidence"].get<bool>());
}

TEST_F(Cli, IdentifyZeroTraceExits4) {
    std::ofstream csv(dir_ / "zero.csv");
    csv << "t,x1,x2,x3,u_a,u_h\n";
    for (int k = 0; k < 50; ++k) csv << k * 0.04 << ",0,0,0,0,0\n";
    csv.close();
    const auto cfg = write_config(Json{{"schema_version", 1}});
    EXPECT_EQ(run("identify --config " + cfg.string() + " --trace " + (dir_ / "zero.csv").string() + " --out " + out()),
              4);
    // The flagged result is still written.
    EXPECT_TRUE(read_json(fs::path(out()) / "identify.json")["low_confidence"].get<bool>());
}

TEST_F(Cli, IdentifyNanRowExits2) {
    std::ofstream csv(dir_ / "nan.csv");
    csv << "t,x1,x2,x3,u_a,u_h\n0,1,2,3,4,5\n0.04,1,nan,3,4,5\n";
    csv.close();
    const auto cfg = write_config(Json{{"schema_version", 1}});
    EXPECT_EQ(run("identify --config " + cfg.string() + " --trace " + (dir_ / "nan.csv").string() + " --out " + out()),
              2);
}

TEST_F(Cli, DesignReferenceInputs) {
    ASSERT_EQ(run("design --config " SHAREDCTL_SOURCE_DIR "/configs/paper_s4.json --out " + out()), 0);
    const Json j = read_json(fs::path(out()) / "design.json");
    const MatrixXd K_a = matrix_from_json(j["K_a"], "K_a");
    const MatrixXd K_h = matrix_from_json(j["K_h"], "K_h");
    EXPECT_LT((K_h - criteria::reference_K_h()).cwiseAbs().maxCoeff(), 0.05);
    const bool gains_match = (K_a - criteria::reference_K_a()).cwiseAbs().maxCoeff() <= 0.10;
    EXPECT_TRUE(gains_match || j["J_g"].get<double>() <= criteria::reference_implied_design().J_g + 1e-6);
    EXPECT_EQ(j["eigenvalues"].size(), 3u);
}

TEST_F(Cli, DesignWithoutHumanChannelIsLqr) {
    Json doc{{"schema_version", 1},
             {"system",
              {{"A", {{-0.1, 0, 0}, {0, 0, 0.9}, {0, 0, 0}}}, {"B", {{{1.95}, {0}, {1.25}}, {{0}, {0}, {0}}}}}},
             {"design", {{"offline_budget", 300}}}};
    ASSERT_EQ(run("design --config " + write_config(doc).string() + " --out " + out()), 0);
    const Json j = read_json(fs::path(out()) / "design.json");
    const MatrixXd K_h = matrix_from_json(j["K_h"], "K_h");
    EXPECT_LT(K_h.norm(), 1e-12);
    const CostParams theta{vector_from_json(j["theta_a"]["q"], "q"), vector_from_json(j["theta_a"]["r"], "r"), {}};
    const GameSystem sys(vehicle_system().A(), {vehicle_system().B(0), MatrixXd::Zero(3, 1)});
    const MatrixXd P = solve_care(sys.A(), sys.B(0), theta.Q(), theta.R());
    EXPECT_LT((matrix_from_json(j["K_a"], "K_a") - sys.B(0).transpose() * P).cwiseAbs().maxCoeff(), 1e-8);
}

TEST_F(Cli, DesignInfeasibleBoundsExits2) {
    Json doc{{"schema_version", 1}, {"design", {{"bounds", {{"q_lower", 5}, {"q_upper", 1}}}}}};
    EXPECT_EQ(run("design --config " + write_config(doc).string() + " --out " + out()), 2);
}

TEST_F(Cli, DesignWithoutStableCandidateExits3) {
    Json doc{{"schema_version", 1},
             {"system", {{"A", {{0.5, 0, 0}, {0, 0.2, 0}, {0, 0, 0.1}}}, {"B", {{{0}, {0}, {0}}, {{0}, {0}, {0}}}}}},
             {"design", {{"offline_budget", 40}}}};
    EXPECT_EQ(run("design --config " + write_config(doc).string() + " --out " + out()), 3);
    EXPECT_EQ(run("simulate --config " + write_config(doc).string() + " --out " + out()), 3);
}
