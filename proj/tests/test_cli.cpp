#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "pqdyn/artifacts.hpp"
#include "pqdyn/json_util.hpp"

namespace fs = std::filesystem;
using pqdyn::json_util::Json;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("pqlab_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    Result run(const std::string& args, const std::string& env = "") const {
        const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        const std::string cmd = "cd '" + dir_.string() + "' && env PQLAB_OUTPUT_ROOT='" + (dir_ / "runs").string() +
                                "' " + env + " '" + PQLAB_BINARY + "' " + args + " >'" + out.string() + "' 2>'" +
                                err.string() + "'";
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = pqdyn::artifacts::read_file(out);
        r.err = pqdyn::artifacts::read_file(err);
        return r;
    }

    fs::path write(const std::string& name, const std::string& text) const {
        pqdyn::artifacts::write_file(dir_ / name, text);
        return dir_ / name;
    }

    static std::string config(const std::string& name) { return std::string(PQDYN_SOURCE_DIR) + "/configs/" + name; }

    fs::path dir_;
};

std::vector<std::map<std::string, std::string>> read_table(const fs::path& p) {
    const auto rows = pqdyn::artifacts::parse_csv(pqdyn::artifacts::read_file(p));
    std::vector<std::map<std::string, std::string>> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        std::map<std::string, std::string> m;
        for (std::size_t c = 0; c < rows[0].size(); ++c) m[rows[0][c]] = rows[r][c];
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace

TEST_F(Cli, ListScenarios) {
    const auto r = run("list-scenarios");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = Json::parse(r.out);
    ASSERT_EQ(j.size(), 6u);
    EXPECT_EQ(j[0]["name"], "damped_well");
    EXPECT_TRUE(j[1]["expectations"].is_array());
}

TEST_F(Cli, SimulateWritesThreeDeclaredFiles) {
    const auto r = run("simulate damped_well");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto run_dir = dir_ / "runs" / "damped_well-seed1";
    for (const char* f : {"trajectory.csv", "activity.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(run_dir / f)) << f;
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(run_dir)) ++n;
    EXPECT_EQ(n, 3u);
    const auto m = pqdyn::artifacts::load_verified_manifest(run_dir);
    EXPECT_EQ(m["files"].size(), 2u);
    for (const char* key : {"run_id", "scenario_hash", "seed", "tool_version", "integrator", "dt", "started_utc"})
        EXPECT_TRUE(m.contains(key)) << key;
    EXPECT_EQ(m["integrator"], "rk4-fixed-frozen-noise");
    const auto header = pqdyn::artifacts::parse_csv(pqdyn::artifacts::read_file(run_dir / "trajectory.csv")).front();
    EXPECT_EQ(header.size(), 1u + 3u * 4u + 1u);
    EXPECT_EQ(header[1], "x_1");
    EXPECT_EQ(header.back(), "flags");
}

TEST_F(Cli, MalformedConfigExitsTwoAndNamesKey) {
    const auto bad_type = write("bad.json", R"({"scenario": "damped_well", "overrides": {"gamma": "fast"}})");
    auto r = run("simulate '" + bad_type.string() + "'");
    EXPECT_EQ(r.code, 2);
    const auto err = Json::parse(r.err);
    EXPECT_EQ(err["error"]["kind"], "config");
    EXPECT_NE(err["error"]["message"].get<std::string>().find("overrides.gamma"), std::string::npos);

    const auto bad_syntax = write("syntax.json", R"({"scenario": "damped_well",)");
    r = run("simulate '" + bad_syntax.string() + "'");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(Json::parse(r.err)["error"]["message"].get<std::string>().find("line"), std::string::npos);

    const auto unknown = write("unknown.json", R"({"scenario": "damped_well", "overide": {}})");
    r = run("simulate '" + unknown.string() + "'");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("overide"), std::string::npos);

    EXPECT_EQ(run("simulate").code, 2);
    EXPECT_EQ(run("simulate damped_well --dt banana").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(Cli, IntegrationAbortExitsThree) {
    const auto cfg = write("blowup.json", R"({
        "field": {"dim": 2, "terms": [{"type": "quadratic_form", "hessian": [[-1e305, 0], [0, -1e305]]}]},
        "damping": 1.0, "initial": {"x": [1.0, 0.0]}, "dt": 0.01, "steps": 100})");
    auto r = run("simulate '" + cfg.string() + "'");
    EXPECT_EQ(r.code, 3) << r.err;
    EXPECT_EQ(Json::parse(r.err)["error"]["kind"], "non_finite");

    const auto outside = write("outside.json", R"({
        "field": {"dim": 2, "box": {"lower": [-1, -1], "upper": [1, 1]}, "terms": [{"type": "quadratic_well", "stiffness": 1.0}]},
        "damping": 1.0, "initial": {"x": [3.0, 0.0]}, "dt": 0.01, "steps": 10})");
    r = run("simulate '" + outside.string() + "'");
    EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(Cli, IoFailureExitsFour) {
    write("blocker", "not a directory");
    const auto r = run("simulate damped_well --steps 10 --out '" + (dir_ / "blocker" / "run").string() + "'");
    EXPECT_EQ(r.code, 4) << r.err;
}

TEST_F(Cli, SameSeedByteIdentical) {
    ASSERT_EQ(run("simulate biased_expectations --seed 5 --steps 3000 --out a").code, 0);
    ASSERT_EQ(run("simulate biased_expectations --seed 5 --steps 3000 --out b").code, 0);
    ASSERT_EQ(run("simulate biased_expectations --seed 6 --steps 3000 --out c").code, 0);
    const auto a = pqdyn::artifacts::read_file(dir_ / "a" / "trajectory.csv");
    EXPECT_EQ(a, pqdyn::artifacts::read_file(dir_ / "b" / "trajectory.csv"));
    EXPECT_EQ(pqdyn::artifacts::read_file(dir_ / "a" / "activity.csv"),
              pqdyn::artifacts::read_file(dir_ / "b" / "activity.csv"));
    EXPECT_NE(a, pqdyn::artifacts::read_file(dir_ / "c" / "trajectory.csv"));
}

TEST_F(Cli, DiagnoseVerdicts) {
    ASSERT_EQ(run("simulate damped_well --out dw").code, 0);
    auto r = run("diagnose dw");
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = Json::parse(r.out);
    EXPECT_EQ(j["diagnostics"]["verdict"], "equilibrium");
    EXPECT_TRUE(j["passed"].get<bool>());
    // diagnostics.json is declared in the manifest and verifies.
    const auto m = pqdyn::artifacts::load_verified_manifest(dir_ / "dw");
    EXPECT_EQ(m["files"].back()["name"], "diagnostics.json");

    ASSERT_EQ(run("simulate '" + config("rotational_well.json") + "' --out rw").code, 0);
    r = run("diagnose rw");
    ASSERT_EQ(r.code, 0) << r.err;
    j = Json::parse(r.out);
    EXPECT_EQ(j["diagnostics"]["verdict"], "circulation");
    EXPECT_LE(j["diagnostics"]["loop_balance_ratio"].get<double>(), 0.01);
    EXPECT_TRUE(j["diagnostics"].contains("loop_circulation"));

    ASSERT_EQ(run("simulate heterogeneous_agents --out ha").code, 0);
    r = run("diagnose ha");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(Json::parse(r.out)["diagnostics"]["regime_match"], 1);
}

TEST_F(Cli, DiagnoseRejectsTampering) {
    ASSERT_EQ(run("simulate damped_well --steps 100 --out t").code, 0);
    {
        std::ofstream f(dir_ / "t" / "trajectory.csv", std::ios::app);
        f << "0,0\r\n";
    }
    auto r = run("diagnose t");
    EXPECT_EQ(r.code, 5);
    EXPECT_NE(r.err.find("digest mismatch"), std::string::npos);

    ASSERT_EQ(run("simulate damped_well --steps 100 --out u").code, 0);
    fs::remove(dir_ / "u" / "activity.csv");
    EXPECT_EQ(run("diagnose u").code, 5);
    EXPECT_EQ(run("diagnose nowhere").code, 5);
}

TEST_F(Cli, DecomposeResiduals) {
    auto r = run("decompose '" + config("pure_gradient_field.json") + "' --grid 48 --out g");
    ASSERT_EQ(r.code, 0) << r.err;
    auto m = pqdyn::artifacts::load_verified_manifest(dir_ / "g");
    // Anisotropic stiffness: the harmonic remainder of the bounded-domain split is not zero,
    // so only the residuals are tight here.
    EXPECT_LE(m["residual_div_alpha"].get<double>(), 1e-6);
    EXPECT_LE(m["residual_reconstruction"].get<double>(), 0.05);
    for (const char* f : {"field.csv", "psi.csv", "phi.csv", "alpha.csv"}) EXPECT_TRUE(fs::exists(dir_ / "g" / f));

    const auto iso = write("iso.json", R"({"dim": 2, "box": {"lower": [-1, -1], "upper": [1, 1]},
        "terms": [{"type": "quadratic_well", "stiffness": 1.5}]})");
    r = run("decompose '" + iso.string() + "' --grid 48 --out i");
    ASSERT_EQ(r.code, 0) << r.err;
    m = pqdyn::artifacts::load_verified_manifest(dir_ / "i");
    EXPECT_LE(m["split_errors"]["solenoidal_part"].get<double>(), 0.05);

    r = run("decompose '" + config("pure_solenoidal_field.json") + "' --grid 48 --out s");
    ASSERT_EQ(r.code, 0) << r.err;
    m = pqdyn::artifacts::load_verified_manifest(dir_ / "s");
    EXPECT_LE(m["split_errors"]["gradient_part"].get<double>(), 0.05);

    r = run("decompose '" + config("mixed_field.json") + "' --out x");
    ASSERT_EQ(r.code, 0) << r.err;
    m = pqdyn::artifacts::load_verified_manifest(dir_ / "x");
    EXPECT_LE(m["split_errors"]["gradient_part"].get<double>(), 0.07);
    EXPECT_LE(m["split_errors"]["solenoidal_part"].get<double>(), 0.07);
    EXPECT_LE(m["residual_reconstruction"].get<double>(), 0.05);
    EXPECT_LE(m["residual_poisson"].get<double>(), 0.05);

    EXPECT_EQ(run("decompose '" + config("mixed_field.json") + "' --backend fourier --out y").code, 2);
    EXPECT_EQ(run("decompose '" + config("mixed_field.json") + "' --grid 20000 --out z").code, 2);
}

TEST_F(Cli, SweepRotationalWellMonotone) {
    const auto r = run("sweep rotational_well --grid c=0:4:0.5 --grid gamma=0.5,1,2 --out sw", "PQLAB_THREADS=4");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = read_table(dir_ / "sw" / "sweep.csv");
    ASSERT_EQ(rows.size(), 27u);
    const std::map<std::string, int> rank{{"equilibrium", 0}, {"undecided", 1}, {"circulation", 2}};
    for (const char* g : {"0.5", "1", "2"}) {
        int prev = -1, first = -1, last = -1;
        for (const auto& row : rows) {
            if (row.at("gamma") != g) continue;
            ASSERT_EQ(row.at("status"), "ok");
            const int k = rank.at(row.at("verdict"));
            EXPECT_GE(k, prev) << "gamma " << g << " c " << row.at("c");
            prev = k;
            if (first < 0) first = k;
            last = k;
        }
        EXPECT_EQ(first, 0) << g;
        EXPECT_EQ(last, 2) << g;
    }
    const auto m = pqdyn::artifacts::load_verified_manifest(dir_ / "sw");
    EXPECT_EQ(m["files"].size(), 28u);
}

TEST_F(Cli, SweepEmptyGridAndBadAxis) {
    auto r = run("sweep rotational_well --out e");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_table(dir_ / "e" / "sweep.csv").size(), 0u);
    r = run("sweep rotational_well --grid c= --out e2");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_table(dir_ / "e2" / "sweep.csv").size(), 0u);
    EXPECT_EQ(run("sweep rotational_well --grid q=1,2").code, 2);
    EXPECT_EQ(run("sweep rotational_well --grid c=1,x").code, 2);
    EXPECT_EQ(run("sweep rotational_well --grid c=1", "PQLAB_THREADS=zero").code, 2);
}

TEST_F(Cli, SweepRecordsCellFailuresAndContinues) {
    // gamma = 0 fails validation in its cell only.
    const auto r = run("sweep damped_well --grid gamma=0,1 --out f");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = read_table(dir_ / "f" / "sweep.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].at("status"), "error");
    EXPECT_FALSE(rows[0].at("error").empty());
    EXPECT_EQ(rows[1].at("status"), "ok");
    EXPECT_EQ(rows[1].at("verdict"), "equilibrium");
}

TEST_F(Cli, SweepSubstitutableBoundary) {
    const auto r = run("sweep substitutable_subspace --grid-file '" + config("substitutable_boundary_grid.json") +
                       "' --set '{\"k\": 3}' --out sb");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = read_table(dir_ / "sb" / "sweep.csv");
    ASSERT_EQ(rows.size(), 11u);
    // a/(k-1) = 1: positive rates below, negative above, crossing within one cell.
    double crossing = -1.0;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        const double r0 = std::stod(rows[i].at("decay_rate")), r1 = std::stod(rows[i + 1].at("decay_rate"));
        if (r0 > 0.0 && r1 <= 0.0) crossing = std::stod(rows[i + 1].at("b"));
    }
    EXPECT_NEAR(crossing, 1.0, 0.1 + 1e-9);
}

TEST_F(Cli, SweepIsDeterministicAcrossThreadCounts) {
    ASSERT_EQ(run("sweep biased_expectations --grid a=1,2,4 --grid sigma=0.01,0.02 --parallel 1 --out p1").code, 0);
    ASSERT_EQ(run("sweep biased_expectations --grid a=1,2,4 --grid sigma=0.01,0.02 --parallel 3 --out p3").code, 0);
    EXPECT_EQ(pqdyn::artifacts::read_file(dir_ / "p1" / "sweep.csv"),
              pqdyn::artifacts::read_file(dir_ / "p3" / "sweep.csv"));
}
