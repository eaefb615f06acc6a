#include <gtest/gtest.h>

#include <sys/wait.h>

#include "support.hpp"

using rsb::testing::count_occurrences;
using rsb::testing::scratch_dir;
using rsb::testing::slurp;
namespace fs = std::filesystem;

#ifndef RSB_CLI_PATH
#define RSB_CLI_PATH ""
#endif

namespace {

const char* kTiny = R"(
name = "%NAME%"
seed = 11

[task]
%TASK%

[grid]
timesteps = 4

[train]
stages = 1
iters_backward = 30
batch_size = 16
cache_trajectories = 64
eval_samples = 200
eval_projections = 4
log_every = 10

[net]
width = 8
depth = 1
time_embed_dim = 4
)";

std::string tiny_config(const std::string& name, const std::string& task)
{
    std::string s = kTiny;
    s.replace(s.find("%NAME%"), 6, name);
    s.replace(s.find("%TASK%"), 6, task);
    return s;
}

struct Invocation {
    int status = -1;
    std::string out;
    std::string err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        if (std::string(RSB_CLI_PATH).empty())
            GTEST_SKIP() << "command-line tool not built";
        // Each test gets its own directory so ctest can run them in parallel.
        dir_ = scratch_dir(std::string("cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        std::ofstream(dir_ / "uncond.toml") << tiny_config("uncond", "kind = \"unconditional\"\ndata = \"eight_gaussians\"");
        std::ofstream(dir_ / "trans.toml")
            << tiny_config("trans", "kind = \"translation\"\nsource = \"circles\"\ntarget = \"eight_gaussians\"");
    }

    Invocation run(const std::string& args)
    {
        const auto out = dir_ / ("out_" + std::to_string(counter_) + ".txt");
        const auto err = dir_ / ("err_" + std::to_string(counter_++) + ".txt");
        const std::string cmd = std::string("'") + RSB_CLI_PATH + "' --run-dir '" + (dir_ / "runs").string() +
                                "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
        const int raw = std::system(cmd.c_str());
        Invocation r;
        r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    fs::path trained(const std::string& name)
    {
        const auto ckpt = dir_ / "runs" / name / "stage_1.ckpt.json";
        if (!fs::exists(ckpt)) {
            const auto r = run("-q train '" + (dir_ / (name + ".toml")).string() + "'");
            EXPECT_EQ(r.status, 0) << r.err;
        }
        return ckpt;
    }

    static std::string p(const fs::path& x) { return "'" + x.string() + "'"; }

    fs::path dir_;
    int counter_ = 0;
};

} // namespace

TEST_F(Cli, HelpAndUsageErrors)
{
    EXPECT_EQ(run("--help").status, 0);
    EXPECT_EQ(run("").status, 2);
    EXPECT_EQ(run("frobnicate").status, 2);
    EXPECT_EQ(run("sample").status, 2);
}

TEST_F(Cli, TrainWritesRunDirectory)
{
    const auto ckpt = trained("uncond");
    const auto run_dir = dir_ / "runs" / "uncond";
    EXPECT_TRUE(fs::exists(ckpt));
    EXPECT_TRUE(fs::exists(run_dir / "config.toml"));
    EXPECT_TRUE(fs::exists(run_dir / "samples" / "backward.csv"));
    const std::string metrics = slurp(run_dir / "metrics.csv");
    EXPECT_EQ(metrics.rfind("stage,direction,iteration,loss,sliced_w,mode_coverage\n", 0), 0u);
    EXPECT_EQ(count_occurrences(metrics, "\n"), 1u + 4u + 3u);
}

TEST_F(Cli, MissingTimestepsIsAConfigError)
{
    std::ofstream(dir_ / "broken.toml") << "name = \"broken\"\n[grid]\nhorizon = 1.0\n";
    const auto r = run("train " + p(dir_ / "broken.toml"));
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.err.find("grid.timesteps"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingFilesAreIoErrors)
{
    EXPECT_EQ(run("train " + p(dir_ / "nope.toml")).status, 4);
    EXPECT_EQ(run("sample " + p(dir_ / "nope.json") + " -o " + p(dir_ / "x.csv")).status, 4);
}

TEST_F(Cli, SampleZeroWritesHeaderOnly)
{
    const auto ckpt = trained("uncond");
    const auto out = dir_ / "zero.csv";
    ASSERT_EQ(run("-q sample " + p(ckpt) + " -n 0 -o " + p(out)).status, 0);
    EXPECT_EQ(slurp(out), "x,y\n");
}

TEST_F(Cli, SameSeedSameSamples)
{
    const auto ckpt = trained("uncond");
    ASSERT_EQ(run("--seed 5 -q sample " + p(ckpt) + " -n 100 -o " + p(dir_ / "s1.csv")).status, 0);
    ASSERT_EQ(run("--seed 5 -q sample " + p(ckpt) + " -n 100 -o " + p(dir_ / "s2.csv")).status, 0);
    ASSERT_EQ(run("--seed 6 -q sample " + p(ckpt) + " -n 100 -o " + p(dir_ / "s3.csv")).status, 0);
    EXPECT_EQ(slurp(dir_ / "s1.csv"), slurp(dir_ / "s2.csv"));
    EXPECT_NE(slurp(dir_ / "s1.csv"), slurp(dir_ / "s3.csv"));
    EXPECT_EQ(count_occurrences(slurp(dir_ / "s1.csv"), "\n"), 101u);
}

TEST_F(Cli, TrajectoryPlotHasPanelPerTime)
{
    const auto ckpt = trained("uncond");
    ASSERT_EQ(run("-q sample " + p(ckpt) + " -n 20 -o " + p(dir_ / "t.csv") + " --trajectory " +
                  p(dir_ / "traj.csv"))
                  .status,
              0);
    ASSERT_EQ(run("-q plot " + p(dir_ / "traj.csv") + " -o " + p(dir_ / "traj.svg")).status, 0);
    const std::string svg = slurp(dir_ / "traj.svg");
    EXPECT_EQ(count_occurrences(svg, "<g transform"), 5u);
    EXPECT_EQ(count_occurrences(svg, "<circle"), 100u);
}

TEST_F(Cli, PlotOfEmptyFileGivesEmptyAxes)
{
    std::ofstream(dir_ / "empty.csv").flush();
    ASSERT_EQ(run("-q plot " + p(dir_ / "empty.csv") + " -o " + p(dir_ / "empty.svg")).status, 0);
    const std::string svg = slurp(dir_ / "empty.svg");
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_EQ(count_occurrences(svg, "<circle"), 0u);
}

TEST_F(Cli, TranslatePreservesRowCount)
{
    const auto ckpt = trained("trans");
    EXPECT_TRUE(fs::exists(dir_ / "runs" / "trans" / "samples" / "forward.csv"));
    std::ofstream in(dir_ / "src.csv");
    in << "x,y\n";
    for (int i = 0; i < 37; ++i)
        in << std::cos(i) << ',' << std::sin(i) << '\n';
    in.close();
    ASSERT_EQ(run("-q translate " + p(ckpt) + " -i " + p(dir_ / "src.csv") + " -o " + p(dir_ / "dst.csv")).status,
              0);
    EXPECT_EQ(count_occurrences(slurp(dir_ / "dst.csv"), "\n"), 38u);
    EXPECT_EQ(run("translate " + p(ckpt) + " -o " + p(dir_ / "dst.csv")).status, 2);
}

TEST_F(Cli, EvalWritesReport)
{
    const auto ckpt = trained("trans");
    const auto r = run("eval " + p(ckpt) + " -n 300 --projections 8");
    ASSERT_EQ(r.status, 0) << r.err;
    const auto j = nlohmann::json::parse(slurp(dir_ / "runs" / "trans" / "stage_1.eval.json"));
    EXPECT_EQ(j["stage"], 1);
    EXPECT_TRUE(j["forward"]["mode_coverage"].is_number());
    EXPECT_TRUE(j["backward"]["mode_coverage"].is_null());
    EXPECT_EQ(j["forward"]["n_samples"], 300);
}

TEST_F(Cli, OracleSolvesAndReportsNonConvergence)
{
    std::ofstream(dir_ / "mu.csv") << "x,y,weight\n0,0,0.5\n1,0,0.5\n";
    std::ofstream(dir_ / "nu.csv") << "x,y,weight\n0,1,0.5\n1,1,0.5\n";
    const auto r = run("oracle " + p(dir_ / "mu.csv") + " " + p(dir_ / "nu.csv") + " --eps 0.01 -o " +
                       p(dir_ / "plan.csv"));
    ASSERT_EQ(r.status, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_TRUE(j["converged"].get<bool>());
    EXPECT_NEAR(j["transport_cost"].get<double>(), 1.0, 1e-6);
    EXPECT_EQ(count_occurrences(slurp(dir_ / "plan.csv"), "\n"), 5u);

    std::ofstream(dir_ / "nu2.csv") << "x,y,weight\n0,1,0.9\n3,1,0.1\n";
    EXPECT_EQ(run("oracle " + p(dir_ / "mu.csv") + " " + p(dir_ / "nu2.csv") + " --eps 0.05 --max-iters 1 --tol 1e-15")
                  .status,
              3);
    std::ofstream(dir_ / "bad.csv") << "x,y,weight\n0,0,0.7\n";
    EXPECT_EQ(run("oracle " + p(dir_ / "mu.csv") + " " + p(dir_ / "bad.csv")).status, 2);
}
