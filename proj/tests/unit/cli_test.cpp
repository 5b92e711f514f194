#include "contourforge/cli.hpp"
#include "contourforge/io.hpp"
#include "contourforge/metrics.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace contourforge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
    json summary() const { return json::parse(out); }
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string fx(const char* name) { return cf_test::fixture(name).string(); }

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("cf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string tmp(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, RefineMatchesGoldenMask) {
    const auto r = run({"refine", "--prob", fx("ring_prob.fpm"), "--init", fx("ring_init.pgm"), "--lambda", "0", "--c",
                        "1", "--out", tmp("out.pgm"), "--trajectory", tmp("traj")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(r.summary()["command"], "refine");
    EXPECT_TRUE(r.summary().contains("iou_vs_init"));
    const auto got = io::read_mask(tmp("out.pgm"));
    EXPECT_GE(iou(got, io::read_mask(fx("ring_expected.pgm"))), 0.98);
    EXPECT_TRUE(fs::exists(dir_ / "traj" / "index.json"));
    EXPECT_EQ(r.out.find('\n'), r.out.size() - 1);
}

TEST_F(CliTest, RefineFromPolygon) {
    const auto r = run({"refine", "--prob", fx("ring_prob.fpm"), "--init-poly", fx("ring_init_poly.json"), "--out",
                        tmp("out.pgm")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_GE(iou(io::read_mask(tmp("out.pgm")), io::read_mask(fx("ring_expected.pgm"))), 0.9);
}

TEST_F(CliTest, RefineZeroStepsIsIdentity) {
    const auto r = run({"refine", "--prob", fx("ring_prob.fpm"), "--init", fx("ring_init.pgm"), "--steps", "0", "--out",
                        tmp("out.pgm")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(io::read_mask(tmp("out.pgm")), io::read_mask(fx("ring_init.pgm")));
    EXPECT_EQ(r.summary()["iou_vs_init"], 1.0);
}

TEST_F(CliTest, MissingProbIsUsageError) {
    const auto r = run({"refine", "--init", fx("ring_init.pgm"), "--out", tmp("out.pgm")});
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.err.find("--prob"), std::string::npos);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
    EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, UnknownFlagAndCommandAreUsageErrors) {
    EXPECT_EQ(run({"refine", "--bogus"}).code, kExitUsage);
    EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(run({}).code, kExitUsage);
    EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(CliTest, MalformedFpmNamesByteOffset) {
    const auto r = run({"refine", "--prob", fx("malformed.fpm"), "--init", fx("ring_init.pgm"), "--out", tmp("o.pgm")});
    EXPECT_EQ(r.code, kExitDomain);
    EXPECT_NE(r.err.find("byte offset"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(tmp("o.pgm")));
}

TEST_F(CliTest, MissingInputFileIsDomainError) {
    const auto r = run({"refine", "--prob", tmp("nope.fpm"), "--init", fx("ring_init.pgm"), "--out", tmp("o.pgm")});
    EXPECT_EQ(r.code, kExitDomain);
}

TEST_F(CliTest, EvalGtAsOwnPrediction) {
    const auto gt = fx("eval_toy/gt");
    const auto r = run({"eval", "--pred-dir", gt, "--gt-dir", gt, "--classes", "2", "--tol", "0.1", "--out",
                        tmp("eval.json"), "--csv", tmp("pr.csv")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(r.summary()["mean_mf_ods"], 1.0);
    EXPECT_EQ(r.summary()["mean_ap"], 1.0);
    EXPECT_TRUE(fs::exists(tmp("pr.csv")));
}

TEST_F(CliTest, EvalToyMatchesOracleAndIsStable) {
    const auto oracle = json::parse(io::read_file(fx("eval_toy/oracle.json")));
    std::vector<std::string> args = {"eval",     "--pred-dir", fx("eval_toy/pred"), "--gt-dir", fx("eval_toy/gt"),
                                     "--classes", "2",         "--tol",             "0.1",      "--out",
                                     tmp("a.json")};
    const auto a = run(args);
    ASSERT_EQ(a.code, kExitOk) << a.err;
    EXPECT_NEAR(a.summary()["mean_mf_ods"].get<double>(), oracle["mean_mf_ods"].get<double>(), 1e-12);
    EXPECT_NEAR(a.summary()["mean_ap"].get<double>(), oracle["mean_ap"].get<double>(), 1e-12);
    args.back() = tmp("b.json");
    args.insert(args.begin(), {"--threads", "3"});
    const auto b = run(args);
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(io::read_file(tmp("a.json")), io::read_file(tmp("b.json")));
}

TEST_F(CliTest, EvalEmptyPredDirFails) {
    fs::create_directories(dir_ / "empty");
    const auto r = run({"eval", "--pred-dir", tmp("empty"), "--gt-dir", fx("eval_toy/gt"), "--out", tmp("e.json")});
    EXPECT_EQ(r.code, kExitDomain);
}

TEST_F(CliTest, EvalMissingPairListed) {
    fs::create_directories(dir_ / "pred");
    fs::copy_file(fx("eval_toy/pred/img0_0.fpm"), dir_ / "pred" / "img0_0.fpm");
    const auto r = run({"eval", "--pred-dir", tmp("pred"), "--gt-dir", fx("eval_toy/gt"), "--classes", "2", "--out",
                        tmp("e.json")});
    EXPECT_EQ(r.code, kExitDomain);
    EXPECT_NE(r.err.find("img0_1.fpm"), std::string::npos) << r.err;
}

TEST_F(CliTest, SimulateCoarseSquare) {
    const auto r = run({"simulate-coarse", "--mask", fx("square.pgm"), "--target-err", "4", "--out", tmp("c.pgm"),
                        "--report", tmp("rep.json"), "--polygon-out", tmp("poly.json")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(r.summary()["clicks"], 4);
    const auto rep = json::parse(io::read_file(tmp("rep.json")));
    EXPECT_EQ(rep["clicks"], 4);
    EXPECT_EQ(io::read_polygon(tmp("poly.json")).vertices.size(), 4u);
}

TEST_F(CliTest, SimulateCoarseDirectory) {
    fs::create_directories(dir_ / "masks");
    fs::copy_file(fx("square.pgm"), dir_ / "masks" / "a.pgm");
    fs::copy_file(fx("align_gt.pgm"), dir_ / "masks" / "b.pgm");
    const auto r = run({"simulate-coarse", "--mask", tmp("masks"), "--target-err", "4", "--out", tmp("coarse"),
                        "--report", tmp("rep.json")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(r.summary()["items"], 2);
    EXPECT_TRUE(fs::exists(dir_ / "coarse" / "b.pgm"));
}

TEST_F(CliTest, SimulateCoarseTinyMaskIsDomainError) {
    BinaryMask m(9, 9);
    m.set(4, 4, true);
    io::write_mask(tmp("tiny.pgm"), m);
    const auto r = run({"simulate-coarse", "--mask", tmp("tiny.pgm"), "--target-err", "4", "--out", tmp("c.pgm")});
    EXPECT_EQ(r.code, kExitDomain);
    EXPECT_NE(r.err.find("below coarsening scale"), std::string::npos);
}

TEST_F(CliTest, AlignOnOwnBoundaryChoosesZero) {
    const auto r = run({"align", "--gt", fx("align_gt.pgm"), "--prob", fx("align_prob.fpm"), "--out", tmp("a.pgm"),
                        "--boundary-out", tmp("b.pgm")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(r.summary()["chosen_t"], 0);
    EXPECT_EQ(io::read_mask(tmp("a.pgm")), io::read_mask(fx("align_gt.pgm")));
}

TEST_F(CliTest, TrainToyFiniteAndDeterministic) {
    const auto a = run({"train-toy", "--config", fx("circle_train.json"), "--out", tmp("ta")});
    ASSERT_EQ(a.code, kExitOk) << a.err;
    EXPECT_TRUE(a.summary()["loss_finite"].get<bool>());
    EXPECT_EQ(a.summary()["iterations"], 300);
    const auto report = json::parse(io::read_file(tmp("ta/report.json")));
    for (const auto& v : report["loss_curve"]["total"]) EXPECT_TRUE(std::isfinite(v.get<double>()));
    EXPECT_TRUE(fs::exists(dir_ / "ta" / "final_logits.fpm"));
    const auto b = run({"train-toy", "--config", fx("circle_train.json"), "--out", tmp("tb")});
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(io::read_file(tmp("ta/report.json")), io::read_file(tmp("tb/report.json")));
}

TEST_F(CliTest, NormalsWritesTwoChannels) {
    const auto r = run({"normals", "--boundary", fx("align_prob.fpm"), "--sigma", "1.5", "--out", tmp("n.fpm")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto f = io::read_field(tmp("n.fpm"));
    EXPECT_EQ(f.channels(), 2);
    EXPECT_GT(r.summary()["valid_pixels"].get<int>(), 0);
}

TEST_F(CliTest, InvalidParameterIsDomainError) {
    const auto r = run({"refine", "--prob", fx("ring_prob.fpm"), "--init", fx("ring_init.pgm"), "--mu", "7", "--out",
                        tmp("o.pgm")});
    EXPECT_EQ(r.code, kExitDomain);
    EXPECT_NE(r.err.find("mu must lie in"), std::string::npos);
}

TEST(CliThreads, EnvironmentFallback) {
    ::setenv("CONTOURFORGE_THREADS", "3", 1);
    EXPECT_EQ(default_thread_count(), 3u);
    ::unsetenv("CONTOURFORGE_THREADS");
    EXPECT_GE(default_thread_count(), 1u);
}
