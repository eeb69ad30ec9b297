#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("diffopt_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) const {
    const fs::path log = dir_ / "stdout.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && DIFFOPT_OUTPUT_ROOT='" + (dir_ / "runs").string() +
                            "' '" DIFFOPT_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = read(log);
    return r;
  }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }

  static std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static std::vector<std::string> lines(const fs::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
  }

  fs::path dir_;
};

const char* kSmoke =
    "train.steps = 100\n"
    "train.checkpoint_interval = 50\n"
    "train.eval_interval = 100\n"
    "train.eval_tasks = 10\n"
    "train.aux_per_class = 50\n"
    "train.target_steps = 50\n";

std::vector<double> split_doubles(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(std::stod(cell));
  return out;
}

TEST_F(CliTest, SmokeTrainingWritesOneRecordPerStep) {
  write("smoke.cfg", kSmoke);
  const CliResult r = run("train -c smoke.cfg -o run");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto rows = lines(dir_ / "run/train.csv");
  ASSERT_EQ(rows.size(), 101u);
  EXPECT_EQ(rows.front(), "step,t,mse_loss,grad_norm");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto v = split_doubles(rows[i]);
    ASSERT_EQ(v.size(), 4u);
    EXPECT_EQ(v[0], static_cast<double>(i));
    EXPECT_GE(v[1], 1.0);
    EXPECT_LE(v[1], 200.0);
    EXPECT_TRUE(std::isfinite(v[2]));
  }
  EXPECT_TRUE(fs::exists(dir_ / "run/final.ckpt"));
  EXPECT_TRUE(fs::exists(dir_ / "run/checkpoint-0000050.ckpt"));
  EXPECT_EQ(lines(dir_ / "run/eval.csv").size(), 2u);
}

TEST_F(CliTest, ResumeMatchesUninterruptedRun) {
  write("smoke.cfg", kSmoke);
  ASSERT_EQ(run("train -c smoke.cfg -o full").status, 0);
  ASSERT_EQ(run("train -c smoke.cfg -o half --set train.steps=50").status, 0);
  const CliResult r = run("train --resume half/final.ckpt -o half --set train.steps=100");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(lines(dir_ / "full/train.csv"), lines(dir_ / "half/train.csv"));
  EXPECT_EQ(read(dir_ / "full/final.ckpt"), read(dir_ / "half/final.ckpt"));
}

TEST_F(CliTest, ResumeRejectsModelChanges) {
  write("smoke.cfg", kSmoke);
  ASSERT_EQ(run("train -c smoke.cfg -o run --set train.steps=10").status, 0);
  EXPECT_EQ(run("train --resume run/final.ckpt --set train.lr=0.1").status, 1);
}

TEST_F(CliTest, MalformedConfigFailsWithoutOutput) {
  write("bad.cfg", "train.steps = twenty\n");
  const CliResult bad = run("train -c bad.cfg -o run");
  EXPECT_EQ(bad.status, 1);
  EXPECT_NE(bad.out.find("train.steps"), std::string::npos) << bad.out;
  EXPECT_FALSE(fs::exists(dir_ / "run/train.csv"));

  write("unknown.cfg", "train.stepz = 10\n");
  EXPECT_EQ(run("train -c unknown.cfg").status, 1);
  EXPECT_EQ(run("train --no-such-flag").status, 1);
  EXPECT_EQ(run("eval").status, 1);
}

TEST_F(CliTest, EvalIsDeterministicAndAppendsResults) {
  const std::string args = "eval --adaptor gda --set eval.num_tasks=40 --set baseline.steps=20";
  const CliResult a = run(args);
  const CliResult b = run(args);
  ASSERT_EQ(a.status, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  const auto rows = lines(dir_ / "runs/results.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "adaptor,N,K,num_tasks,mean_acc,ci95");
  EXPECT_EQ(rows[1], rows[2]);
  EXPECT_EQ(rows[1].rfind("gda,5,1,40,", 0), 0u);

  int reports = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "runs")) {
    if (e.is_directory() && fs::exists(e.path() / "report.json")) ++reports;
  }
  EXPECT_EQ(reports, 2);
}

TEST_F(CliTest, EvalOfCheckpointAndTrace) {
  write("smoke.cfg", kSmoke);
  ASSERT_EQ(run("train -c smoke.cfg -o run --set train.steps=20").status, 0);
  const CliResult e = run("eval --checkpoint run/final.ckpt --set eval.num_tasks=10");
  ASSERT_EQ(e.status, 0) << e.out;
  EXPECT_NE(e.out.find("metadiff"), std::string::npos);

  const CliResult t = run("trace --checkpoint run/final.ckpt --tasks 3 -o trace.csv");
  ASSERT_EQ(t.status, 0) << t.out;
  const auto rows = lines(dir_ / "trace.csv");
  ASSERT_EQ(rows.size(), 202u);
  EXPECT_EQ(rows[0], "t,acc,loss");
  EXPECT_EQ(rows[1].rfind("200,", 0), 0u);
  EXPECT_EQ(rows.back().rfind("0,", 0), 0u);
}

TEST_F(CliTest, MetadiffWithoutCheckpointIsAUsageError) {
  EXPECT_EQ(run("eval --adaptor metadiff").status, 1);
}

TEST_F(CliTest, CorruptCheckpointIsReported) {
  write("junk.ckpt", "not a checkpoint");
  const CliResult r = run("eval --checkpoint junk.ckpt");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("error"), std::string::npos);
}

TEST_F(CliTest, InspectScheduleMatchesClosedForm) {
  const CliResult r = run("inspect-schedule --steps 1000 --beta-start 1e-4 --beta-end 0.02 -o sched.csv");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto rows = lines(dir_ / "sched.csv");
  ASSERT_EQ(rows.size(), 1001u);
  EXPECT_EQ(rows[0], "t,beta,alpha_bar,gamma,eta,xi");
  long double alpha_bar = 1.0L;
  for (int t = 1; t <= 1000; ++t) {
    const auto v = split_doubles(rows[static_cast<std::size_t>(t)]);
    ASSERT_EQ(v.size(), 6u);
    EXPECT_EQ(v[0], t);
    const long double beta = 1e-4L + (0.02L - 1e-4L) * (t - 1) / 999.0L;
    alpha_bar *= 1.0L - beta;
    EXPECT_NEAR(v[1], static_cast<double>(beta), 1e-15);
    EXPECT_NEAR(v[2] / static_cast<double>(alpha_bar), 1.0, 1e-12);
    EXPECT_GT(v[3], 1.0);
    EXPECT_GT(v[4], 0.0);
    EXPECT_NEAR(v[5], std::sqrt(static_cast<double>(beta)), 1e-15);
  }
  EXPECT_NEAR(split_doubles(rows[1000])[2], 4.035829765375683314817635e-5, 1e-17);
}

TEST_F(CliTest, InspectScheduleRejectsBadBounds) {
  EXPECT_EQ(run("inspect-schedule --steps 10 --beta-start 0.5 --beta-end 0.1").status, 1);
  EXPECT_EQ(run("inspect-schedule --steps 0").status, 1);
}

TEST_F(CliTest, OutputRootDirectoriesDoNotCollide) {
  for (int i = 0; i < 3; ++i) ASSERT_EQ(run("eval --adaptor gda --set eval.num_tasks=5").status, 0);
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "runs")) dirs += e.is_directory() ? 1 : 0;
  EXPECT_EQ(dirs, 3);
}

}  // namespace
