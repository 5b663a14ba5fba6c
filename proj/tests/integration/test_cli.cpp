#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "fvx/artifacts.hpp"
#include "fvx/config.hpp"
#include "fvx/metrics.hpp"
#include "fvx/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fvx;
using namespace fvx::orchestry;

namespace {

const fs::path kConfig = FVX_TEST_DATA_DIR "/toy.toml";

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class CliTest : public ::testing::Test {
 protected:
  // One scratch directory per test so ctest can run them concurrently.
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("fvx_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  const fs::path& root() const { return root_; }

  CliResult fvx(const std::string& args) {
    const auto out = root() / "stdout.txt";
    const auto err = root() / "stderr.txt";
    const std::string cmd = std::string("\"") + FVX_BINARY + "\" --config \"" + kConfig.string() + "\" " + args +
                            " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  std::string dir(const std::string& name) { return "\"" + (root() / name).string() + "\""; }

  // Models, base gathers and images for ten toy models, built once.
  void build_toy_run() {
    ASSERT_EQ(fvx("genmodels --count 10 --seed 7 --out " + dir("models")).exit_code, 0);
    ASSERT_EQ(fvx("simulate --models " + dir("models") + " --out " + dir("gathers")).exit_code, 0);
    ASSERT_EQ(fvx("disperse " + dir("gathers") + " --out " + dir("images")).exit_code, 0);
  }

 private:
  fs::path root_;
};

std::map<std::string, std::string> directory_bytes(const fs::path& d) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(d)) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_F(CliTest, GenmodelsIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(fvx("genmodels --count 10 --seed 7 --out " + dir("g1")).exit_code, 0);
  ASSERT_EQ(fvx("--workers 3 genmodels --count 10 --seed 7 --out " + dir("g2")).exit_code, 0);
  const auto a = directory_bytes(root() / "g1");
  const auto b = directory_bytes(root() / "g2");
  EXPECT_EQ(a.size(), 11u);
  EXPECT_TRUE(a == b);
}

TEST_F(CliTest, EvaluateReportsEveryModelAndTheMeans) {
  build_toy_run();
  ASSERT_EQ(fvx("train --inputs " + dir("images") + " --models " + dir("models") + " --out " + dir("net")).exit_code,
            0);
  ASSERT_EQ(fvx("predict --network " + dir("net/network.fvb") + " " + dir("images") + " --out " + dir("preds"))
                .exit_code,
            0);
  const auto r = fvx("evaluate --predictions " + dir("preds") + " --models " + dir("models") + " --out " +
                     dir("eval"));
  ASSERT_EQ(r.exit_code, 0) << r.err;

  const auto report = read_csv(root() / "eval/report.csv");
  ASSERT_EQ(report.size(), 11u);
  EXPECT_EQ(report[0], (std::vector<std::string>{"model_id", "variant", "interface_class", "mape_percent", "mssim"}));
  double mape_sum = 0.0, mssim_sum = 0.0;
  for (std::size_t i = 1; i < report.size(); ++i) {
    mape_sum += std::stod(report[i][3]);
    mssim_sum += std::stod(report[i][4]);
  }
  const auto summary = read_csv(root() / "eval/summary.csv");
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[1][0], "base");
  EXPECT_NEAR(std::stod(summary[1][1]), mape_sum / 10.0, 1e-9);
  EXPECT_NEAR(std::stod(summary[1][2]), mssim_sum / 10.0, 1e-9);
  EXPECT_EQ(summary[1][3], "10");
  EXPECT_EQ(summary[1][4], "0");

  // One row recomputed in process from the stored prediction and model.
  const auto pred = prediction_from_fvbin(fvbin::read(root() / "preds/model_000003.base.o5.fvb"));
  const auto model = model_from_fvbin(fvbin::read(root() / "models/model_000003.fvb"));
  const auto truth = target_vs(model);
  bool found = false;
  for (std::size_t i = 1; i < report.size(); ++i) {
    if (report[i][0] != "model_000003") continue;
    found = true;
    EXPECT_NEAR(std::stod(report[i][3]), metrics::mape(pred.vs_mps, truth), 1e-9);
  }
  EXPECT_TRUE(found);
}

TEST_F(CliTest, StackedDisperseMatchesInProcessStacking) {
  build_toy_run();
  ASSERT_EQ(fvx("simulate --models " + dir("models/model_000002.fvb") + " --variant stack5+6 --out " +
                dir("pair"))
                .exit_code,
            0);
  const auto r = fvx("disperse " + dir("pair") + " --stack 5,6 --out " + dir("stacked"));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto cli = image_from_fvbin(fvbin::read(root() / "stacked/model_000002.stack5+6.fvb"));

  const auto cfg = load_config(kConfig);
  std::vector<beamform::DispersionImage> raw;
  for (const char* name : {"model_000002.stack5+6.o5.fvb", "model_000002.stack5+6.o6.fvb"})
    raw.push_back(beamform::fdbf(gather_from_fvbin(fvbin::read(root() / "pair" / name)), cfg.grid, cfg.steering));
  const auto expected = beamform::stack_offsets(raw);
  ASSERT_EQ(cli.power.rows(), expected.power.rows());
  ASSERT_EQ(cli.power.cols(), expected.power.cols());
  for (std::size_t i = 0; i < cli.power.size(); ++i)
    ASSERT_NEAR(cli.power.data()[i], expected.power.data()[i], 1e-6) << "pixel " << i;
}

TEST_F(CliTest, TamperedInputIsRefused) {
  ASSERT_EQ(fvx("genmodels --count 2 --out " + dir("tamper")).exit_code, 0);
  std::ofstream(root() / "tamper/model_000001.fvb", std::ios::app) << '\0';
  const auto r = fvx("simulate --models " + dir("tamper") + " --out " + dir("tamper_out"));
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("hash mismatch"), std::string::npos) << r.err;
}

TEST_F(CliTest, ErrorsMapToExitCodes) {
  EXPECT_EQ(fvx("genmodels --out " + dir("x")).exit_code, 2);

  std::ofstream(root() / "bad.toml") << "[elastodyn]\ndt = 1\n";
  const std::string cmd = std::string("\"") + FVX_BINARY + "\" --config " + dir("bad.toml") +
                          " genmodels --count 1 --out " + dir("y") + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);

  std::string row;
  for (int i = 0; i < 23; ++i) row += i ? ",0.5" : "0.5";
  std::ofstream(root() / "short.csv") << row << "\n" << row << "\n";
  const auto r = fvx("import-csv " + dir("short.csv") + " --receivers 24 --out " + dir("imp.fvb"));
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.err.find("\"exit_code\":3"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("24 receivers"), std::string::npos) << r.err;
}
