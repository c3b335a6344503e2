// Runs the command-line tool as a subprocess.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include "ensprune/io.hpp"
#include "support.hpp"

using namespace ensprune;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("ensprune_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(run("gen --models 8 --samples 400 --classes 5 --acc-low 0.3 --acc-high 0.7 --seed 3 --out " +
                  data().string()),
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static fs::path data() { return dir_ / "data"; }
  static fs::path file(const std::string& name) { return dir_ / name; }

  // Exit status of the tool; stdout and stderr go to files in the temp dir.
  static int run(const std::string& args, const std::string& stdout_name = "stdout.txt") {
    const std::string cmd = std::string(ENSPRUNE_CLI_PATH) + " " + args + " > " +
                            (dir_ / stdout_name).string() + " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static inline fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GeneratedDataChecksOut) {
  EXPECT_EQ(run("check " + data().string()), 0);
  const EnsembleData d = read_predictions(data());
  EXPECT_EQ(d.predictions.num_models(), 8u);
  EXPECT_EQ(d.predictions.num_samples(), 400u);
}

TEST_F(CliTest, SameSeedSameBytes) {
  const std::vector<std::string> commands{
      "run " + data().string(),
      "run " + data().string() + " --format csv",
      "run " + data().string() + " --vote weighted --simplex",
      "cv " + data().string() + " --alphas 0.2,0.4 --lambdas 0.1,0.5",
      "prune " + data().string() + " --alpha 0.3 --lambda 0.5",
      "prune " + data().string() + " --alpha 0.3 --lambda 0.5 --threshold 0.01",
      "fit " + data().string() + " --alpha 0.3 --lambda 0.5",
  };
  for (const std::string& c : commands) {
    ASSERT_EQ(run(c + " --seed 5 --out " + file("a.out").string()), 0) << c;
    ASSERT_EQ(run(c + " --seed 5 --out " + file("b.out").string()), 0) << c;
    const std::string a = read_text(file("a.out"));
    EXPECT_FALSE(a.empty()) << c;
    EXPECT_EQ(a, read_text(file("b.out"))) << c;
  }
  ASSERT_EQ(run("gen --models 3 --samples 50 --seed 9 --out " + file("g1").string()), 0);
  ASSERT_EQ(run("gen --models 3 --samples 50 --seed 9 --out " + file("g2").string()), 0);
  for (const char* f : {"manifest.txt", "predictions.csv", "labels.csv"}) {
    EXPECT_EQ(read_text(file("g1") / f), read_text(file("g2") / f)) << f;
  }
}

TEST_F(CliTest, ReportsParseBack) {
  ASSERT_EQ(run("run " + data().string() + " --out " + file("r.json").string()), 0);
  const PruneReport r = read_report(file("r.json"));
  EXPECT_EQ(r.num_models_full, 8u);
  EXPECT_LE(r.num_models_pruned, 8u);
  ASSERT_EQ(run("run " + data().string() + " --format csv --out " + file("r.csv").string()), 0);
  EXPECT_EQ(read_summary(file("r.csv")), summarize(r));
  // Without --out the report goes to stdout.
  ASSERT_EQ(run("run " + data().string(), "r_stdout.json"), 0);
  EXPECT_EQ(read_text(file("r_stdout.json")), read_text(file("r.json")));
}

TEST_F(CliTest, SolveReadsProgramFiles) {
  Rng rng(2);
  const PredictionTensor t = testing_support::random_tensor(rng, 4, 40, 3);
  const LabelVector y = testing_support::random_labels(rng, 40, 3);
  const PruningProgram pp = build_pruning_socp(build_surrogate(t, y, uniform_weights(4)), 0.5, 0.01);
  {
    std::ofstream out(file("p.txt"));
    write_program(out, pp.program);
  }
  ASSERT_EQ(run("solve " + file("p.txt").string() + " --out " + file("s1.json").string()), 0);
  ASSERT_EQ(run("solve " + file("p.txt").string() + " --out " + file("s2.json").string()), 0);
  EXPECT_EQ(read_text(file("s1.json")), read_text(file("s2.json")));
  EXPECT_NE(read_text(file("s1.json")).find("\"optimal\""), std::string::npos);
  EXPECT_EQ(run("solve " + file("p.txt").string() + " --max-iters 1"), 3);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run("check " + file("does_not_exist").string()), 4);
  EXPECT_EQ(run("run " + data().string() + " --vote plurality"), 2);
  EXPECT_EQ(run("run " + data().string() + " --threshold 0.1 --auto-threshold"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("fit " + data().string() + " --max-iters 1"), 3);
  EXPECT_EQ(run("run " + data().string() + " --alphas 1.5"), 2);
  EXPECT_EQ(run("run " + data().string() + " --out " + file("missing_dir/r.json").string()), 4);

  const fs::path bad = file("bad");
  fs::create_directories(bad);
  fs::copy_file(data() / "manifest.txt", bad / "manifest.txt");
  fs::copy_file(data() / "labels.csv", bad / "labels.csv");
  std::string preds = read_text(data() / "predictions.csv");
  const std::size_t second_line = preds.find('\n') + 1;
  const std::size_t end = preds.find('\n', second_line);
  preds.replace(second_line, end - second_line, "0,0,0.7,0.7,0,0,0");
  write_text_atomic(bad / "predictions.csv", preds);
  EXPECT_EQ(run("check " + bad.string()), 2);

  fs::copy_file(data() / "predictions.csv", bad / "predictions.csv", fs::copy_options::overwrite_existing);
  write_text_atomic(file("garbage.txt"), "not a program\n");
  EXPECT_EQ(run("solve " + file("garbage.txt").string()), 2);
}
