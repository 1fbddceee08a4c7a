#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "graft/graft.hpp"

using namespace graft;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

fs::path workdir() {
  const auto d = fs::temp_directory_path() / "graft_test_cli";
  fs::create_directories(d);
  return d;
}

Run cli(const std::string& args) {
  const auto out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd =
      std::string("\"") + GRAFT_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WEXITSTATUS(status), graft::detail::read_file(out), graft::detail::read_file(err)};
}

ExperimentConfig tiny(int k) {
  auto cfg = toy_experiment(k, 5);
  cfg.total_epochs = 2;
  cfg.data.train_per_class = 10;
  cfg.data.test_per_class = 5;
  for (auto& w : cfg.workers) w.epochs = 2;
  return cfg;
}

}  // namespace

TEST(Cli, AnalyzeAllZeroSnapshot) {
  auto m = build_model(ArchSpec{}, 1);
  for (auto& l : m.layers) l.weights = Tensor::zeros(l.weights.shape());
  const auto path = workdir() / "zero.snap";
  write_snapshot(m, path);
  const auto r = cli("analyze --snapshot " + path.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  for (const auto& x : j["invalid_ratio"]) EXPECT_EQ(x["fraction"], 1.0);
  EXPECT_EQ(j["network_information"], 0.0);
}

TEST(Cli, GraftWithItselfIsIdentity) {
  const auto m = build_model(ArchSpec{}, 2);
  const auto snap = workdir() / "self.snap", out = workdir() / "grafted.snap", cfg = workdir() / "g.cfg";
  write_snapshot(m, snap);
  graft::detail::write_file(cfg, render_config(toy_experiment(2, 0)));
  const auto r = cli("graft-checkpoints --self " + snap.string() + " --peer " + snap.string() + " --config " +
                     cfg.string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_snapshot(out), m);
  const auto log = nlohmann::json::parse(r.out);
  ASSERT_EQ(log.size(), m.layers.size());
  for (const auto& d : log) EXPECT_EQ(d["alpha"], 0.5);
}

TEST(Cli, TrainTwiceIsByteIdentical) {
  const auto cfg = workdir() / "tiny.cfg";
  graft::detail::write_file(cfg, render_config(tiny(2)));
  const auto a = workdir() / "run_a", b = workdir() / "run_b";
  fs::remove_all(a);
  fs::remove_all(b);
  ASSERT_EQ(cli("train --config " + cfg.string() + " --out-dir " + a.string()).code, 0);
  ASSERT_EQ(cli("train --config " + cfg.string() + " --out-dir " + b.string()).code, 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(graft::detail::read_file(e.path()), graft::detail::read_file(b / e.path().filename()))
        << e.path().filename();
  }
  EXPECT_EQ(files, 6);  // two snapshots, history, layers, alphas, config

  const auto rep = cli("report --history " + a.string() + " --history " + b.string());
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_TRUE(rep.out.starts_with("run,epoch,workers,mean_loss,mean_accuracy"));
  EXPECT_NE(rep.out.find("\nrun_b,1,2,"), std::string::npos);
}

TEST(Cli, DefaultConfigRoundTrips) {
  const auto r = cli("default-config --networks 3 --seed 4");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(parse_config(r.out), toy_experiment(3, 4));
}

TEST(Cli, ErrorsAreOneCategorizedLine) {
  auto r = cli("analyze --snapshot " + (workdir() / "missing.snap").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(r.err.starts_with("error:io_error: ")) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  const auto junk = workdir() / "junk.snap";
  graft::detail::write_file(junk, "not a snapshot at all");
  r = cli("analyze --snapshot " + junk.string());
  EXPECT_TRUE(r.err.starts_with("error:parse_error.bad_magic: ")) << r.err;

  const auto bad_cfg = workdir() / "bad.cfg";
  graft::detail::write_file(bad_cfg, render_config(toy_experiment(2, 0)) + "graft.A = 0.9\n");
  r = cli("train --config " + bad_cfg.string() + " --out-dir " + (workdir() / "never").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(r.err.starts_with("error:config_error: graft.A")) << r.err;

  r = cli("frobnicate");
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(r.err.starts_with("error:usage: ")) << r.err;
}
