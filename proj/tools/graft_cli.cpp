// Command-line front end. Errors are reported as one line,
//   error:<category>: <message>
// with a nonzero exit code.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "graft/graft.hpp"

namespace {

int fail(const std::string& category, const std::string& message) {
  std::cerr << "error:" << category << ": " << message << "\n";
  return 1;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty())
    std::cout << text;
  else
    graft::detail::write_file(out, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Filter grafting experiments on a toy CNN"};
  app.require_subcommand(1);

  std::string config, out_dir, self_snap, peer_snap, out_snap, snapshot, peer, out;
  std::vector<std::string> histories;
  int networks = 2;
  std::uint64_t seed = 0;
  double iou_fraction = 0.2;

  auto* train = app.add_subcommand("train", "Run an experiment and write snapshots, CSVs and the alpha log");
  train->add_option("--config", config, "Experiment config file")->required();
  train->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* graft_cmd = app.add_subcommand("graft-checkpoints", "Graft one snapshot with a peer snapshot");
  graft_cmd->add_option("--self", self_snap, "Snapshot being updated")->required();
  graft_cmd->add_option("--peer", peer_snap, "Snapshot providing the scion")->required();
  graft_cmd->add_option("--config", config, "Config supplying the graft and binning settings")->required();
  graft_cmd->add_option("--out", out_snap, "Output snapshot")->required();

  auto* analyze = app.add_subcommand("analyze", "Print a diagnostics report as JSON");
  analyze->add_option("--snapshot", snapshot, "Snapshot to analyze")->required();
  analyze->add_option("--peer", peer, "Second snapshot for invalid-filter IoU");
  analyze->add_option("--config", config, "Config supplying binning and thresholds");
  analyze->add_option("--iou-fraction", iou_fraction, "Bottom fraction used for IoU");
  analyze->add_option("--out", out, "Write the JSON here instead of stdout");

  auto* report = app.add_subcommand("report", "Aggregate history.csv files into per-epoch curves");
  report->add_option("--history", histories, "Output directory of a train run (repeatable)")->required();
  report->add_option("--out", out, "Write the CSV here instead of stdout");

  auto* defaults = app.add_subcommand("default-config", "Print the toy experiment config");
  defaults->add_option("--networks", networks, "Number of networks");
  defaults->add_option("--seed", seed, "Experiment seed");
  defaults->add_option("--out", out, "Write the config here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what());
  }

  try {
    if (*train) {
      const auto cfg = graft::read_config(config);
      for (const auto& w : cfg.validate()) std::cerr << "warning: " << w << "\n";
      const auto r = graft::commands::train(cfg, out_dir);
      std::cout << "trained " << r.finals.size() << " network(s), " << r.graft_steps << " graft step(s)\n";
    } else if (*graft_cmd) {
      const auto cfg = graft::read_config(config);
      const auto g = graft::commands::graft_checkpoints(self_snap, peer_snap, cfg, out_snap);
      nlohmann::ordered_json log = nlohmann::ordered_json::array();
      for (const auto& d : g.decisions) log.push_back(graft::to_json(d));
      std::cout << log.dump() << "\n";
    } else if (*analyze) {
      graft::BinningConfig bins;
      auto thresholds = graft::default_thresholds();
      if (!config.empty()) {
        const auto cfg = graft::read_config(config);
        bins = cfg.bins;
        thresholds = cfg.thresholds;
      }
      std::optional<std::filesystem::path> p;
      if (!peer.empty()) p = peer;
      emit(graft::commands::analyze(snapshot, p, bins, thresholds, iou_fraction), out);
    } else if (*report) {
      std::vector<std::filesystem::path> dirs(histories.begin(), histories.end());
      emit(graft::commands::report(dirs), out);
    } else if (*defaults) {
      emit(graft::render_config(graft::toy_experiment(networks, seed)), out);
    }
  } catch (const graft::Error& e) {
    return fail(e.category(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
