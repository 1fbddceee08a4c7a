#pragma once

// Bodies of the graft_cli subcommands. Kept in the library so tests can call
// them without spawning a process.

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "graft/coordinator.hpp"
#include "graft/diagnostics.hpp"
#include "graft/error.hpp"
#include "graft/io.hpp"

namespace graft::commands {

namespace fs = std::filesystem;

inline fs::path snapshot_path(const fs::path& dir, int worker) {
  return dir / ("worker_" + std::to_string(worker) + ".snap");
}

// Writes worker_<k>.snap, history.csv, layers.csv, alphas.json and the
// effective config.cfg into out_dir.
inline ExperimentResult train(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  auto result = run_experiment(cfg);
  for (std::size_t k = 0; k < result.finals.size(); ++k)
    write_snapshot(result.finals[k], snapshot_path(out_dir, static_cast<int>(k)));
  graft::detail::write_file(out_dir / "history.csv", history_csv(result.history, cfg.thresholds));
  graft::detail::write_file(out_dir / "layers.csv", layer_entropy_csv(result.history));
  graft::detail::write_file(out_dir / "alphas.json", alpha_log_json(result.history).dump(2) + "\n");
  graft::detail::write_file(out_dir / "config.cfg", render_config(cfg));
  return result;
}

inline ExperimentResult train(const fs::path& config, const fs::path& out_dir) {
  return train(read_config(config), out_dir);
}

// One-shot external graft of two snapshot files. Only the graft and bins
// sections of the config matter here.
inline GraftOutcome graft_checkpoints(const fs::path& self, const fs::path& peer, const ExperimentConfig& cfg,
                                      const fs::path& out) {
  const auto a = read_snapshot(self);
  const auto b = read_snapshot(peer);
  auto g = graft_external_pair(a, b, cfg.graft, cfg.bins);
  write_snapshot(g.model, out);
  return g;
}

inline std::string analyze(const fs::path& snapshot, const std::optional<fs::path>& peer,
                           const BinningConfig& bins = {}, const std::vector<double>& thresholds = default_thresholds(),
                           double iou_fraction = 0.2) {
  const auto model = read_snapshot(snapshot);
  std::optional<ModelSnapshot> other;
  if (peer) other = read_snapshot(*peer);
  const auto r = analyze_model(model, bins, thresholds, other ? &*other : nullptr, iou_fraction);
  return to_json(r).dump(2) + "\n";
}

namespace detail {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline Table read_csv(const fs::path& path) {
  std::istringstream in(graft::detail::read_file(path));
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("csv", path.string() + " is empty");
  t.header = graft::detail::split(line, ',');
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = graft::detail::split(line, ',');
    if (cells.size() != t.header.size())
      throw ParseError("csv", path.string() + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                                  std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace detail

// Averages every numeric history column over workers, per epoch. Several
// runs may be passed; each contributes rows labelled with its directory name.
// Output columns: run, epoch, workers, then mean_<column> for each column of
// history.csv after epoch/worker, plus max_accuracy and min_accuracy.
inline std::string report(const std::vector<fs::path>& history_dirs) {
  if (history_dirs.empty()) throw ConfigError("report needs at least one --history directory");
  std::ostringstream o;
  std::vector<std::string> columns;
  for (const auto& dir : history_dirs) {
    const auto t = detail::read_csv(dir / "history.csv");
    if (t.header.size() < 3 || t.header[0] != "epoch" || t.header[1] != "worker")
      throw ParseError("csv", (dir / "history.csv").string() + " does not start with epoch,worker");
    const std::vector<std::string> cols(t.header.begin() + 2, t.header.end());
    if (columns.empty()) {
      columns = cols;
      o << "run,epoch,workers";
      for (const auto& c : columns) o << ",mean_" << c;
      o << ",max_accuracy,min_accuracy\n";
    } else if (cols != columns) {
      throw ParseError("csv", (dir / "history.csv").string() + " has different columns than the first run");
    }
    std::size_t acc_col = columns.size();
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == "accuracy") acc_col = i;
    if (acc_col == columns.size()) throw ParseError("csv", "history has no accuracy column");

    struct Agg {
      int n = 0;
      std::vector<double> sum;
      double max_acc = -1.0, min_acc = 2.0;
    };
    std::map<int, Agg> by_epoch;
    for (const auto& row : t.rows) {
      auto& a = by_epoch[graft::detail::parse_int("epoch", row[0])];
      a.sum.resize(columns.size(), 0.0);
      ++a.n;
      for (std::size_t i = 0; i < columns.size(); ++i) a.sum[i] += graft::detail::parse_double(columns[i], row[i + 2]);
      const double acc = graft::detail::parse_double("accuracy", row[acc_col + 2]);
      a.max_acc = std::max(a.max_acc, acc);
      a.min_acc = std::min(a.min_acc, acc);
    }
    const auto run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    for (const auto& [epoch, a] : by_epoch) {
      o << run << ',' << epoch << ',' << a.n;
      for (double s : a.sum) o << ',' << format_double(s / a.n);
      o << ',' << format_double(a.max_acc) << ',' << format_double(a.min_acc) << '\n';
    }
  }
  return o.str();
}

}  // namespace graft::commands
