#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "graft/io.hpp"

using namespace graft;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "graft_test_io";
  fs::create_directories(dir);
  return dir / name;
}

ModelSnapshot sample_model(std::uint64_t seed) {
  auto m = build_model(ArchSpec{}, seed);
  Rng r(seed);
  for (auto& l : m.layers)
    for (double& b : l.bias.values()) b = r.normal();
  m.epoch = 17;
  m.worker_id = 3;
  m.tag = "w3 \"quoted\"";
  return m;
}

}  // namespace

TEST(Snapshot, RoundTripIsBitExact) {
  auto m = sample_model(1);
  m.layers[0].weights[0] = -0.0;
  m.layers[0].weights[1] = std::numeric_limits<double>::denorm_min();
  m.layers[0].weights[2] = 1.0 / 3.0;
  const auto path = scratch("rt.snap");
  write_snapshot(m, path);
  const auto back = read_snapshot(path);
  EXPECT_EQ(back, m);
  EXPECT_TRUE(std::signbit(back.layers[0].weights[0]));
  EXPECT_EQ(encode_snapshot(back), encode_snapshot(m));
}

TEST(Snapshot, FormatStartsWithMagicAndLittleEndianPayload) {
  auto m = sample_model(2);
  m.layers.back().bias[2] = 1.0;  // last payload value
  const auto bytes = encode_snapshot(m);
  EXPECT_EQ(bytes.substr(0, 10), "GRAFTSNAP1");
  const std::string tail = bytes.substr(bytes.size() - 8);
  // 1.0 == 0x3FF0000000000000, least significant byte first.
  EXPECT_EQ(tail, std::string("\x00\x00\x00\x00\x00\x00\xf0\x3f", 8));
}

TEST(Snapshot, BadMagic) {
  auto bytes = encode_snapshot(sample_model(3));
  bytes[0] = 'X';
  EXPECT_THROW(decode_snapshot(bytes), BadMagicError);
  EXPECT_THROW(decode_snapshot(""), BadMagicError);
}

TEST(Snapshot, TruncationAtEveryRegion) {
  const auto bytes = encode_snapshot(sample_model(4));
  for (std::size_t cut : {std::size_t{12}, std::size_t{40}, bytes.size() - 1, bytes.size() - 8}) {
    try {
      decode_snapshot(std::string_view(bytes).substr(0, cut));
      FAIL() << "cut " << cut;
    } catch (const TruncatedError& e) {
      EXPECT_EQ(e.category(), "parse_error.truncated");
    }
  }
}

TEST(Snapshot, ManifestMismatch) {
  auto bytes = encode_snapshot(sample_model(5));
  EXPECT_THROW(decode_snapshot(bytes + "12345678"), ManifestError);
  // Corrupt a shape inside the JSON header without changing its length.
  const auto at = bytes.find("[16,1,3,3]");
  ASSERT_NE(at, std::string::npos);
  bytes.replace(at, 10, "[16,1,5,5]");
  EXPECT_THROW(decode_snapshot(bytes), ParseError);
}

TEST(Snapshot, MissingFileIsIoError) {
  EXPECT_THROW(read_snapshot(scratch("does_not_exist.snap")), IoError);
}

TEST(Config, RoundTripDefault) {
  const auto cfg = toy_experiment(3, 7);
  EXPECT_EQ(parse_config(render_config(cfg)), cfg);
}

TEST(Config, RoundTripEveryField) {
  auto cfg = toy_experiment(2, 1);
  cfg.total_epochs = 12;
  cfg.grafting_enabled = false;
  cfg.graft_period = 3;
  cfg.execution = ExecutionMode::sequential;
  cfg.thresholds = {0.5, 0.1 + 0.2};
  cfg.arch.in_channels = 3;
  cfg.arch.height = 10;
  cfg.arch.width = 7;
  cfg.arch.convs = {{5, 1}, {6, 3}, {7, 5}};
  cfg.arch.class_count = 4;
  cfg.data.noise = 1.0 / 3.0;
  cfg.data.angle_jitter = 0.0;
  cfg.data.train_seed = 18446744073709551615ULL;
  cfg.graft.scion_source = ScionSource::internal;
  cfg.graft.criterion = Criterion::l1;
  cfg.graft.A = 0.3;
  cfg.graft.c = 12.5;
  cfg.graft.noise_base_a = 0.77;
  cfg.graft.invalid_selector = InvalidSelector::absolute_threshold(1e-3);
  cfg.graft.weighting = Weighting::fixed;
  cfg.graft.fixed_alpha = 0.6;
  cfg.graft.granularity = Granularity::filter_level;
  cfg.graft.internal_mode = InternalMode::replace;
  cfg.graft.layer_measure = LayerMeasure::filter_sum;
  cfg.bins.bin_count = 7;
  cfg.bins.range_mode = RangeMode::fixed;
  cfg.bins.lo = -0.25;
  cfg.bins.hi = 2.5;
  cfg.workers[1].lr_schedule = LrSchedule::step;
  cfg.workers[1].schedule_params = {0.1, 10, 20};
  cfg.workers[1].momentum = 0.0;
  EXPECT_EQ(parse_config(render_config(cfg)), cfg);

  // Fields that are only rendered when they differ from what the mode implies.
  cfg.graft.weighting = Weighting::adaptive;
  cfg.bins.range_mode = RangeMode::per_tensor_minmax;
  EXPECT_EQ(parse_config(render_config(cfg)), cfg);
}

TEST(Config, UnknownKeyIsNamed) {
  auto text = render_config(toy_experiment(2, 0)) + "graft.bogus = 1\n";
  try {
    parse_config(text);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("graft.bogus"), std::string::npos);
  }
  EXPECT_THROW(parse_config(render_config(toy_experiment(2, 0)) + "worker.5.momentum = 0.1\n"), ConfigError);
}

TEST(Config, MissingPiecesRejected) {
  EXPECT_THROW(parse_config("total_epochs = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("network_count = 2\nworker.0.initial_lr = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("network_count = 1\nworker.0.batch_size = many\n"), ConfigError);
}

TEST(Config, ValidationNamesKey) {
  auto cfg = toy_experiment(2, 0);
  cfg.graft.A = 0.5;
  try {
    parse_config(render_config(cfg)).validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("graft.A"), std::string::npos);
  }
  cfg = toy_experiment(2, 0);
  cfg.workers[1].batch_size = 0;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("worker.1.batch_size"), std::string::npos);
  }
}

TEST(Config, CommentsAndWhitespace) {
  const auto base = toy_experiment(1, 0);
  auto text = "  # leading comment\n\n" + render_config(base);
  text += "   data.noise   =   0.25   # trailing comment\n";
  auto expected = base;
  expected.data.noise = 0.25;
  EXPECT_EQ(parse_config(text), expected);
}

TEST(Reports, DiagnosticsJsonShape) {
  const auto a = sample_model(6), b = sample_model(7);
  const auto j = to_json(analyze_model(a, {}, default_thresholds(), &b));
  EXPECT_EQ(j["schema"], "graft.diagnostics/1");
  EXPECT_EQ(j["epoch"], 17);
  EXPECT_EQ(j["layers"].size(), 3u);
  EXPECT_TRUE(j["layers"][2]["filter_entropy_sum"].is_null());
  EXPECT_EQ(j["invalid_ratio"].size(), 4u);
  EXPECT_EQ(j["iou"].size(), 2u);
}

TEST(Reports, HistoryCsvColumns) {
  EpochRecord r;
  r.epoch = 2;
  r.worker_id = 1;
  r.train_loss = 0.5;
  r.test_accuracy = 0.75;
  r.network_information = 3.25;
  r.invalid_ratio = {{1e-3, 0.125}};
  const auto csv = history_csv({r}, {1e-3});
  EXPECT_EQ(csv,
            "epoch,worker,loss,accuracy,network_information,train_accuracy,grafted,invalid_ratio@0.001\n"
            "2,1,0.5,0.75,3.25,0,0,0.125\n");
}

TEST(Format, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -0.0}) {
    const auto s = format_double(v);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(std::stod(s)), std::bit_cast<std::uint64_t>(v)) << s;
  }
}
