#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "graft/coordinator.hpp"
#include "graft/diagnostics.hpp"
#include "graft/error.hpp"
#include "graft/grafting.hpp"
#include "graft/model.hpp"

namespace graft {

// ---------------------------------------------------------------------------
// Snapshot files
//
//   bytes 0-9   "GRAFTSNAP1"
//   bytes 10-17 header length H, unsigned 64-bit little-endian
//   next H      header, UTF-8 JSON: arch, epoch, worker_id, tag, layers[]
//               (name, kind, weight_shape, bias_shape)
//   payload     per layer in header order: weights then bias, each as
//               IEEE-754 binary64 little-endian, row-major
// ---------------------------------------------------------------------------

inline constexpr std::string_view snapshot_magic = "GRAFTSNAP1";

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

inline std::string encode_snapshot(const ModelSnapshot& model) {
  validate_model(model);
  nlohmann::json header;
  header["arch"] = describe_architecture(model);
  header["epoch"] = model.epoch;
  header["worker_id"] = model.worker_id;
  header["tag"] = model.tag;
  header["layers"] = nlohmann::json::array();
  for (const auto& l : model.layers)
    header["layers"].push_back({{"name", l.name},
                                {"kind", to_string(l.kind)},
                                {"weight_shape", l.weights.shape()},
                                {"bias_shape", l.bias.shape()}});
  const std::string text = header.dump();
  std::string out(snapshot_magic);
  detail::put_u64(out, text.size());
  out += text;
  for (const auto& l : model.layers)
    for (const Tensor* t : {&l.weights, &l.bias})
      for (double v : t->values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline ModelSnapshot decode_snapshot(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < snapshot_magic.size() || bytes.substr(0, snapshot_magic.size()) != snapshot_magic)
    throw BadMagicError("not a snapshot file (magic mismatch)");
  std::size_t pos = snapshot_magic.size();
  if (bytes.size() < pos + 8) throw TruncatedError("snapshot ends inside the header length");
  const std::uint64_t header_len = detail::get_u64(p + pos);
  pos += 8;
  if (header_len > bytes.size() - pos) throw TruncatedError("snapshot ends inside the header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("snapshot header is not valid JSON: ") + e.what());
  }
  pos += header_len;

  ModelSnapshot model;
  std::vector<std::pair<Shape, Shape>> shapes;
  std::uint64_t expected_values = 0;
  // Guards the element count against overflow from a corrupt manifest.
  const auto count = [](const Shape& s) {
    std::uint64_t n = 1;
    if (s.empty()) throw ShapeError("empty shape");
    for (auto d : s) {
      if (d == 0) throw ShapeError("zero dimension in " + shape_string(s));
      if (n > (std::uint64_t{1} << 40) / d) throw ShapeError("shape " + shape_string(s) + " is too large");
      n *= d;
    }
    return n;
  };
  try {
    model.epoch = header.at("epoch").get<int>();
    model.worker_id = header.at("worker_id").get<int>();
    model.tag = header.at("tag").get<std::string>();
    for (const auto& entry : header.at("layers")) {
      LayerWeights l;
      l.name = entry.at("name").get<std::string>();
      l.kind = parse_layer_kind(entry.at("kind").get<std::string>());
      auto ws = entry.at("weight_shape").get<Shape>();
      auto bs = entry.at("bias_shape").get<Shape>();
      expected_values += count(ws) + count(bs);
      shapes.emplace_back(std::move(ws), std::move(bs));
      model.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("snapshot manifest is malformed: ") + e.what());
  } catch (const ShapeError& e) {
    throw ManifestError(std::string("snapshot manifest has an invalid shape: ") + e.what());
  } catch (const KindError& e) {
    throw ManifestError(e.what());
  }
  const std::uint64_t payload = bytes.size() - pos;
  if (payload < expected_values * 8)
    throw TruncatedError("snapshot payload has " + std::to_string(payload) + " bytes, manifest needs " +
                         std::to_string(expected_values * 8));
  if (payload > expected_values * 8) throw ManifestError("snapshot has trailing bytes after the payload");
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    model.layers[i].weights = Tensor(shapes[i].first);
    model.layers[i].bias = Tensor(shapes[i].second);
  }
  for (auto& l : model.layers)
    for (Tensor* t : {&l.weights, &l.bias})
      for (double& v : t->values()) {
        v = std::bit_cast<double>(detail::get_u64(p + pos));
        pos += 8;
      }
  try {
    validate_model(model);
  } catch (const Error& e) {
    throw ManifestError(std::string("snapshot layers are inconsistent: ") + e.what());
  }
  if (header.value("arch", std::string{}) != describe_architecture(model))
    throw ManifestError("snapshot arch description does not match its layer manifest");
  return model;
}

inline void write_snapshot(const ModelSnapshot& model, const std::filesystem::path& path) {
  detail::write_file(path, encode_snapshot(model));
}

inline ModelSnapshot read_snapshot(const std::filesystem::path& path) {
  return decode_snapshot(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Config files: one `key = value` per line, '#' starts a comment.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError("key '" + key + "': '" + v + "' is not a non-negative integer");
  return out;
}

inline int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& part : split(v, ',')) out.push_back(parse_double(key, part));
  return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& key, const std::string& v, const std::array<std::pair<const char*, Enum>, N>& table) {
  for (const auto& [name, value] : table)
    if (v == name) return value;
  std::string allowed;
  for (const auto& [name, value] : table) allowed += (allowed.empty() ? "" : "|") + std::string(name);
  throw ConfigError("key '" + key + "': '" + v + "' is not one of " + allowed);
}

}  // namespace detail

inline std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream o;
  const auto& g = cfg.graft;
  o << "# filter grafting experiment\n";
  o << "network_count = " << cfg.network_count << "\n";
  o << "total_epochs = " << cfg.total_epochs << "\n";
  o << "grafting = " << (cfg.grafting_enabled ? "true" : "false") << "\n";
  o << "graft_period = " << cfg.graft_period << "\n";
  o << "topology = ring\n";
  o << "execution = " << to_string(cfg.execution) << "\n";
  o << "thresholds = " << detail::join_doubles(cfg.thresholds) << "\n\n";

  o << "arch.input = " << cfg.arch.in_channels << 'x' << cfg.arch.height << 'x' << cfg.arch.width << "\n";
  o << "arch.convs = ";
  for (std::size_t i = 0; i < cfg.arch.convs.size(); ++i)
    o << (i ? "," : "") << cfg.arch.convs[i].out_channels << ':' << cfg.arch.convs[i].kernel;
  o << "\narch.classes = " << cfg.arch.class_count << "\n\n";

  o << "data.train_per_class = " << cfg.data.train_per_class << "\n";
  o << "data.test_per_class = " << cfg.data.test_per_class << "\n";
  o << "data.train_seed = " << cfg.data.train_seed << "\n";
  o << "data.test_seed = " << cfg.data.test_seed << "\n";
  o << "data.noise = " << format_double(cfg.data.noise) << "\n";
  o << "data.angle_jitter = " << format_double(cfg.data.angle_jitter) << "\n\n";

  o << "graft.scion_source = " << to_string(g.scion_source) << "\n";
  o << "graft.criterion = " << to_string(g.criterion) << "\n";
  o << "graft.A = " << format_double(g.A) << "\n";
  o << "graft.c = " << format_double(g.c) << "\n";
  o << "graft.noise_base = " << format_double(g.noise_base_a) << "\n";
  o << "graft.selector = "
    << (g.invalid_selector.mode == InvalidSelector::Mode::bottom_fraction ? "fraction:" : "threshold:")
    << format_double(g.invalid_selector.value) << "\n";
  o << "graft.weighting = "
    << (g.weighting == Weighting::adaptive ? std::string("adaptive") : "fixed:" + format_double(g.fixed_alpha))
    << "\n";
  if (g.weighting == Weighting::adaptive && g.fixed_alpha != 0.5)
    o << "graft.fixed_alpha = " << format_double(g.fixed_alpha) << "\n";
  o << "graft.granularity = " << to_string(g.granularity) << "\n";
  o << "graft.internal_mode = " << to_string(g.internal_mode) << "\n";
  o << "graft.layer_measure = " << to_string(g.layer_measure) << "\n\n";

  o << "bins.count = " << cfg.bins.bin_count << "\n";
  o << "bins.range = "
    << (cfg.bins.range_mode == RangeMode::per_tensor_minmax
            ? std::string("minmax")
            : "fixed:" + format_double(cfg.bins.lo) + ":" + format_double(cfg.bins.hi))
    << "\n";
  if (cfg.bins.range_mode == RangeMode::per_tensor_minmax && (cfg.bins.lo != -1.0 || cfg.bins.hi != 1.0))
    o << "bins.fixed_range = " << format_double(cfg.bins.lo) << ":" << format_double(cfg.bins.hi) << "\n";

  for (std::size_t k = 0; k < cfg.workers.size(); ++k) {
    const auto& hp = cfg.workers[k];
    const std::string p = "worker." + std::to_string(k) + ".";
    o << "\n";
    o << p << "initial_lr = " << format_double(hp.initial_lr) << "\n";
    o << p << "lr_schedule = " << to_string(hp.lr_schedule) << "\n";
    o << p << "schedule_params = " << detail::join_doubles(hp.schedule_params) << "\n";
    o << p << "batch_size = " << hp.batch_size << "\n";
    o << p << "data_seed = " << hp.data_seed << "\n";
    o << p << "init_seed = " << hp.init_seed << "\n";
    o << p << "epochs = " << hp.epochs << "\n";
    o << p << "momentum = " << format_double(hp.momentum) << "\n";
    o << p << "weight_decay = " << format_double(hp.weight_decay) << "\n";
  }
  return o.str();
}

inline ExperimentConfig parse_config(std::string_view text) {
  using namespace detail;
  ExperimentConfig cfg;
  cfg.workers.clear();
  std::map<std::size_t, TrainHyperparams> workers;
  bool have_count = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string v = trim(t.substr(eq + 1));
    auto& g = cfg.graft;

    if (key == "network_count") {
      cfg.network_count = parse_int(key, v);
      have_count = true;
    } else if (key == "total_epochs") {
      cfg.total_epochs = parse_int(key, v);
    } else if (key == "grafting") {
      cfg.grafting_enabled = parse_bool(key, v);
    } else if (key == "graft_period") {
      cfg.graft_period = parse_int(key, v);
    } else if (key == "topology") {
      if (v != "ring") throw ConfigError("key 'topology': only 'ring' is supported");
    } else if (key == "execution") {
      cfg.execution = parse_enum<ExecutionMode, 2>(
          key, v, {{{"sequential", ExecutionMode::sequential}, {"concurrent", ExecutionMode::concurrent}}});
    } else if (key == "thresholds") {
      cfg.thresholds = parse_double_list(key, v);
    } else if (key == "arch.input") {
      const auto dims = split(v, 'x');
      if (dims.size() != 3) throw ConfigError("key 'arch.input': expected CxHxW");
      cfg.arch.in_channels = parse_u64(key, dims[0]);
      cfg.arch.height = parse_u64(key, dims[1]);
      cfg.arch.width = parse_u64(key, dims[2]);
    } else if (key == "arch.convs") {
      cfg.arch.convs.clear();
      for (const auto& part : split(v, ',')) {
        const auto f = split(part, ':');
        if (f.size() != 2) throw ConfigError("key 'arch.convs': expected out:kernel entries");
        cfg.arch.convs.push_back({parse_u64(key, f[0]), parse_u64(key, f[1])});
      }
    } else if (key == "arch.classes") {
      cfg.arch.class_count = parse_u64(key, v);
    } else if (key == "data.train_per_class") {
      cfg.data.train_per_class = parse_u64(key, v);
    } else if (key == "data.test_per_class") {
      cfg.data.test_per_class = parse_u64(key, v);
    } else if (key == "data.train_seed") {
      cfg.data.train_seed = parse_u64(key, v);
    } else if (key == "data.test_seed") {
      cfg.data.test_seed = parse_u64(key, v);
    } else if (key == "data.noise") {
      cfg.data.noise = parse_double(key, v);
    } else if (key == "data.angle_jitter") {
      cfg.data.angle_jitter = parse_double(key, v);
    } else if (key == "graft.scion_source") {
      g.scion_source = parse_enum<ScionSource, 3>(
          key, v,
          {{{"noise", ScionSource::noise}, {"internal", ScionSource::internal}, {"external", ScionSource::external}}});
    } else if (key == "graft.criterion") {
      g.criterion = parse_enum<Criterion, 2>(key, v, {{{"l1", Criterion::l1}, {"entropy", Criterion::entropy}}});
    } else if (key == "graft.A") {
      g.A = parse_double(key, v);
    } else if (key == "graft.c") {
      g.c = parse_double(key, v);
    } else if (key == "graft.noise_base") {
      g.noise_base_a = parse_double(key, v);
    } else if (key == "graft.selector") {
      const auto f = split(v, ':');
      if (f.size() != 2) throw ConfigError("key 'graft.selector': expected fraction:<f> or threshold:<gamma>");
      if (f[0] == "fraction")
        g.invalid_selector = InvalidSelector::bottom_fraction(parse_double(key, f[1]));
      else if (f[0] == "threshold")
        g.invalid_selector = InvalidSelector::absolute_threshold(parse_double(key, f[1]));
      else
        throw ConfigError("key 'graft.selector': unknown mode '" + f[0] + "'");
    } else if (key == "graft.weighting") {
      if (v == "adaptive") {
        g.weighting = Weighting::adaptive;
      } else if (v.starts_with("fixed:")) {
        g.weighting = Weighting::fixed;
        g.fixed_alpha = parse_double(key, v.substr(6));
      } else {
        throw ConfigError("key 'graft.weighting': expected adaptive or fixed:<alpha>");
      }
    } else if (key == "graft.fixed_alpha") {
      g.fixed_alpha = parse_double(key, v);
    } else if (key == "graft.granularity") {
      g.granularity = parse_enum<Granularity, 2>(
          key, v, {{{"layer_level", Granularity::layer_level}, {"filter_level", Granularity::filter_level}}});
    } else if (key == "graft.internal_mode") {
      g.internal_mode =
          parse_enum<InternalMode, 2>(key, v, {{{"add", InternalMode::add}, {"replace", InternalMode::replace}}});
    } else if (key == "graft.layer_measure") {
      g.layer_measure = parse_enum<LayerMeasure, 2>(
          key, v, {{{"whole_layer", LayerMeasure::whole_layer}, {"filter_sum", LayerMeasure::filter_sum}}});
    } else if (key == "bins.count") {
      cfg.bins.bin_count = parse_u64(key, v);
    } else if (key == "bins.range") {
      if (v == "minmax") {
        cfg.bins.range_mode = RangeMode::per_tensor_minmax;
      } else if (v.starts_with("fixed:")) {
        const auto f = split(v.substr(6), ':');
        if (f.size() != 2) throw ConfigError("key 'bins.range': expected fixed:<lo>:<hi>");
        cfg.bins.range_mode = RangeMode::fixed;
        cfg.bins.lo = parse_double(key, f[0]);
        cfg.bins.hi = parse_double(key, f[1]);
      } else {
        throw ConfigError("key 'bins.range': expected minmax or fixed:<lo>:<hi>");
      }
    } else if (key == "bins.fixed_range") {
      const auto f = split(v, ':');
      if (f.size() != 2) throw ConfigError("key 'bins.fixed_range': expected <lo>:<hi>");
      cfg.bins.lo = parse_double(key, f[0]);
      cfg.bins.hi = parse_double(key, f[1]);
    } else if (key.starts_with("worker.")) {
      const auto f = split(key, '.');
      if (f.size() != 3) throw ConfigError("unknown key '" + key + "'");
      const std::size_t k = parse_u64(key, f[1]);
      auto& hp = workers[k];
      const std::string& field = f[2];
      if (field == "initial_lr") hp.initial_lr = parse_double(key, v);
      else if (field == "lr_schedule")
        hp.lr_schedule =
            parse_enum<LrSchedule, 2>(key, v, {{{"step", LrSchedule::step}, {"cosine", LrSchedule::cosine}}});
      else if (field == "schedule_params") hp.schedule_params = parse_double_list(key, v);
      else if (field == "batch_size") hp.batch_size = parse_u64(key, v);
      else if (field == "data_seed") hp.data_seed = parse_u64(key, v);
      else if (field == "init_seed") hp.init_seed = parse_u64(key, v);
      else if (field == "epochs") hp.epochs = parse_int(key, v);
      else if (field == "momentum") hp.momentum = parse_double(key, v);
      else if (field == "weight_decay") hp.weight_decay = parse_double(key, v);
      else throw ConfigError("unknown key '" + key + "'");
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  if (!have_count) throw ConfigError("missing key 'network_count'");
  for (const auto& [k, hp] : workers)
    if (k >= static_cast<std::size_t>(std::max(cfg.network_count, 0)))
      throw ConfigError("unknown key 'worker." + std::to_string(k) + "': network_count is " +
                        std::to_string(cfg.network_count));
  for (int k = 0; k < cfg.network_count; ++k) {
    auto it = workers.find(static_cast<std::size_t>(k));
    if (it == workers.end()) throw ConfigError("missing key 'worker." + std::to_string(k) + ".*'");
    cfg.workers.push_back(it->second);
  }
  return cfg;
}

inline ExperimentConfig read_config(const std::filesystem::path& path) {
  return parse_config(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const AlphaDecision& d) {
  return {{"layer", d.layer_name}, {"h_self", d.h_self}, {"h_peer", d.h_peer}, {"alpha", d.alpha}};
}

inline nlohmann::ordered_json to_json(const DiagnosticsReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = "graft.diagnostics/1";
  j["epoch"] = r.epoch;
  j["worker_id"] = r.worker_id;
  j["tag"] = r.tag;
  j["config_hash"] = r.config_hash;
  j["binning"] = {{"bin_count", r.bins.bin_count},
                  {"range", r.bins.range_mode == RangeMode::fixed ? "fixed" : "minmax"}};
  if (r.bins.range_mode == RangeMode::fixed) {
    j["binning"]["lo"] = r.bins.lo;
    j["binning"]["hi"] = r.bins.hi;
  }
  j["network_information"] = r.network_information;
  j["invalid_ratio"] = nlohmann::ordered_json::array();
  for (const auto& t : r.invalid_ratio) j["invalid_ratio"].push_back({{"threshold", t.threshold}, {"fraction", t.fraction}});
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : r.layers) {
    nlohmann::ordered_json e;
    e["name"] = l.name;
    e["kind"] = to_string(l.kind);
    e["l1"] = l.l1;
    e["filter_entropy"] = l.filter_entropy;
    e["filter_entropy_sum"] = l.filter_entropy_sum ? nlohmann::ordered_json(*l.filter_entropy_sum) : nullptr;
    e["layer_entropy"] = l.layer_entropy;
    j["layers"].push_back(std::move(e));
  }
  if (r.iou_fraction) {
    j["iou_fraction"] = *r.iou_fraction;
    j["iou"] = nlohmann::ordered_json::array();
    for (const auto& x : r.iou) j["iou"].push_back({{"layer", x.layer}, {"iou", x.iou}});
  }
  return j;
}

inline std::string threshold_column(double t) { return "invalid_ratio@" + format_double(t); }

// Columns: epoch, worker, loss, accuracy, network_information, then
// train_accuracy, grafted, and one invalid_ratio@<threshold> per threshold.
inline std::string history_csv(const std::vector<EpochRecord>& history, const std::vector<double>& thresholds) {
  std::ostringstream o;
  o << "epoch,worker,loss,accuracy,network_information,train_accuracy,grafted";
  for (double t : thresholds) o << ',' << threshold_column(t);
  o << '\n';
  for (const auto& r : history) {
    o << r.epoch << ',' << r.worker_id << ',' << format_double(r.train_loss) << ',' << format_double(r.test_accuracy)
      << ',' << format_double(r.network_information) << ',' << format_double(r.train_accuracy) << ','
      << (r.grafted ? 1 : 0);
    for (const auto& x : r.invalid_ratio) o << ',' << format_double(x.fraction);
    o << '\n';
  }
  return o.str();
}

inline std::string layer_entropy_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream o;
  o << "epoch,worker,layer,layer_entropy\n";
  for (const auto& r : history)
    for (const auto& [name, h] : r.layer_entropies)
      o << r.epoch << ',' << r.worker_id << ',' << name << ',' << format_double(h) << '\n';
  return o.str();
}

inline nlohmann::ordered_json alpha_log_json(const std::vector<EpochRecord>& history) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : history) {
    if (r.alphas.empty()) continue;
    nlohmann::ordered_json e;
    e["epoch"] = r.epoch;
    e["worker"] = r.worker_id;
    e["decisions"] = nlohmann::ordered_json::array();
    for (const auto& d : r.alphas) e["decisions"].push_back(to_json(d));
    j.push_back(std::move(e));
  }
  return j;
}

}  // namespace graft
