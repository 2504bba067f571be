#pragma once

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "orthoview/config.hpp"
#include "orthoview/dataset.hpp"
#include "orthoview/protocol.hpp"

namespace orthoview {

// Either a directory written by `gen` (train/ and test/ below it) or an
// in-memory synthetic dataset.
struct DatasetSource {
  std::string path;  // empty: synthesize
  std::uint64_t seed = 1;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 25;
  std::size_t points = 1024;
  double size_jitter = 0.2;
  double orientation = 0.0;
};

struct Splits {
  DatasetSplit train, test;
};

inline SyntheticDatasetOptions synthetic_options(const DatasetSource& d, SplitRole role) {
  SyntheticDatasetOptions o;
  o.per_class = role == SplitRole::test ? d.test_per_class : d.train_per_class;
  o.points = d.points;
  o.size_jitter = d.size_jitter;
  o.orientation = d.orientation;
  return o;
}

inline Splits load_splits(const DatasetSource& d) {
  if (!d.path.empty()) {
    const std::filesystem::path root(d.path);
    return {load_dataset(root / "train", SplitRole::train), load_dataset(root / "test", SplitRole::test)};
  }
  return {make_synthetic_split(synthetic_options(d, SplitRole::train), SplitRole::train, d.seed),
          make_synthetic_split(synthetic_options(d, SplitRole::test), SplitRole::test, d.seed)};
}

inline Json to_json(const DatasetSource& d) {
  return {{"path", d.path},
          {"seed", d.seed},
          {"train_per_class", d.train_per_class},
          {"test_per_class", d.test_per_class},
          {"points", d.points},
          {"size_jitter", d.size_jitter},
          {"orientation", d.orientation}};
}

inline void from_json(const Json& j, DatasetSource& d, const std::string& where = "dataset") {
  detail::reject_unknown(j, {"path", "seed", "train_per_class", "test_per_class", "points", "size_jitter", "orientation"},
                         where);
  detail::read(j, "path", d.path, where);
  detail::read(j, "seed", d.seed, where);
  detail::read(j, "train_per_class", d.train_per_class, where);
  detail::read(j, "test_per_class", d.test_per_class, where);
  detail::read(j, "points", d.points, where);
  detail::read(j, "size_jitter", d.size_jitter, where);
  detail::read(j, "orientation", d.orientation, where);
}

// Everything a command needs, fully resolved; the manifest is this object.
struct ExperimentConfig {
  std::string command;
  DatasetSource dataset;
  nn::ModelConfig model;
  ProtocolSpec protocol = protocol_preset(ProtocolId::simpleview);
  std::vector<std::uint64_t> seeds{1};
  std::uint64_t eval_seed = 0;
  // compare
  std::vector<std::string> archs{"simpleview", "pointnet"};
  std::vector<std::string> protocols{"pointnet2", "dgcnn", "rscnn", "simpleview"};
  std::vector<double> fractions{1.0};
  bool loss_selection_grid = false;
  // eval / render
  std::string checkpoint;
  std::string cloud;
  std::string out = "out";
  std::size_t jobs = 1;
};

inline Json to_json(const ExperimentConfig& c) {
  return {{"command", c.command},
          {"dataset", to_json(c.dataset)},
          {"model", to_json(c.model)},
          {"protocol", to_json(c.protocol)},
          {"seeds", c.seeds},
          {"eval_seed", c.eval_seed},
          {"archs", c.archs},
          {"protocols", c.protocols},
          {"fractions", c.fractions},
          {"loss_selection_grid", c.loss_selection_grid},
          {"checkpoint", c.checkpoint},
          {"cloud", c.cloud},
          {"out", c.out},
          {"jobs", c.jobs}};
}

inline void from_json(const Json& j, ExperimentConfig& c, const std::string& where = "config") {
  detail::reject_unknown(j,
                         {"command", "dataset", "model", "protocol", "seeds", "eval_seed", "archs", "protocols",
                          "fractions", "loss_selection_grid", "checkpoint", "cloud", "out", "jobs"},
                         where);
  detail::read(j, "command", c.command, where);
  if (j.contains("dataset")) from_json(j.at("dataset"), c.dataset, where + ".dataset");
  if (j.contains("model")) from_json(j.at("model"), c.model, where + ".model");
  if (j.contains("protocol")) from_json(j.at("protocol"), c.protocol, where + ".protocol");
  detail::read(j, "seeds", c.seeds, where);
  detail::read(j, "eval_seed", c.eval_seed, where);
  detail::read(j, "archs", c.archs, where);
  detail::read(j, "protocols", c.protocols, where);
  detail::read(j, "fractions", c.fractions, where);
  detail::read(j, "loss_selection_grid", c.loss_selection_grid, where);
  detail::read(j, "checkpoint", c.checkpoint, where);
  detail::read(j, "cloud", c.cloud, where);
  detail::read(j, "out", c.out, where);
  detail::read(j, "jobs", c.jobs, where);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  ExperimentConfig c;
  try {
    from_json(Json::parse(in), c);
  } catch (const Json::parse_error& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return c;
}

inline void save_json(const Json& j, const std::filesystem::path& path) {
  write_atomically(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

// Seeds from an explicit list, else the master seed in ORTHOVIEW_SEED, else 1.
inline std::vector<std::uint64_t> default_seeds() {
  if (const char* env = std::getenv("ORTHOVIEW_SEED"); env && *env) {
    std::uint64_t s = 0;
    const std::string_view v(env);
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("ORTHOVIEW_SEED is not an unsigned integer");
    return {s};
  }
  return {1};
}

// ---------------------------------------------------------------------------
// Reports

// Shortest text that reads back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

struct ReportRow {
  RunRecord run;
  std::vector<std::pair<std::string, std::string>> extra;  // additional columns, same keys on every row
};

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"arch",           "protocol", "seed",     "overall_acc",
                                             "class_acc",      "selected_epoch", "ensemble", "fraction"};
  return cols;
}

inline void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  std::vector<std::string> header = report_columns();
  if (!rows.empty())
    for (const auto& [k, _] : rows.front().extra) header.push_back(k);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    const RunRecord& r = row.run;
    out << r.arch << ',' << r.protocol << ',' << r.seed << ',' << format_double(r.overall_acc) << ','
        << format_double(r.class_acc) << ',' << r.selected_epoch << ',' << r.ensemble << ','
        << format_double(r.fraction);
    for (const auto& [_, v] : row.extra) out << ',' << v;
    out << '\n';
  }
}

inline void save_report_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  write_atomically(path, [&](std::ostream& out) { write_report_csv(out, rows); });
}

inline void write_log_csv(std::ostream& out, const TrainLog& log) {
  out << "epoch,train_loss,train_acc,lr,val_acc,test_acc\n";
  for (const auto& e : log.epochs)
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.train_acc) << ','
        << format_double(e.lr) << ',' << (e.val_acc ? format_double(*e.val_acc) : "") << ','
        << (e.test_acc ? format_double(*e.test_acc) : "") << '\n';
}

// ---------------------------------------------------------------------------
// Grids and the worker pool

struct AblationCell {
  int views;
  ProjectionMode projection;
  nn::Fusion fusion;
  DepthMode depth;
};

// views {1, 3, 6} x projection {ortho, persp} x fusion {pool, concat} x depth {min, wavg}
inline std::vector<AblationCell> ablation_grid() {
  std::vector<AblationCell> cells;
  for (int v : {1, 3, 6})
    for (ProjectionMode p : {ProjectionMode::orthographic, ProjectionMode::perspective})
      for (nn::Fusion f : {nn::Fusion::pool, nn::Fusion::concat})
        for (DepthMode d : {DepthMode::minimum, DepthMode::weighted_avg}) cells.push_back({v, p, f, d});
  return cells;
}

// Runs task(i) for i in [0, n) on up to `jobs` threads. Each task writes only
// its own slot, so the outcome is independent of scheduling; the first
// exception (by task index) is rethrown after all workers finish.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace orthoview
