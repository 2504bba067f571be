// orthoview: synthetic data, rendering, training, evaluation and protocol
// comparisons from the command line. Every run writes <out>/manifest.json
// first; `orthoview run --config <out>/manifest.json` replays it.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "orthoview/checkpoint.hpp"
#include "orthoview/experiment.hpp"

namespace fs = std::filesystem;
using namespace orthoview;

namespace {

struct Overrides {
  std::string config, out, arch, protocol, projection, fusion, depth, ensemble, data, checkpoint, cloud;
  std::optional<int> views, resolution;
  std::optional<std::size_t> points, epochs, jobs, train_per_class, test_per_class;
  std::optional<std::uint64_t> dataset_seed;
  std::optional<double> orientation;
  std::vector<std::uint64_t> seeds;
  std::vector<double> fractions;
  std::vector<std::string> archs, protocols;
  bool grid = false;
};

ExperimentConfig resolve(const std::string& command, const Overrides& o) {
  ExperimentConfig c;
  if (!o.config.empty()) c = load_config(o.config);
  if (command != "run") c.command = command;
  if (c.command.empty()) throw ConfigError("config does not name a command");
  if (o.config.empty()) c.seeds = default_seeds();
  if (!o.out.empty()) c.out = o.out;
  if (!o.data.empty()) c.dataset.path = o.data;
  if (o.dataset_seed) c.dataset.seed = *o.dataset_seed;
  if (o.train_per_class) c.dataset.train_per_class = *o.train_per_class;
  if (o.test_per_class) c.dataset.test_per_class = *o.test_per_class;
  if (o.orientation) c.dataset.orientation = *o.orientation;
  if (!o.protocol.empty()) {
    const ProtocolSpec keep = c.protocol;
    c.protocol = protocol_preset(protocol_from_string(o.protocol));
    c.protocol.epochs = keep.epochs;
    c.protocol.points = keep.points;
    c.protocol.train_fraction = keep.train_fraction;
  }
  if (!o.arch.empty()) c.model.arch = nn::arch_from_string(o.arch);
  if (o.views) c.model.render.views = *o.views;
  if (o.resolution) c.model.render.resolution = *o.resolution;
  if (!o.projection.empty()) c.model.render.projection = projection_from_string(o.projection);
  if (!o.depth.empty()) c.model.render.depth = depth_from_string(o.depth);
  if (!o.fusion.empty()) c.model.fusion = nn::fusion_from_string(o.fusion);
  if (!o.ensemble.empty()) c.protocol.ensemble.kind = ensemble_from_string(o.ensemble);
  if (o.points) c.protocol.points = *o.points;
  if (o.epochs) c.protocol.epochs = *o.epochs;
  if (o.jobs) c.jobs = *o.jobs;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (!o.fractions.empty()) {
    c.fractions = o.fractions;
    c.protocol.train_fraction = o.fractions.front();
  }
  if (!o.archs.empty()) c.archs = o.archs;
  if (!o.protocols.empty()) c.protocols = o.protocols;
  if (o.grid) c.loss_selection_grid = true;
  if (!o.checkpoint.empty()) c.checkpoint = o.checkpoint;
  if (!o.cloud.empty()) c.cloud = o.cloud;
  if (c.seeds.empty()) throw ConfigError("no seeds given");
  const int v = c.model.render.views;
  if (v != 1 && v != 3 && v != 6) throw ConfigError("views must be 1, 3 or 6, got " + std::to_string(v));
  validate(c.protocol);
  return c;
}

EvalOptions eval_options(const ExperimentConfig& c) {
  EvalOptions e;
  e.points = c.protocol.points;
  e.seed = c.eval_seed;
  return e;
}

void write_text(const fs::path& path, const std::function<void(std::ostream&)>& body) { write_atomically(path, body); }

Json summary_of(const std::vector<ReportRow>& rows, const std::vector<std::string>& group_by) {
  std::map<std::string, std::vector<double>> acc, cls;
  for (const auto& r : rows) {
    std::string key = r.run.arch + "|" + r.run.protocol + "|" + format_double(r.run.fraction);
    for (const auto& g : group_by)
      for (const auto& [k, v] : r.extra)
        if (k == g) key += "|" + v;
    acc[key].push_back(r.run.overall_acc);
    cls[key].push_back(r.run.class_acc);
  }
  Json out = Json::array();
  for (const auto& [key, xs] : acc) {
    const MeanStd a = mean_std(xs), b = mean_std(cls.at(key));
    out.push_back({{"group", key},
                   {"runs", xs.size()},
                   {"overall_acc_mean", a.mean},
                   {"overall_acc_std", a.stddev},
                   {"class_acc_mean", b.mean},
                   {"class_acc_std", b.stddev}});
  }
  return out;
}

void cmd_gen(const ExperimentConfig& c) {
  DatasetSource d = c.dataset;
  d.path.clear();
  const Splits s = load_splits(d);
  save_dataset(s.train, fs::path(c.out) / "train");
  save_dataset(s.test, fs::path(c.out) / "test");
  std::cout << "wrote " << s.train.size() << " train and " << s.test.size() << " test clouds to " << c.out << '\n';
}

void cmd_render(const ExperimentConfig& c) {
  if (c.cloud.empty()) throw ConfigError("render needs --cloud");
  const PointCloud cloud = load_xyz(c.cloud);
  const DepthImageStack stack = render_multiview(cloud, c.model.render);
  for (std::size_t v = 0; v < stack.views(); ++v)
    save_pgm(stack.images[v], fs::path(c.out) / ("view_" + std::string(to_string(stack.view_ids[v])) + ".pgm"));
  std::cout << "wrote " << stack.views() << " views to " << c.out << '\n';
}

void cmd_train(const ExperimentConfig& c) {
  const Splits data = load_splits(c.dataset);
  nn::ModelConfig model = c.model;
  model.n_classes = data.train.num_classes();
  const EvalOptions ev = eval_options(c);
  std::vector<ReportRow> rows(c.seeds.size());
  parallel_for(c.seeds.size(), c.jobs, [&](std::size_t i) {
    const std::uint64_t seed = c.seeds[i];
    FitResult fitted;
    const RunRecord r = run_single(model, c.protocol, data.train, data.test, seed, ev, &fitted);
    const fs::path dir = fs::path(c.out) / ("seed_" + std::to_string(seed));
    Checkpoint ck{model, fitted.state, fitted.optimizer,
                  {{"seed", seed},
                   {"protocol", c.protocol.name},
                   {"selected_epoch", fitted.selected_epoch},
                   {"lr", fitted.lr},
                   {"class_names", data.train.class_names}}};
    save_checkpoint(ck, dir / "model.ckpt");
    write_text(dir / "log.csv", [&](std::ostream& out) { write_log_csv(out, fitted.log); });
    if (fitted.tuning_log)
      write_text(dir / "tuning_log.csv", [&](std::ostream& out) { write_log_csv(out, *fitted.tuning_log); });
    rows[i] = {r, {}};
  });
  save_report_csv(rows, fs::path(c.out) / "report.csv");
  save_json(summary_of(rows, {}), fs::path(c.out) / "summary.json");
  for (const auto& r : rows)
    std::cout << "seed " << r.run.seed << " epoch " << r.run.selected_epoch << " overall_acc "
              << format_double(r.run.overall_acc) << " class_acc " << format_double(r.run.class_acc) << '\n';
}

void cmd_eval(const ExperimentConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  const Checkpoint ck = load_checkpoint(c.checkpoint);
  auto model = nn::make_model(ck.config, 0);
  restore(*model, ck);
  const Splits data = load_splits(c.dataset);
  if (data.test.num_classes() != ck.config.n_classes)
    throw ConfigError("test set has " + std::to_string(data.test.num_classes()) + " classes, checkpoint expects " +
                      std::to_string(ck.config.n_classes));
  const std::uint64_t seed = ck.info.value("seed", std::uint64_t{0});
  const Evaluation ev = evaluate(*model, data.test, c.protocol.ensemble, c.protocol.augment.scale,
                                 derive_seed(seed, "ensemble"), eval_options(c));
  Json j = {{"overall_acc", ev.metrics.overall_acc},
            {"class_acc", ev.metrics.class_acc},
            {"ensemble", to_string(c.protocol.ensemble.kind)},
            {"checkpoint", c.checkpoint},
            {"test_size", data.test.size()}};
  if (ev.scaling_vote) {
    j["scaling_vote"] = {{"best_accuracy", ev.scaling_vote->best_accuracy},
                         {"best_trial", ev.scaling_vote->best_trial},
                         {"mean_accuracy", ev.scaling_vote->mean_accuracy()}};
  }
  save_json(j, fs::path(c.out) / "metrics.json");
  write_text(fs::path(c.out) / "confusion.csv",
             [&](std::ostream& out) { write_confusion_csv(out, ev.metrics, data.test.class_names); });
  std::cout << "overall_acc " << format_double(ev.metrics.overall_acc) << " class_acc "
            << format_double(ev.metrics.class_acc) << '\n';
}

void cmd_ablate(const ExperimentConfig& c) {
  const Splits data = load_splits(c.dataset);
  const auto cells = ablation_grid();
  const EvalOptions ev = eval_options(c);
  std::vector<ReportRow> rows(cells.size() * c.seeds.size());
  parallel_for(rows.size(), c.jobs, [&](std::size_t i) {
    const AblationCell& cell = cells[i / c.seeds.size()];
    nn::ModelConfig model = c.model;
    model.arch = nn::Arch::simpleview;
    model.n_classes = data.train.num_classes();
    model.render.views = cell.views;
    model.render.projection = cell.projection;
    model.render.depth = cell.depth;
    model.fusion = cell.fusion;
    rows[i] = {run_single(model, c.protocol, data.train, data.test, c.seeds[i % c.seeds.size()], ev),
               {{"views", std::to_string(cell.views)},
                {"projection", std::string(to_string(cell.projection))},
                {"fusion", std::string(nn::to_string(cell.fusion))},
                {"depth", std::string(to_string(cell.depth))}}};
  });
  save_report_csv(rows, fs::path(c.out) / "report.csv");
  save_json(summary_of(rows, {"views", "projection", "fusion", "depth"}), fs::path(c.out) / "summary.json");
  std::cout << "wrote " << rows.size() << " ablation rows to " << (fs::path(c.out) / "report.csv").string() << '\n';
}

void cmd_compare(const ExperimentConfig& c) {
  const Splits data = load_splits(c.dataset);
  struct Job {
    nn::ModelConfig model;
    ProtocolSpec spec;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& a : c.archs)
    for (const auto& p : c.protocols) {
      ProtocolSpec base = protocol_preset(protocol_from_string(p));
      base.epochs = c.protocol.epochs;
      base.points = c.protocol.points;
      std::vector<ProtocolSpec> specs = c.loss_selection_grid ? loss_selection_grid(base) : std::vector{base};
      for (const auto& f : c.fractions)
        for (ProtocolSpec s : specs) {
          s.train_fraction = f;
          validate(s);
          nn::ModelConfig m = c.model;
          m.arch = nn::arch_from_string(a);
          m.n_classes = data.train.num_classes();
          for (std::uint64_t seed : c.seeds) jobs.push_back({m, s, seed});
        }
    }
  const EvalOptions ev = eval_options(c);
  std::vector<ReportRow> rows(jobs.size());
  parallel_for(jobs.size(), c.jobs, [&](std::size_t i) {
    const Job& j = jobs[i];
    rows[i] = {run_single(j.model, j.spec, data.train, data.test, j.seed, ev), {}};
  });
  save_report_csv(rows, fs::path(c.out) / "report.csv");
  const Json summary = summary_of(rows, {});
  save_json(summary, fs::path(c.out) / "summary.json");
  for (const auto& g : summary)
    std::cout << g["group"].get<std::string>() << " overall_acc " << format_double(g["overall_acc_mean"].get<double>())
              << " +- " << format_double(g["overall_acc_std"].get<double>()) << '\n';
}

void execute(const ExperimentConfig& c) {
  fs::create_directories(c.out);
  Json manifest = to_json(c);
  save_json(manifest, fs::path(c.out) / "manifest.json");
  static const std::map<std::string, void (*)(const ExperimentConfig&)> commands{
      {"gen", cmd_gen},   {"render", cmd_render},   {"train", cmd_train},
      {"eval", cmd_eval}, {"ablate", cmd_ablate}, {"compare", cmd_compare}};
  const auto it = commands.find(c.command);
  if (it == commands.end()) throw ConfigError("unknown command '" + c.command + "'");
  it->second(c);
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view point-cloud classification experiments"};
  app.require_subcommand(1);
  Overrides o;
  for (const char* name : {"gen", "render", "train", "eval", "ablate", "compare", "run"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", o.config, "JSON experiment config");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--data", o.data, "dataset directory written by gen");
    sub->add_option("--dataset-seed", o.dataset_seed);
    sub->add_option("--train-per-class", o.train_per_class);
    sub->add_option("--test-per-class", o.test_per_class);
    sub->add_option("--orientation", o.orientation, "max random turn per instance, radians");
    sub->add_option("--arch", o.arch, "simpleview | pointnet");
    sub->add_option("--protocol", o.protocol, "pointnet2 | dgcnn | rscnn | simpleview");
    sub->add_option("--views", o.views, "1 | 3 | 6");
    sub->add_option("--projection", o.projection, "persp | ortho");
    sub->add_option("--fusion", o.fusion, "concat | pool");
    sub->add_option("--depth", o.depth, "min | wavg");
    sub->add_option("--resolution", o.resolution);
    sub->add_option("--points", o.points);
    sub->add_option("--epochs", o.epochs);
    sub->add_option("--seeds", o.seeds)->delimiter(',');
    sub->add_option("--fraction", o.fractions)->delimiter(',');
    sub->add_option("--archs", o.archs)->delimiter(',');
    sub->add_option("--protocols", o.protocols)->delimiter(',');
    sub->add_flag("--loss-selection-grid", o.grid);
    sub->add_option("--ensemble", o.ensemble, "none | rotvote | rsvote");
    sub->add_option("--jobs", o.jobs);
    sub->add_option("--checkpoint", o.checkpoint);
    sub->add_option("--cloud", o.cloud, ".xyz point cloud");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << '\n';
    return 2;
  }
  try {
    const std::string command = app.get_subcommands().front()->get_name();
    execute(resolve(command, o));
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: config: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: input: " << one_line(e.what()) << '\n';
    return 3;
  } catch (const CheckpointError& e) {
    std::cerr << "error: checkpoint: " << one_line(e.what()) << '\n';
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "error: training: " << one_line(e.what()) << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
