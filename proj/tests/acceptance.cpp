// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// ORTHOVIEW_ACCEPT=1,2,5 restricts the run to the listed criteria.

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include "orthoview/experiment.hpp"
#include "orthoview/nn/gradcheck.hpp"
#include "support.hpp"

using namespace orthoview;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

double mean_of(const std::vector<double>& xs) { return mean_std(xs).mean; }

nn::Tensor random_tensor(nn::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  RandomStream r(seed, "accept-tensor");
  std::vector<double> v(nn::numel(shape));
  for (double& x : v) x = r.uniform(lo, hi);
  return nn::Tensor::from(std::move(shape), std::move(v), true);
}

nn::Tensor away_from_zero(nn::Shape shape, std::uint64_t seed) {
  nn::Tensor t = random_tensor(std::move(shape), seed);
  for (double& x : t.values()) x = x < 0 ? x - 0.05 : x + 0.05;
  return t;
}

// Scalar probe sum_i w_i y_i with fixed pseudo-random weights.
nn::Tensor probe(const nn::Tensor& y, std::uint64_t seed) {
  RandomStream r(seed, "accept-probe");
  std::vector<double> w(y.numel());
  for (double& x : w) x = r.uniform(-1.0, 1.0);
  return nn::weighted_sum(y, w);
}

std::vector<PointCloud> shape_inputs(std::size_t n, std::size_t points, std::uint64_t seed) {
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < n; ++i) {
    PointCloud c = normalize_unit_cube(synth_shape(kAllShapes[i % 8], points, seed + i));
    c.label = static_cast<int>(i % 8);
    c.id = i;
    out.push_back(std::move(c));
  }
  return out;
}

// --- 1 ----------------------------------------------------------------------

Outcome gradient_integrity() {
  using namespace nn;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> layer;
  {
    Tensor x = random_tensor({5, 4}, 1), w = random_tensor({3, 4}, 2), b = random_tensor({3}, 3);
    layer.emplace_back("linear", grad_check([&] { return probe(linear(x, w, b), 1); }, {x, w, b}).max_rel_error);
  }
  {
    Tensor x = random_tensor({2, 2, 6, 5}, 4), w = random_tensor({3, 2, 3, 3}, 5), b = random_tensor({3}, 6);
    layer.emplace_back("conv2d", grad_check([&] { return probe(conv2d(x, w, b, 2, 1), 2); }, {x, w, b}).max_rel_error);
  }
  for (bool training : {true, false})
    for (const Shape& shape : {Shape{6, 3}, Shape{3, 2, 3, 2}}) {
      Tensor x = random_tensor(shape, 7), g = random_tensor({shape[1]}, 8, 0.5, 1.5), b = random_tensor({shape[1]}, 9);
      const auto r = grad_check(
          [&] {
            std::vector<double> m(shape[1], 0.1), v(shape[1], 0.8);
            return probe(batch_norm(x, g, b, m, v, training), 3);
          },
          {x, g, b});
      layer.emplace_back(std::string("batchnorm-") + (training ? "train" : "eval") + "-rank" +
                             std::to_string(shape.size()),
                         r.max_rel_error);
    }
  {
    Tensor x = away_from_zero({4, 5}, 10);
    layer.emplace_back("relu", grad_check([&] { return probe(relu(x), 4); }, {x}).max_rel_error);
  }
  {
    Tensor x = random_tensor({2, 2, 5, 5}, 11);
    layer.emplace_back("maxpool", grad_check([&] { return probe(max_pool2d(x, 3, 2, 1), 5); }, {x}).max_rel_error);
  }
  {
    Tensor x = random_tensor({3, 4, 2, 2}, 12);
    layer.emplace_back("avgpool", grad_check([&] { return probe(global_avg_pool(x), 6); }, {x}).max_rel_error);
    Tensor g = random_tensor({6, 4}, 13);
    layer.emplace_back("group-max", grad_check([&] { return probe(group_max(g, 3), 7); }, {g}).max_rel_error);
  }
  {
    Tensor logits = random_tensor({4, 5}, 14, -3.0, 3.0);
    const std::vector<int> labels{0, 3, 4, 1};
    for (double eps : {0.0, 0.2})
      layer.emplace_back("smooth-loss-" + fmt(eps),
                         grad_check([&] { return smooth_loss(logits, labels, eps); }, {logits}).max_rel_error);
  }

  const auto clouds = shape_inputs(3, 64, 2);
  const std::vector<int> labels{0, 1, 2};
  ModelConfig sv;
  sv.width_divisor = 16;
  sv.render.resolution = 16;
  sv.head_hidden = 32;
  ModelConfig pn;
  pn.arch = Arch::pointnet_lite;
  pn.point_widths = {16, 16, 32};
  pn.point_head_hidden = 16;
  std::vector<std::pair<std::string, double>> full;
  for (const ModelConfig& cfg : {sv, pn}) {
    auto m = make_model(cfg, 5);
    std::vector<Tensor> wrt;
    for (const auto& p : m->params().params()) wrt.push_back(p.tensor);
    full.emplace_back(std::string(to_string(cfg.arch)),
                      grad_check([&] { return smooth_loss(m->forward(clouds, true), labels, 0.2); }, wrt, 1e-5, 1e-6,
                                 24)
                          .max_rel_error);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Outcome o{secs < 120.0, ""};
  double worst_layer = 0.0;
  for (const auto& [name, err] : layer) {
    worst_layer = std::max(worst_layer, err);
    if (!(err < 1e-6)) o.pass = false, o.detail += name + " " + fmt(err) + "; ";
  }
  for (const auto& [name, err] : full) {
    if (!(err < 1e-4)) o.pass = false;
    o.detail += name + " rel " + fmt(err, 3) + ", ";
  }
  o.detail += "worst layer rel " + fmt(worst_layer, 3) + " over " + std::to_string(layer.size()) + " checks, " +
              fmt(secs, 3) + " s";
  return o;
}

// --- 2 ----------------------------------------------------------------------

Outcome projection_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t images = 0, mismatches = 0, lit = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const PointCloud c = testing_support::random_cloud(1000 + seed, 300);
    for (ProjectionMode proj : {ProjectionMode::perspective, ProjectionMode::orthographic})
      for (DepthMode depth : {DepthMode::minimum, DepthMode::weighted_avg})
        for (int v = 0; v < 6; ++v) {
          const auto id = static_cast<ViewId>(v);
          const DepthImage img = rasterize_view(c, make_camera(id, proj), 32, depth);
          const auto ref = testing_support::reference_rasterize(c, id, 32, proj, depth);
          ++images;
          if (img.pixels != ref) ++mismatches;
          lit += static_cast<std::size_t>(std::count_if(ref.begin(), ref.end(), [](double x) { return x > 0; }));
        }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {mismatches == 0 && images == 2400 && secs < 60.0,
          std::to_string(images) + " images, " + std::to_string(mismatches) + " mismatches, " + std::to_string(lit) +
              " lit pixels, " + fmt(secs, 3) + " s"};
}

// --- 3 ----------------------------------------------------------------------

Outcome permutation_invariance() {
  std::size_t checked = 0, differ = 0;
  for (nn::Arch arch : {nn::Arch::simpleview, nn::Arch::pointnet_lite}) {
    nn::ModelConfig cfg;
    cfg.arch = arch;
    auto model = nn::make_model(cfg, 31);
    for (std::uint64_t i = 0; i < 20; ++i) {
      PointCloud c = normalize_unit_cube(synth_shape(kAllShapes[i % 8], 256, 500 + i));
      PointCloud p = c;
      RandomStream r(i, "accept-perm");
      std::shuffle(p.points.begin(), p.points.end(), r);
      nn::NoGradGuard g;
      const nn::Tensor a = model->forward(std::span<const PointCloud>(&c, 1), false);
      const nn::Tensor b = model->forward(std::span<const PointCloud>(&p, 1), false);
      ++checked;
      if (!std::equal(a.values().begin(), a.values().end(), b.values().begin())) ++differ;
    }
  }
  return {differ == 0, std::to_string(checked) + " cloud/model pairs, " + std::to_string(differ) + " differ"};
}

// --- 4 ----------------------------------------------------------------------

Outcome parameter_audit() {
  nn::ModelConfig cfg;
  auto model = nn::make_model(cfg, 1);
  const double m = static_cast<double>(nn::count_params(model->params())) / 1e6;
  return {m >= 0.6 && m <= 1.0, "SimpleView (ResNet18/4, 6 views, concat) has " + fmt(m, 6) + " M parameters"};
}

// --- 5 ----------------------------------------------------------------------

Outcome loss_identities() {
  RandomStream r(5, "accept-loss");
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 2 + r.index(39);
    std::vector<double> z(k);
    for (double& v : z) v = r.uniform(-20, 20);
    const int y = static_cast<int>(r.index(k));
    worst = std::max(worst, std::abs(nn::smooth_loss(z, y, 0.0) - nn::cross_entropy(z, y)));
  }
  double worst_uniform = 0.0;
  for (std::size_t k : {2, 8, 15, 40}) {
    const std::vector<double> z(k, r.uniform(-5, 5));
    for (double eps : {0.0, 0.2})
      worst_uniform = std::max(worst_uniform, std::abs(nn::smooth_loss(z, 0, eps) - std::log(static_cast<double>(k))));
  }
  return {worst <= 1e-12 && worst_uniform <= 1e-12,
          "max |smooth(eps=0) - CE| " + fmt(worst, 3) + ", max |uniform - ln K| " + fmt(worst_uniform, 3)};
}

// --- 6 and 7 ----------------------------------------------------------------

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4};

DatasetSource rotated_source() {
  DatasetSource d;
  d.seed = 17;
  d.train_per_class = 25;
  d.test_per_class = 50;
  d.points = 512;
  d.orientation = std::numbers::pi;
  return d;
}

ProtocolSpec trend_spec(std::size_t epochs) {
  ProtocolSpec p = protocol_preset(ProtocolId::simpleview);
  p.selection = Selection::last;
  p.epochs = epochs;
  return p;
}

struct ViewRuns {
  std::map<int, std::vector<FitResult>> fits;  // by view count, one per seed
  Splits data;
  bool done = false;
};

ViewRuns& view_runs() {
  static ViewRuns runs;
  if (runs.done) return runs;
  runs.data = load_splits(rotated_source());
  const ProtocolSpec spec = trend_spec(100);
  for (int v : {1, 3, 6})
    for (std::uint64_t seed : kSeeds) {
      nn::ModelConfig cfg;
      cfg.render.views = v;
      const auto t0 = std::chrono::steady_clock::now();
      runs.fits[v].push_back(fit(cfg, runs.data.train, runs.data.test, spec, seed));
      const FitResult& f = runs.fits[v].back();
      std::cout << "  views " << v << " seed " << seed << " final " << fmt(f.final_epoch_test_acc) << " best "
                << fmt(f.best_test_acc) << " (" << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 3)
                << " s)" << std::endl;
    }
  runs.done = true;
  return runs;
}

Outcome views_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  ViewRuns& runs = view_runs();
  std::map<int, double> acc;
  for (auto& [v, fits] : runs.fits) {
    std::vector<double> xs;
    for (const auto& f : fits) xs.push_back(f.final_epoch_test_acc);
    acc[v] = mean_of(xs);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = acc[6] >= acc[3] && acc[3] >= acc[1] - 0.005 && acc[6] - acc[1] >= 0.02 && secs < 45 * 60;
  return {pass, "mean acc 1/3/6 views " + fmt(100 * acc[1]) + " / " + fmt(100 * acc[3]) + " / " + fmt(100 * acc[6]) +
                    " %, " + fmt(secs / 60, 3) + " min"};
}

Outcome protocol_inflation() {
  ViewRuns& runs = view_runs();
  std::size_t curve_ok = 0, curve_n = 0, vote_ok = 0, vote_n = 0;
  double gain = 0.0;
  for (auto& [v, fits] : runs.fits)
    for (const auto& f : fits) {
      ++curve_n;
      if (f.best_test_acc >= f.final_epoch_test_acc) ++curve_ok;
      gain += f.best_test_acc - f.final_epoch_test_acc;
    }
  double vote_gain = 0.0;
  nn::ModelConfig cfg;
  cfg.render.views = 1;
  for (std::size_t i = 0; i < kSeeds.size(); ++i) {
    auto model = nn::make_model(cfg, kSeeds[i]);
    model->params().load_state(runs.fits[1][i].state);
    const ScalingVoteResult r = repeated_scaling_vote(*model, runs.data.test, 300, 1, derive_seed(kSeeds[i], "ensemble"),
                                                      protocol_preset(ProtocolId::rscnn).augment.scale);
    ++vote_n;
    if (r.best_accuracy >= r.mean_accuracy()) ++vote_ok;
    vote_gain += r.best_accuracy - r.mean_accuracy();
  }
  return {curve_ok == curve_n && vote_ok == vote_n,
          "best_test >= final-epoch in " + std::to_string(curve_ok) + "/" + std::to_string(curve_n) +
              " runs (mean gain " + fmt(100 * gain / curve_n, 3) + " pt); scaling-vote best-of-300 >= trial mean in " +
              std::to_string(vote_ok) + "/" + std::to_string(vote_n) + " runs (mean gain " +
              fmt(100 * vote_gain / vote_n, 3) + " pt)"};
}

// Trains without a per-epoch test curve and scores the last epoch.
double train_and_score(const nn::ModelConfig& cfg, const ProtocolSpec& spec, const DatasetSplit& train_full,
                       const std::vector<const DatasetSplit*>& tests, std::uint64_t seed, std::vector<double>* scores) {
  const DatasetSplit subset = stratified_subset(train_full, spec.train_fraction, derive_seed(seed, "fraction"));
  auto model = nn::make_model(cfg, seed);
  train(*model, {&subset, nullptr, nullptr}, spec, seed, spec.epochs);
  scores->clear();
  for (const DatasetSplit* t : tests) scores->push_back(plain_accuracy(*model, eval_inputs(*t, {}), labels_of(*t)));
  return scores->front();
}

// --- 8 ----------------------------------------------------------------------

Outcome fraction_trend() {
  const Splits data = load_splits(rotated_source());
  const std::vector<double> fractions{0.25, 0.5, 1.0};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  bool pass = true;
  std::string detail;
  for (nn::Arch arch : {nn::Arch::simpleview, nn::Arch::pointnet_lite}) {
    nn::ModelConfig cfg;
    cfg.arch = arch;
    std::vector<double> means;
    for (double f : fractions) {
      ProtocolSpec spec = trend_spec(50);
      spec.train_fraction = f;
      std::vector<double> xs, s;
      for (std::uint64_t seed : seeds) xs.push_back(train_and_score(cfg, spec, data.train, {&data.test}, seed, &s));
      means.push_back(mean_of(xs));
      std::cout << "  " << to_string(arch) << " fraction " << f << " mean " << fmt(means.back()) << std::endl;
    }
    for (std::size_t i = 1; i < means.size(); ++i)
      if (means[i] < means[i - 1] - 0.005) pass = false;
    detail += std::string(to_string(arch)) + " " + fmt(100 * means[0]) + " / " + fmt(100 * means[1]) + " / " +
              fmt(100 * means[2]) + " %; ";
  }
  return {pass, detail + "fractions 0.25 / 0.5 / 1.0"};
}

// --- 9 ----------------------------------------------------------------------

struct Proc {
  int code = -1;
  std::string err;
};

Proc run_cli(const std::string& args, const fs::path& scratch) {
  const std::string cmd = std::string(ORTHOVIEW_CLI) + " " + args + " > /dev/null 2> " + (scratch / "err").string();
  const int status = std::system(cmd.c_str());
  std::ifstream in(scratch / "err");
  std::ostringstream s;
  s << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = s.str();
  }
  return out;
}

Outcome manifest_replay() {
  const fs::path dir = fs::temp_directory_path() / "orthoview_accept_replay";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Json compare = {{"command", "compare"},
                  {"dataset", {{"train_per_class", 4}, {"test_per_class", 2}, {"points", 256}, {"orientation", 1.0}}},
                  {"model", {{"render", {{"views", 3}}}, {"width_divisor", 8}}},
                  {"protocol", {{"epochs", 3}, {"points", 128}}},
                  {"archs", {"simpleview", "pointnet"}},
                  {"protocols", {"pointnet2", "dgcnn", "simpleview"}},
                  {"fractions", {0.5, 1.0}},
                  {"seeds", {1, 2}},
                  {"jobs", 3}};
  Json train = {{"command", "train"},
                {"dataset", {{"train_per_class", 4}, {"test_per_class", 2}, {"points", 256}}},
                {"model", {{"arch", "pointnet"}}},
                {"protocol", {{"preset", "rscnn"}, {"epochs", 3}, {"points", 128}, {"ensemble", {{"n_trials", 5}}}}},
                {"seeds", {3, 4}},
                {"jobs", 2}};
  std::size_t files = 0;
  std::vector<std::string> problems;
  for (const auto& [name, cfg] : {std::pair{"compare", compare}, std::pair{"train", train}}) {
    const fs::path a = dir / (std::string(name) + "_a"), b = dir / (std::string(name) + "_b");
    std::ofstream(dir / (std::string(name) + ".json")) << cfg.dump();
    Proc p = run_cli("run --config " + (dir / (std::string(name) + ".json")).string() + " --out " + a.string(), dir);
    if (p.code != 0) problems.push_back(std::string(name) + " failed: " + p.err);
    p = run_cli("run --config " + (a / "manifest.json").string() + " --out " + b.string() + " --jobs 1", dir);
    if (p.code != 0) problems.push_back(std::string(name) + " replay failed: " + p.err);
    if (!problems.empty()) break;
    const auto ta = tree_bytes(a), tb = tree_bytes(b);
    files += ta.size();
    if (ta != tb) problems.push_back(std::string(name) + " outputs differ");
  }
  fs::remove_all(dir);
  std::string detail = std::to_string(files) + " output files compared byte for byte (original at 2-3 jobs, replay at 1)";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty() && files > 0, detail};
}

// --- 10 ---------------------------------------------------------------------

Outcome corruption_robustness() {
  DatasetSource src;
  src.seed = 23;
  src.train_per_class = 40;
  src.test_per_class = 50;
  src.points = 512;
  const Splits data = load_splits(src);
  CorruptionSpec rot;
  rot.rotate = true;
  CorruptionSpec full = rot;
  full.background = CorruptionSpec::kDefaultBackground;
  full.hole_radius = CorruptionSpec::kDefaultHoleRadius;
  const DatasetSplit test_rot = corrupt_split(data.test, rot, 99), test_full = corrupt_split(data.test, full, 99);
  const std::vector<const DatasetSplit*> tests{&data.test, &test_rot, &test_full};

  bool pass = true;
  std::string detail;
  for (nn::Arch arch : {nn::Arch::simpleview, nn::Arch::pointnet_lite}) {
    nn::ModelConfig cfg;
    cfg.arch = arch;
    // [augmented][clean, rotated, full]
    std::array<std::array<std::vector<double>, 3>, 2> acc;
    for (int aug : {0, 1})
      for (std::uint64_t seed : kSeeds) {
        ProtocolSpec spec = trend_spec(50);
        spec.augment.rotate_any = aug == 1;
        std::vector<double> s;
        train_and_score(cfg, spec, data.train, tests, seed, &s);
        for (int t = 0; t < 3; ++t) acc[aug][t].push_back(s[t]);
        std::cout << "  " << to_string(arch) << " rotation-aug " << aug << " seed " << seed << " clean " << fmt(s[0])
                  << " rotated " << fmt(s[1]) << " corrupted " << fmt(s[2]) << std::endl;
      }
    const double clean = mean_of(acc[0][0]), rot0 = mean_of(acc[0][1]), full0 = mean_of(acc[0][2]);
    const double rot1 = mean_of(acc[1][1]);
    const double drop = clean - rot0, recovered = rot1 - rot0;
    const bool ok = full0 < clean && recovered >= 0.5 * drop;
    pass = pass && ok;
    detail += std::string(to_string(arch)) + ": clean " + fmt(100 * clean) + ", corrupted " + fmt(100 * full0) +
              ", rotation drop " + fmt(100 * drop, 3) + " pt, recovered " + fmt(100 * recovered, 3) + " pt; ";
  }
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient integrity", gradient_integrity},
      {"projection oracle", projection_oracle},
      {"permutation invariance", permutation_invariance},
      {"parameter audit", parameter_audit},
      {"loss identities", loss_identities},
      {"views ablation trend", views_trend},
      {"protocol inflation", protocol_inflation},
      {"data fraction monotonicity", fraction_trend},
      {"manifest reproducibility", manifest_replay},
      {"corruption robustness", corruption_robustness},
  };
  std::set<std::size_t> only;
  if (const char* env = std::getenv("ORTHOVIEW_ACCEPT")) {
    std::istringstream in(env);
    for (std::string tok; std::getline(in, tok, ',');) only.insert(std::stoul(tok));
  }
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
