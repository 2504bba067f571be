#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "orthoview/augment.hpp"
#include "orthoview/dataset.hpp"
#include "orthoview/metrics.hpp"
#include "orthoview/nn/models.hpp"
#include "orthoview/nn/optim.hpp"

namespace orthoview {

enum class LossKind { cross_entropy, smooth };
// final: tune the epoch count on a validation split, retrain on all training
// data. best_test: keep the epoch with the highest test accuracy. last: one
// run of the configured length, no tuning.
enum class Selection { final, best_test, last };
enum class EnsembleKind { none, rotation_vote, repeated_scaling_vote };

inline std::string_view to_string(LossKind l) { return l == LossKind::cross_entropy ? "cross_entropy" : "smooth"; }
inline std::string_view to_string(Selection s) {
  switch (s) {
    case Selection::final: return "final";
    case Selection::best_test: return "best_test";
    case Selection::last: return "last";
  }
  return "?";
}
inline std::string_view to_string(EnsembleKind e) {
  switch (e) {
    case EnsembleKind::none: return "none";
    case EnsembleKind::rotation_vote: return "rotvote";
    case EnsembleKind::repeated_scaling_vote: return "rsvote";
  }
  return "?";
}

inline LossKind loss_from_string(std::string_view s) {
  if (s == "cross_entropy" || s == "ce") return LossKind::cross_entropy;
  if (s == "smooth") return LossKind::smooth;
  throw std::invalid_argument("unknown loss: " + std::string(s));
}
inline Selection selection_from_string(std::string_view s) {
  if (s == "final") return Selection::final;
  if (s == "best_test") return Selection::best_test;
  if (s == "last") return Selection::last;
  throw std::invalid_argument("unknown model selection: " + std::string(s));
}
inline EnsembleKind ensemble_from_string(std::string_view s) {
  if (s == "none") return EnsembleKind::none;
  if (s == "rotvote" || s == "rotation_vote") return EnsembleKind::rotation_vote;
  if (s == "rsvote" || s == "repeated_scaling_vote") return EnsembleKind::repeated_scaling_vote;
  throw std::invalid_argument("unknown ensemble: " + std::string(s));
}

struct EnsembleSpec {
  EnsembleKind kind = EnsembleKind::none;
  std::size_t n_rotations = 12;
  bool shuffle = true;
  std::size_t n_trials = 300;
  std::size_t n_versions = 10;
};

struct ProtocolSpec {
  std::string name = "custom";
  AugmentSpec augment;
  PointStrategy point_strategy = PointStrategy::fixed;
  LossKind loss = LossKind::smooth;
  double smoothing = 0.2;
  Selection selection = Selection::final;
  EnsembleSpec ensemble;
  std::size_t epochs = 100;
  std::size_t batch_size = 18;
  double train_fraction = 1.0;
  double val_fraction = 0.1;
  std::size_t points = 256;
  nn::AdamOptions adam;
  nn::PlateauOptions plateau;
};

inline ProtocolSpec protocol_preset(ProtocolId id) {
  ProtocolSpec p;
  p.name = std::string(to_string(id));
  p.augment = augment_preset(id);
  switch (id) {
    case ProtocolId::pointnet2:
      p.selection = Selection::final;
      p.loss = LossKind::cross_entropy;
      p.ensemble.kind = EnsembleKind::rotation_vote;
      p.point_strategy = PointStrategy::fixed;
      break;
    case ProtocolId::dgcnn:
      p.selection = Selection::best_test;
      p.loss = LossKind::smooth;
      p.ensemble.kind = EnsembleKind::none;
      p.point_strategy = PointStrategy::fixed;
      break;
    case ProtocolId::rscnn:
      p.selection = Selection::best_test;
      p.loss = LossKind::cross_entropy;
      p.ensemble.kind = EnsembleKind::repeated_scaling_vote;
      p.point_strategy = PointStrategy::resampled;
      break;
    case ProtocolId::simpleview:
      p.selection = Selection::final;
      p.loss = LossKind::smooth;
      p.ensemble.kind = EnsembleKind::none;
      p.point_strategy = PointStrategy::fixed;
      break;
  }
  return p;
}

inline void validate(const ProtocolSpec& p) {
  validate(p.augment);
  if (p.epochs == 0) throw std::invalid_argument("protocol: epochs must be positive");
  if (p.batch_size < 2) throw std::invalid_argument("protocol: batch size must be at least 2");
  if (p.points == 0) throw std::invalid_argument("protocol: points must be positive");
  if (!(p.train_fraction > 0.0 && p.train_fraction <= 1.0))
    throw std::invalid_argument("protocol: train fraction must lie in (0, 1]");
  if (!(p.val_fraction > 0.0 && p.val_fraction < 1.0))
    throw std::invalid_argument("protocol: validation fraction must lie in (0, 1)");
  if (!(p.smoothing >= 0.0 && p.smoothing < 1.0)) throw std::invalid_argument("protocol: smoothing must lie in [0, 1)");
  if (!(p.adam.lr >= 0.0)) throw std::invalid_argument("protocol: learning rate must be >= 0");
  if (p.ensemble.n_rotations == 0 || p.ensemble.n_trials == 0 || p.ensemble.n_versions == 0)
    throw std::invalid_argument("protocol: ensemble counts must be positive");
}

// ---------------------------------------------------------------------------
// Validation split

// Class-stratified split; each class keeps at least one training sample and
// contributes max(1, round(fraction * count)) validation samples.
inline std::pair<DatasetSplit, DatasetSplit> split_validation(const DatasetSplit& train, double fraction,
                                                              std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split_validation: fraction must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train.size(); ++i) by_class[*train.clouds[i].label].push_back(i);
  std::vector<bool> to_val(train.size(), false);
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2)
      throw std::invalid_argument("split_validation: class " + train.class_names.at(label) + " has fewer than 2 samples");
    RandomStream rng(seed, "validation-split", static_cast<std::uint64_t>(label));
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * idx.size())));
    k = std::min(k, idx.size() - 1);
    for (std::size_t i = 0; i < k; ++i) to_val[idx[i]] = true;
  }
  DatasetSplit tr, val;
  tr.class_names = val.class_names = train.class_names;
  tr.role = SplitRole::train;
  val.role = SplitRole::validation;
  for (std::size_t i = 0; i < train.size(); ++i) (to_val[i] ? val : tr).clouds.push_back(train.clouds[i]);
  return {std::move(tr), std::move(val)};
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
  std::size_t points = 256;
  std::uint64_t seed = 0;  // keys the fixed evaluation subset of each test object
  std::size_t batch = 32;
};

inline std::vector<PointCloud> eval_inputs(const DatasetSplit& split, const EvalOptions& opt) {
  std::vector<PointCloud> out;
  out.reserve(split.size());
  for (const auto& c : split.clouds) out.push_back(sample_points(c, opt.points, PointStrategy::fixed, 0, opt.seed));
  return out;
}

// Softmax probabilities for every cloud, computed in inference batches.
inline std::vector<std::vector<double>> batched_proba(nn::Classifier& model, std::span<const PointCloud> clouds,
                                                      std::size_t batch) {
  std::vector<std::vector<double>> out;
  out.reserve(clouds.size());
  for (std::size_t i = 0; i < clouds.size(); i += batch) {
    auto part = nn::predict_proba(model, clouds.subspan(i, std::min(batch, clouds.size() - i)));
    for (auto& p : part) out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<int> labels_of(const DatasetSplit& split) {
  std::vector<int> y;
  for (const auto& c : split.clouds) y.push_back(*c.label);
  return y;
}

inline std::vector<int> argmax_rows(const std::vector<std::vector<double>>& probs) {
  std::vector<int> out;
  for (const auto& p : probs) out.push_back(nn::argmax(p));
  return out;
}

inline double plain_accuracy(nn::Classifier& model, const std::vector<PointCloud>& inputs, const std::vector<int>& truth,
                             std::size_t batch = 32) {
  const auto pred = argmax_rows(batched_proba(model, inputs, batch));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

// Averages softmax outputs over y-rotations by 2 pi k / n, each optionally
// point-shuffled, and returns the averaged probabilities.
inline std::vector<double> rotation_vote_proba(nn::Classifier& model, const PointCloud& cloud, std::size_t n_rotations,
                                               bool shuffle, std::uint64_t seed) {
  if (n_rotations == 0) throw std::invalid_argument("rotation_vote: need at least one rotation");
  std::vector<PointCloud> versions;
  for (std::size_t k = 0; k < n_rotations; ++k) {
    PointCloud v = rotate_y(cloud, 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_rotations));
    if (shuffle) {
      RandomStream rng(seed, "rotation-vote-shuffle", cloud.id, k);
      std::shuffle(v.points.begin(), v.points.end(), rng);
    }
    versions.push_back(std::move(v));
  }
  const auto probs = nn::predict_proba(model, versions);
  std::vector<double> avg(probs.front().size(), 0.0);
  for (const auto& p : probs)
    for (std::size_t j = 0; j < p.size(); ++j) avg[j] += p[j];
  for (double& a : avg) a /= static_cast<double>(n_rotations);
  return avg;
}

inline int rotation_vote(nn::Classifier& model, const PointCloud& cloud, std::size_t n_rotations, bool shuffle,
                         std::uint64_t seed) {
  return nn::argmax(rotation_vote_proba(model, cloud, n_rotations, shuffle, seed));
}

struct ScalingVoteResult {
  double best_accuracy = 0.0;
  std::size_t best_trial = 0;
  std::vector<double> trial_accuracy;
  std::vector<int> best_predictions;

  double mean_accuracy() const {
    double s = 0.0;
    for (double a : trial_accuracy) s += a;
    return s / static_cast<double>(trial_accuracy.size());
  }
};

// Each trial predicts every test object from the averaged softmax of
// `n_versions` randomly rescaled, randomly resampled copies; the best trial
// accuracy is reported along with the whole trial stream.
inline ScalingVoteResult repeated_scaling_vote(nn::Classifier& model, const DatasetSplit& test, std::size_t n_trials,
                                               std::size_t n_versions, std::uint64_t seed, const ScaleOptions& scale,
                                               const EvalOptions& opt = {}) {
  if (n_trials == 0 || n_versions == 0) throw std::invalid_argument("repeated_scaling_vote: counts must be positive");
  const std::vector<int> truth = labels_of(test);
  ScalingVoteResult r;
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    std::vector<PointCloud> versions;
    versions.reserve(test.size() * n_versions);
    for (const auto& cloud : test.clouds)
      for (std::size_t v = 0; v < n_versions; ++v) {
        const std::uint64_t epoch = trial * n_versions + v;
        PointCloud c = sample_points(cloud, opt.points, PointStrategy::resampled, epoch, seed);
        RandomStream rng(seed, "scaling-vote", cloud.id, epoch);
        versions.push_back(random_scale(c, scale.lo, scale.hi, rng));
      }
    const auto probs = batched_proba(model, versions, opt.batch);
    std::vector<int> pred;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      std::vector<double> avg(probs[i * n_versions].size(), 0.0);
      for (std::size_t v = 0; v < n_versions; ++v)
        for (std::size_t j = 0; j < avg.size(); ++j) avg[j] += probs[i * n_versions + v][j];
      pred.push_back(nn::argmax(avg));
      correct += pred.back() == truth[i];
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(test.size());
    r.trial_accuracy.push_back(acc);
    if (trial == 0 || acc > r.best_accuracy) {
      r.best_accuracy = acc;
      r.best_trial = trial;
      r.best_predictions = std::move(pred);
    }
  }
  return r;
}

struct Evaluation {
  Metrics metrics;
  std::optional<ScalingVoteResult> scaling_vote;
};

// Metrics of `model` on `split` under the chosen ensemble. For the repeated
// scaling vote the metrics are those of the best trial.
inline Evaluation evaluate(nn::Classifier& model, const DatasetSplit& split, const EnsembleSpec& ensemble,
                           const ScaleOptions& scale, std::uint64_t seed, const EvalOptions& opt = {}) {
  if (split.clouds.empty()) throw std::invalid_argument("evaluate: empty split");
  const std::vector<int> truth = labels_of(split);
  Evaluation ev;
  std::vector<int> pred;
  switch (ensemble.kind) {
    case EnsembleKind::none: pred = argmax_rows(batched_proba(model, eval_inputs(split, opt), opt.batch)); break;
    case EnsembleKind::rotation_vote:
      for (const auto& c : eval_inputs(split, opt))
        pred.push_back(rotation_vote(model, c, ensemble.n_rotations, ensemble.shuffle, seed));
      break;
    case EnsembleKind::repeated_scaling_vote:
      ev.scaling_vote = repeated_scaling_vote(model, split, ensemble.n_trials, ensemble.n_versions, seed, scale, opt);
      pred = ev.scaling_vote->best_predictions;
      break;
  }
  ev.metrics = compute_metrics(pred, truth, split.num_classes());
  return ev;
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double lr = 0.0;
  std::optional<double> val_acc;
  std::optional<double> test_acc;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  TrainLog log;
  nn::StateDict final_state;
  nn::AdamState optimizer;
  double final_lr = 0.0;
  // Snapshot at the first epoch reaching the maximum test accuracy.
  std::optional<nn::StateDict> best_test_state;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainInputs {
  const DatasetSplit* train = nullptr;
  const DatasetSplit* validation = nullptr;  // optional, drives the scheduler
  const DatasetSplit* test = nullptr;        // optional, recorded per epoch
};

// Mini-batches over a per-epoch shuffled order; a trailing single sample is
// folded into the previous batch so train-mode batchnorm always sees >= 2.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                          std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  RandomStream rng(seed, "batch-order", 0, epoch);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

// Clouds fed to the network for one training batch: point sampling, then
// augmentation, both keyed by (seed, object, epoch).
inline std::vector<PointCloud> training_batch(const DatasetSplit& data, std::span<const std::size_t> idx,
                                              const ProtocolSpec& spec, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<PointCloud> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    const PointCloud sampled = sample_points(data.clouds[i], spec.points, spec.point_strategy, epoch, seed);
    out.push_back(augment(sampled, spec.augment, seed, epoch));
  }
  return out;
}

inline TrainResult train(nn::Classifier& model, const TrainInputs& data, const ProtocolSpec& spec, std::uint64_t seed,
                         std::size_t epochs, const EvalOptions& eval = {}) {
  validate(spec);
  if (!data.train || data.train->clouds.size() < 2) throw std::invalid_argument("train: need at least 2 training samples");
  const DatasetSplit& train_set = *data.train;

  std::vector<PointCloud> val_inputs, test_inputs;
  std::vector<int> val_truth, test_truth;
  if (data.validation) val_inputs = eval_inputs(*data.validation, eval), val_truth = labels_of(*data.validation);
  if (data.test) test_inputs = eval_inputs(*data.test, eval), test_truth = labels_of(*data.test);

  nn::PlateauOptions plateau = spec.plateau;
  plateau.maximize = data.validation != nullptr;  // else monitor training loss
  nn::PlateauScheduler scheduler(spec.adam.lr, plateau);
  nn::AdamOptions adam = spec.adam;
  TrainResult result;
  const double eps = spec.loss == LossKind::smooth ? spec.smoothing : 0.0;
  double best_test = -1.0;

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    adam.lr = scheduler.lr();
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : make_batches(train_set.size(), spec.batch_size, seed, epoch)) {
      const std::vector<PointCloud> clouds = training_batch(train_set, batch, spec, seed, epoch);
      std::vector<int> labels;
      for (const auto& c : clouds) labels.push_back(*c.label);
      const auto diagnose = [&] {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " (seed " << seed << ", batch of objects";
        for (const auto& c : clouds) msg << ' ' << c.id;
        msg << ")";
        return TrainingError(msg.str());
      };
      const nn::Tensor logits = model.forward(clouds, true);
      nn::Tensor loss;
      try {
        loss = nn::smooth_loss(logits, labels, eps);
      } catch (const std::domain_error&) {
        throw diagnose();
      }
      if (!std::isfinite(loss.item())) throw diagnose();
      model.params().zero_grad();
      loss.backward();
      nn::adam_step(model.params(), result.optimizer, adam);
      loss_sum += loss.item() * static_cast<double>(batch.size());
      const std::size_t k = logits.dim(1);
      for (std::size_t i = 0; i < labels.size(); ++i)
        correct += nn::argmax(logits.values().subspan(i * k, k)) == labels[i];
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = adam.lr;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (data.validation) rec.val_acc = plain_accuracy(model, val_inputs, val_truth, eval.batch);
    if (data.test) {
      rec.test_acc = plain_accuracy(model, test_inputs, test_truth, eval.batch);
      if (*rec.test_acc > best_test) {
        best_test = *rec.test_acc;
        result.best_test_state = model.params().state();
      }
    }
    scheduler.step(data.validation ? *rec.val_acc : rec.train_loss);
    result.log.epochs.push_back(rec);
  }
  result.final_state = model.params().state();
  result.final_lr = scheduler.lr();
  return result;
}

// ---------------------------------------------------------------------------
// Model selection

// 1-based epoch maximizing the validation (final) or test (best_test) curve;
// ties go to the earliest epoch. `last` picks the last epoch.
inline std::size_t select_epoch(const TrainLog& log, Selection mode) {
  if (log.epochs.empty()) throw std::invalid_argument("select_epoch: empty log");
  if (mode == Selection::last) return log.epochs.back().epoch;
  std::size_t best = 0;
  double best_value = -1.0;
  for (std::size_t i = 0; i < log.epochs.size(); ++i) {
    const auto& curve = mode == Selection::final ? log.epochs[i].val_acc : log.epochs[i].test_acc;
    if (!curve)
      throw std::invalid_argument(std::string("select_epoch: log has no ") +
                                  (mode == Selection::final ? "validation" : "test") + " accuracy at epoch " +
                                  std::to_string(log.epochs[i].epoch));
    if (*curve > best_value) best_value = *curve, best = i;
  }
  return log.epochs[best].epoch;
}

struct FitResult {
  std::size_t selected_epoch = 0;
  nn::StateDict state;
  nn::AdamState optimizer;
  double lr = 0.0;
  TrainLog log;                         // the run whose checkpoint is returned
  std::optional<TrainLog> tuning_log;   // final selection: the validation run
  double final_epoch_test_acc = 0.0;    // last point of the recorded test curve
  double best_test_acc = 0.0;           // maximum of the recorded test curve
};

// Trains a fresh model of `cfg` under `spec` and returns the selected
// checkpoint. The model is initialized from `seed` in every phase.
inline FitResult fit(const nn::ModelConfig& cfg, const DatasetSplit& train_full, const DatasetSplit& test,
                     const ProtocolSpec& spec, std::uint64_t seed, const EvalOptions& eval = {}) {
  validate(spec);
  const DatasetSplit train_set = stratified_subset(train_full, spec.train_fraction, derive_seed(seed, "fraction"));
  FitResult out;
  const auto summarize_test = [&](const TrainLog& log) {
    out.final_epoch_test_acc = log.epochs.back().test_acc.value_or(0.0);
    out.best_test_acc = 0.0;
    for (const auto& e : log.epochs) out.best_test_acc = std::max(out.best_test_acc, e.test_acc.value_or(0.0));
  };

  if (spec.selection == Selection::final) {
    const auto [tr, val] = split_validation(train_set, spec.val_fraction, derive_seed(seed, "validation"));
    auto tuning_model = nn::make_model(cfg, seed);
    TrainResult tuning = train(*tuning_model, {&tr, &val, nullptr}, spec, seed, spec.epochs, eval);
    out.selected_epoch = select_epoch(tuning.log, Selection::final);
    out.tuning_log = tuning.log;

    auto model = nn::make_model(cfg, seed);
    TrainResult full = train(*model, {&train_set, nullptr, &test}, spec, seed, out.selected_epoch, eval);
    out.state = std::move(full.final_state);
    out.optimizer = std::move(full.optimizer);
    out.lr = full.final_lr;
    out.log = std::move(full.log);
    summarize_test(out.log);
    return out;
  }

  auto model = nn::make_model(cfg, seed);
  TrainResult run = train(*model, {&train_set, nullptr, &test}, spec, seed, spec.epochs, eval);
  out.log = run.log;
  summarize_test(out.log);
  out.selected_epoch = select_epoch(run.log, spec.selection);
  out.optimizer = std::move(run.optimizer);
  out.lr = run.final_lr;
  out.state = spec.selection == Selection::best_test ? std::move(*run.best_test_state) : std::move(run.final_state);
  return out;
}

// ---------------------------------------------------------------------------
// Multi-seed runs

struct RunRecord {
  std::string arch;
  std::string protocol;
  std::uint64_t seed = 0;
  double overall_acc = 0.0;
  double class_acc = 0.0;
  std::size_t selected_epoch = 0;
  std::string ensemble;
  double fraction = 1.0;
  double final_epoch_test_acc = 0.0;
  double best_test_acc = 0.0;
  std::optional<ScalingVoteResult> scaling_vote;
  Metrics metrics;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean_std: no values");
  MeanStd r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

struct ProtocolReport {
  std::vector<RunRecord> runs;
  MeanStd overall;
  MeanStd class_acc;
};

inline RunRecord make_record(const nn::ModelConfig& cfg, const ProtocolSpec& spec, std::uint64_t seed,
                             const FitResult& fitted, const Evaluation& ev) {
  RunRecord r;
  r.arch = std::string(nn::to_string(cfg.arch));
  r.protocol = spec.name;
  r.seed = seed;
  r.overall_acc = ev.metrics.overall_acc;
  r.class_acc = ev.metrics.class_acc;
  r.selected_epoch = fitted.selected_epoch;
  r.ensemble = std::string(to_string(spec.ensemble.kind));
  r.fraction = spec.train_fraction;
  r.final_epoch_test_acc = fitted.final_epoch_test_acc;
  r.best_test_acc = fitted.best_test_acc;
  r.scaling_vote = ev.scaling_vote;
  r.metrics = ev.metrics;
  return r;
}

// Fits one seed and evaluates the selected weights with the protocol's ensemble.
inline RunRecord run_single(const nn::ModelConfig& cfg, const ProtocolSpec& spec, const DatasetSplit& train_set,
                            const DatasetSplit& test, std::uint64_t seed, const EvalOptions& eval = {},
                            FitResult* fitted_out = nullptr) {
  FitResult fitted = fit(cfg, train_set, test, spec, seed, eval);
  auto model = nn::make_model(cfg, seed);
  model->params().load_state(fitted.state);
  const Evaluation ev = evaluate(*model, test, spec.ensemble, spec.augment.scale, derive_seed(seed, "ensemble"), eval);
  RunRecord r = make_record(cfg, spec, seed, fitted, ev);
  if (fitted_out) *fitted_out = std::move(fitted);
  return r;
}

inline ProtocolReport summarize(std::vector<RunRecord> runs) {
  ProtocolReport rep;
  std::vector<double> acc, cls;
  for (const auto& r : runs) acc.push_back(r.overall_acc), cls.push_back(r.class_acc);
  rep.overall = mean_std(acc);
  rep.class_acc = mean_std(cls);
  rep.runs = std::move(runs);
  return rep;
}

inline ProtocolReport run_protocol(const nn::ModelConfig& cfg, const ProtocolSpec& spec, const DatasetSplit& train_set,
                                   const DatasetSplit& test, std::span<const std::uint64_t> seeds,
                                   const EvalOptions& eval = {}) {
  if (seeds.empty()) throw std::invalid_argument("run_protocol: need at least one seed");
  std::vector<RunRecord> runs;
  for (std::uint64_t s : seeds) runs.push_back(run_single(cfg, spec, train_set, test, s, eval));
  return summarize(std::move(runs));
}

// The 2 x 2 grid of losses {cross_entropy, smooth} x selections {final, best_test}
// on top of a base protocol.
inline std::vector<ProtocolSpec> loss_selection_grid(const ProtocolSpec& base) {
  std::vector<ProtocolSpec> grid;
  for (Selection s : {Selection::final, Selection::best_test})
    for (LossKind l : {LossKind::cross_entropy, LossKind::smooth}) {
      ProtocolSpec p = base;
      p.selection = s;
      p.loss = l;
      p.name = base.name + "/" + std::string(to_string(l)) + "/" + std::string(to_string(s));
      grid.push_back(std::move(p));
    }
  return grid;
}

}  // namespace orthoview
