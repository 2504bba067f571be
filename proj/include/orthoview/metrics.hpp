#pragma once

#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace orthoview {

struct Metrics {
  double overall_acc = 0.0;
  // Mean recall over classes that have at least one sample.
  double class_acc = 0.0;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : confusion)
      for (std::size_t c : row) n += c;
    return n;
  }
};

inline Metrics compute_metrics(std::span<const int> predicted, std::span<const int> truth, std::size_t n_classes) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("metrics: prediction/label count mismatch");
  if (predicted.empty()) throw std::invalid_argument("metrics: empty evaluation set");
  Metrics m;
  m.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (truth[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(truth[i]) >= n_classes ||
        static_cast<std::size_t>(predicted[i]) >= n_classes)
      throw std::invalid_argument("metrics: class index out of range");
    ++m.confusion[truth[i]][predicted[i]];
    correct += predicted[i] == truth[i];
  }
  m.overall_acc = static_cast<double>(correct) / static_cast<double>(predicted.size());
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < n_classes; ++k) {
    std::size_t row = 0;
    for (std::size_t c : m.confusion[k]) row += c;
    if (row == 0) continue;
    recall_sum += static_cast<double>(m.confusion[k][k]) / static_cast<double>(row);
    ++present;
  }
  m.class_acc = recall_sum / static_cast<double>(present);
  return m;
}

// K x K counts under a header row of class names; row i is true class i.
inline void write_confusion_csv(std::ostream& out, const Metrics& m, const std::vector<std::string>& class_names) {
  if (class_names.size() != m.confusion.size()) throw std::invalid_argument("confusion: class name count mismatch");
  for (std::size_t k = 0; k < class_names.size(); ++k) out << (k ? "," : "") << class_names[k];
  out << '\n';
  for (const auto& row : m.confusion) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << row[k];
    out << '\n';
  }
}

}  // namespace orthoview
