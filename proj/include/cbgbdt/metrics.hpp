#ifndef CBGBDT_METRICS_HPP_
#define CBGBDT_METRICS_HPP_

#include <span>
#include <string>
#include <vector>

#include "cbgbdt/common.hpp"
#include "cbgbdt/data.hpp"

namespace cbgbdt {

enum class Averaging { BinaryPositive, Macro, Micro };

std::string averaging_name(Averaging a);
Averaging parse_averaging(const std::string& name);
/// Positive-class F1 for Binary, macro otherwise.
Averaging default_averaging(const Task& task);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

struct MetricReport {
  std::string metric = "f1";
  Averaging averaging = Averaging::Macro;
  /// Percent scale. Binary tasks report the positive class only.
  std::vector<double> per_class;
  /// Classes whose F1 was 0/0 and set to 0.
  std::vector<bool> undefined;
  std::vector<ConfusionCounts> counts;
  double value = 0.0;
};

/// Per-class counts. Row i of `prob` belongs to sample rows[i]; MultiClass
/// predicts the row argmax, the other tasks predict p > threshold.
std::vector<ConfusionCounts> confusion(const Matrix& prob, const LabelBlock& labels,
                                       std::span<const std::size_t> rows, double threshold = 0.5);

MetricReport f1(const Matrix& prob, const LabelBlock& labels, std::span<const std::size_t> rows,
                double threshold, Averaging averaging);
/// All rows of `labels`.
MetricReport f1(const Matrix& prob, const LabelBlock& labels, double threshold, Averaging averaging);

/// F1 in percent; 0 when TP+FP+FN = 0.
double f1_percent(const ConfusionCounts& c);

struct Improvement {
  double bmp = 0.0;
  double cmp = 0.0;
  double delta = 0.0;
};

/// Best baseline, best balanced, and their difference.
Improvement improvement(std::span<const double> bmp_runs, std::span<const double> cmp_runs);

}  // namespace cbgbdt

#endif  // CBGBDT_METRICS_HPP_
