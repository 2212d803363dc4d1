#include "cbgbdt/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace cbgbdt {

std::string averaging_name(Averaging a) {
  switch (a) {
    case Averaging::BinaryPositive: return "binary";
    case Averaging::Macro: return "macro";
    case Averaging::Micro: return "micro";
  }
  return "?";
}

Averaging parse_averaging(const std::string& name) {
  if (name == "binary" || name == "binary-positive") return Averaging::BinaryPositive;
  if (name == "macro") return Averaging::Macro;
  if (name == "micro") return Averaging::Micro;
  throw ParamError("unknown averaging '" + name + "' (expected binary, macro or micro)");
}

Averaging default_averaging(const Task& task) {
  return task.kind == TaskKind::Binary ? Averaging::BinaryPositive : Averaging::Macro;
}

double f1_percent(const ConfusionCounts& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 0.0;
  return 100.0 * static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

std::vector<ConfusionCounts> confusion(const Matrix& prob, const LabelBlock& labels,
                                       std::span<const std::size_t> rows, double threshold) {
  const Task& task = labels.task();
  const auto width = static_cast<std::size_t>(task.n_outputs());
  if (prob.rows != rows.size() || prob.cols != width) {
    throw ShapeError("prediction matrix is " + std::to_string(prob.rows) + "x" + std::to_string(prob.cols) +
                     ", expected " + std::to_string(rows.size()) + "x" + std::to_string(width));
  }
  std::vector<ConfusionCounts> counts(width);
  auto tally = [](ConfusionCounts& c, bool pred, bool truth) {
    if (pred && truth) ++c.tp;
    else if (pred) ++c.fp;
    else if (truth) ++c.fn;
    else ++c.tn;
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= labels.size()) throw ShapeError("row index out of range");
    switch (task.kind) {
      case TaskKind::Binary:
        tally(counts[0], prob(i, 0) > threshold, labels.cls(r) == 1);
        break;
      case TaskKind::MultiClass: {
        std::size_t arg = 0;
        for (std::size_t k = 1; k < width; ++k) {
          if (prob(i, k) > prob(i, arg)) arg = k;
        }
        for (std::size_t k = 0; k < width; ++k) tally(counts[k], arg == k, labels.cls(r) == static_cast<int>(k));
        break;
      }
      case TaskKind::MultiLabel:
        for (std::size_t k = 0; k < width; ++k) {
          tally(counts[k], prob(i, k) > threshold, labels.label(r, static_cast<int>(k)) != 0);
        }
        break;
    }
  }
  return counts;
}

MetricReport f1(const Matrix& prob, const LabelBlock& labels, std::span<const std::size_t> rows, double threshold,
                Averaging averaging) {
  if (averaging == Averaging::BinaryPositive && labels.task().kind != TaskKind::Binary) {
    throw ParamError("binary averaging needs a Binary task");
  }
  MetricReport rep;
  rep.averaging = averaging;
  rep.counts = confusion(prob, labels, rows, threshold);
  ConfusionCounts pooled;
  for (const auto& c : rep.counts) {
    rep.per_class.push_back(f1_percent(c));
    rep.undefined.push_back(c.tp + c.fp + c.fn == 0);
    pooled.tp += c.tp;
    pooled.fp += c.fp;
    pooled.fn += c.fn;
    pooled.tn += c.tn;
  }
  if (averaging == Averaging::Micro) {
    rep.value = f1_percent(pooled);
  } else {
    rep.value = std::accumulate(rep.per_class.begin(), rep.per_class.end(), 0.0) /
                static_cast<double>(rep.per_class.size());
  }
  return rep;
}

MetricReport f1(const Matrix& prob, const LabelBlock& labels, double threshold, Averaging averaging) {
  std::vector<std::size_t> rows(labels.size());
  std::iota(rows.begin(), rows.end(), 0);
  return f1(prob, labels, rows, threshold, averaging);
}

Improvement improvement(std::span<const double> bmp_runs, std::span<const double> cmp_runs) {
  if (bmp_runs.empty()) throw ParamError("improvement needs at least one baseline run");
  if (cmp_runs.empty()) throw ParamError("improvement needs at least one class-balanced run");
  Improvement imp;
  imp.bmp = *std::max_element(bmp_runs.begin(), bmp_runs.end());
  imp.cmp = *std::max_element(cmp_runs.begin(), cmp_runs.end());
  imp.delta = imp.cmp - imp.bmp;
  return imp;
}

}  // namespace cbgbdt
