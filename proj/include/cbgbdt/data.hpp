#ifndef CBGBDT_DATA_HPP_
#define CBGBDT_DATA_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cbgbdt/common.hpp"

namespace cbgbdt {

enum class TaskKind { Binary, MultiClass, MultiLabel };

/// Task kind plus class/label count K. Binary always has K = 2.
struct Task {
  TaskKind kind = TaskKind::Binary;
  int n_classes = 2;

  static Task binary() { return {TaskKind::Binary, 2}; }
  static Task multiclass(int k);
  static Task multilabel(int k);

  /// Width of the raw-score vector: 1 for Binary, K otherwise.
  int n_outputs() const { return kind == TaskKind::Binary ? 1 : n_classes; }

  bool operator==(const Task&) const = default;
};

std::string task_kind_name(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

/// Dense row-major feature table. Missing cells are tracked in a mask and
/// stored as 0.0 in `values`; every unmasked value is finite.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<double> values,
                std::vector<std::uint8_t> missing = {});

  std::size_t rows() const { return n_rows_; }
  std::size_t cols() const { return n_cols_; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * n_cols_ + c]; }
  bool is_missing(std::size_t r, std::size_t c) const {
    return !missing_.empty() && missing_[r * n_cols_ + c] != 0;
  }
  bool has_missing() const { return !missing_.empty(); }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * n_cols_, n_cols_}; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<std::uint8_t>& missing_mask() const { return missing_; }

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> missing_;
};

/// Labels for one of the three task kinds.
///  Binary / MultiClass: one class index per sample.
///  MultiLabel: an n x K matrix of {0,1}.
class LabelBlock {
 public:
  LabelBlock() = default;
  static LabelBlock binary(std::vector<int> labels);
  static LabelBlock multiclass(std::vector<int> labels, int n_classes);
  static LabelBlock multilabel(std::vector<std::uint8_t> matrix, std::size_t n_samples, int n_labels);

  const Task& task() const { return task_; }
  std::size_t size() const { return n_; }

  /// Class index (Binary / MultiClass only).
  int cls(std::size_t i) const { return classes_[i]; }
  /// Label bit (MultiLabel only).
  std::uint8_t label(std::size_t i, int k) const { return matrix_[i * task_.n_classes + k]; }

  /// Target per raw-score output: y for Binary, one-hot for MultiClass,
  /// label bits for MultiLabel. Writes n_outputs() values.
  void targets(std::size_t i, std::span<double> out) const;

  /// Binary: {negatives, positives}; MultiClass: per-class counts;
  /// MultiLabel: per-label positive counts.
  std::vector<std::size_t> counts() const;
  std::vector<std::size_t> counts(std::span<const std::size_t> rows) const;

  const std::vector<int>& classes() const { return classes_; }
  const std::vector<std::uint8_t>& matrix() const { return matrix_; }

 private:
  Task task_;
  std::size_t n_ = 0;
  std::vector<int> classes_;
  std::vector<std::uint8_t> matrix_;
};

struct Dataset {
  FeatureMatrix x;
  LabelBlock y;
  std::vector<std::string> feature_names;
  std::vector<std::string> label_names;

  Dataset() = default;
  Dataset(FeatureMatrix features, LabelBlock labels, std::vector<std::string> names = {});

  std::size_t size() const { return x.rows(); }
  const Task& task() const { return y.task(); }
};

/// Which CSV columns hold labels. Exactly one of the three selectors is used:
/// explicit names, explicit 0-based indices, or a shared name prefix.
struct LabelSpec {
  std::vector<std::string> columns;
  std::vector<int> indices;
  std::string prefix;
};

/// Loads a header-first, comma-separated file. Empty cells are missing.
/// `n_classes` = 0 infers K from the data (max label + 1, or label column count).
Dataset load_csv(const std::string& path, const LabelSpec& labels, TaskKind task, int n_classes = 0);
Dataset parse_csv(const std::string& text, const LabelSpec& labels, TaskKind task, int n_classes = 0);

/// Loads `<label(s)> <idx>:<val> ...` lines with 1-based feature indices.
/// Multi-label lines carry a comma-separated list of positive label indices.
/// `n_features` = 0 infers m as the largest index seen.
Dataset load_libsvm(const std::string& path, TaskKind task, int n_classes = 0, std::size_t n_features = 0);
Dataset parse_libsvm(const std::string& text, TaskKind task, int n_classes = 0, std::size_t n_features = 0);

/// Writes a dataset as CSV (features first, then label columns) using
/// round-trip precision.
std::string to_csv(const Dataset& d);
void write_csv(const Dataset& d, const std::string& path);

/// Header plus trimmed string cells of a CSV document. Every record must
/// have as many cells as the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or -1.
  int column(const std::string& name) const;
};

CsvTable parse_csv_table(const std::string& text);

/// Features selected by column name from a CSV table; empty cells are missing.
FeatureMatrix feature_columns(const CsvTable& table, const std::vector<std::string>& names);

/// Copy of the given rows, in the given order.
FeatureMatrix take_rows(const FeatureMatrix& x, std::span<const std::size_t> rows);

/// Most frequent over least frequent class (or label) count.
double imbalance_ratio(const Dataset& d);

// ---------------------------------------------------------------------------
// Binning

/// Ascending cut points for one feature. Value v falls into bin
/// #{t : t < v}; missing values use the extra bin `missing_bin()`.
struct FeatureBins {
  std::vector<double> thresholds;

  int n_value_bins() const { return static_cast<int>(thresholds.size()) + 1; }
  int missing_bin() const { return n_value_bins(); }
  std::uint16_t bin_of(double v) const;
};

struct BinMap {
  std::vector<FeatureBins> features;
  /// Column-major bin codes for every row of the dataset that built the map:
  /// codes[f * n_rows + r].
  std::vector<std::uint16_t> codes;
  std::size_t n_rows = 0;

  std::uint16_t code(std::size_t r, std::size_t f) const { return codes[f * n_rows + r]; }
};

/// Thresholds from the given training rows; codes for every row of `x`.
BinMap build_bins(const FeatureMatrix& x, std::span<const std::size_t> train_rows, int max_bin);
BinMap build_bins(const Dataset& d, std::span<const std::size_t> train_rows, int max_bin);

/// Cut points for one feature's training values (equal-frequency quantiles,
/// midpoints between adjacent distinct values).
std::vector<double> quantile_thresholds(std::vector<double> values, int max_bin);

/// Bins `x` with existing thresholds.
std::vector<std::uint16_t> apply_bins(const FeatureMatrix& x, const std::vector<FeatureBins>& bins);

// ---------------------------------------------------------------------------
// Splits

struct Fold {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> validation;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  int k = 5;
  bool stratify = true;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<Fold> folds;

  std::string to_json() const;
  static SplitPlan from_json(const std::string& text);
};

struct SplitOptions {
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  int k = 5;
  bool stratify = true;
};

SplitPlan make_split_plan(const Dataset& d, const SplitOptions& opts);

}  // namespace cbgbdt

#endif  // CBGBDT_DATA_HPP_
