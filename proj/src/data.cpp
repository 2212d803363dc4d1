#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cbgbdt/data.hpp"

namespace cbgbdt {

Task Task::multiclass(int k) {
  if (k < 2) throw TaskError("multi-class task needs K >= 2 classes, got " + std::to_string(k));
  return {TaskKind::MultiClass, k};
}

Task Task::multilabel(int k) {
  if (k < 2) throw TaskError("multi-label task needs K >= 2 labels, got " + std::to_string(k));
  return {TaskKind::MultiLabel, k};
}

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Binary: return "binary";
    case TaskKind::MultiClass: return "multiclass";
    case TaskKind::MultiLabel: return "multilabel";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (c != '-' && c != '_') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "binary") return TaskKind::Binary;
  if (s == "multiclass") return TaskKind::MultiClass;
  if (s == "multilabel") return TaskKind::MultiLabel;
  throw TaskError("unknown task kind '" + name + "' (expected binary, multiclass or multilabel)");
}

// ---------------------------------------------------------------------------

FeatureMatrix::FeatureMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<double> values,
                             std::vector<std::uint8_t> missing)
    : n_rows_(n_rows), n_cols_(n_cols), values_(std::move(values)), missing_(std::move(missing)) {
  if (n_rows_ < 1 || n_cols_ < 1) throw ShapeError("feature matrix needs at least one row and one column");
  if (values_.size() != n_rows_ * n_cols_) throw ShapeError("feature value count does not match rows x cols");
  if (!missing_.empty() && missing_.size() != values_.size()) throw ShapeError("missing mask has the wrong size");
  bool any_missing = false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!missing_.empty() && missing_[i]) {
      values_[i] = 0.0;
      any_missing = true;
    } else if (!std::isfinite(values_[i])) {
      throw LoadError("non-finite feature value at row " + std::to_string(i / n_cols_) + ", column " +
                      std::to_string(i % n_cols_));
    }
  }
  if (!any_missing) missing_.clear();
}

// ---------------------------------------------------------------------------

LabelBlock LabelBlock::binary(std::vector<int> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw LabelError("binary label must be 0 or 1, got " + std::to_string(labels[i]) + " at row " +
                       std::to_string(i));
    }
  }
  LabelBlock b;
  b.task_ = Task::binary();
  b.n_ = labels.size();
  b.classes_ = std::move(labels);
  return b;
}

LabelBlock LabelBlock::multiclass(std::vector<int> labels, int n_classes) {
  LabelBlock b;
  b.task_ = Task::multiclass(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      throw LabelError("class index " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                       " is outside [0, " + std::to_string(n_classes) + ")");
    }
  }
  b.n_ = labels.size();
  b.classes_ = std::move(labels);
  return b;
}

LabelBlock LabelBlock::multilabel(std::vector<std::uint8_t> matrix, std::size_t n_samples, int n_labels) {
  LabelBlock b;
  b.task_ = Task::multilabel(n_labels);
  if (matrix.size() != n_samples * static_cast<std::size_t>(n_labels)) {
    throw ShapeError("multi-label matrix has the wrong size");
  }
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    if (matrix[i] > 1) {
      throw LabelError("multi-label entry must be 0 or 1 at row " + std::to_string(i / n_labels));
    }
  }
  b.n_ = n_samples;
  b.matrix_ = std::move(matrix);
  return b;
}

void LabelBlock::targets(std::size_t i, std::span<double> out) const {
  switch (task_.kind) {
    case TaskKind::Binary:
      out[0] = classes_[i];
      break;
    case TaskKind::MultiClass:
      std::fill(out.begin(), out.end(), 0.0);
      out[classes_[i]] = 1.0;
      break;
    case TaskKind::MultiLabel:
      for (int k = 0; k < task_.n_classes; ++k) out[k] = matrix_[i * task_.n_classes + k];
      break;
  }
}

std::vector<std::size_t> LabelBlock::counts(std::span<const std::size_t> rows) const {
  std::vector<std::size_t> c(task_.n_classes, 0);
  for (std::size_t i : rows) {
    if (task_.kind == TaskKind::MultiLabel) {
      for (int k = 0; k < task_.n_classes; ++k) c[k] += matrix_[i * task_.n_classes + k];
    } else {
      ++c[classes_[i]];
    }
  }
  return c;
}

std::vector<std::size_t> LabelBlock::counts() const {
  std::vector<std::size_t> all(n_);
  for (std::size_t i = 0; i < n_; ++i) all[i] = i;
  return counts(all);
}

Dataset::Dataset(FeatureMatrix features, LabelBlock labels, std::vector<std::string> names)
    : x(std::move(features)), y(std::move(labels)), feature_names(std::move(names)) {
  if (x.rows() != y.size()) {
    throw ShapeError("label count " + std::to_string(y.size()) + " does not match sample count " +
                     std::to_string(x.rows()));
  }
  if (feature_names.empty()) {
    for (std::size_t f = 0; f < x.cols(); ++f) feature_names.push_back("f" + std::to_string(f));
  }
  if (feature_names.size() != x.cols()) throw ShapeError("feature name count does not match columns");
}

double imbalance_ratio(const Dataset& d) {
  const auto c = d.y.counts();
  const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
  if (*lo == 0) throw LabelError("imbalance ratio needs every class/label to have at least one positive");
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

// ---------------------------------------------------------------------------
// Text parsing helpers

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_int_label(std::string_view s, int& out) {
  double v;
  if (!parse_double(s, v) || v != std::floor(v) || std::abs(v) > 1e9) return false;
  out = static_cast<int>(v);
  return true;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

// Splits one CSV record; double-quoted fields may contain commas and "".
std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

LabelBlock make_labels(TaskKind task, int n_classes, std::vector<int> classes, std::vector<std::uint8_t> matrix,
                       std::size_t n, int n_label_cols) {
  switch (task) {
    case TaskKind::Binary:
      return LabelBlock::binary(std::move(classes));
    case TaskKind::MultiClass: {
      int k = n_classes;
      if (k == 0) {
        const int max_label = classes.empty() ? -1 : *std::max_element(classes.begin(), classes.end());
        k = max_label + 1;
      }
      return LabelBlock::multiclass(std::move(classes), k);
    }
    case TaskKind::MultiLabel:
      return LabelBlock::multilabel(std::move(matrix), n, n_label_cols);
  }
  throw TaskError("unknown task");
}

}  // namespace

Dataset parse_csv(const std::string& text, const LabelSpec& spec, TaskKind task, int n_classes) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw LoadError("CSV input is empty (a header row is required)");
  std::vector<std::string> header = split_csv_record(lines[0]);
  for (auto& h : header) h = std::string(trim(h));
  const std::size_t n_cols = header.size();

  std::vector<int> label_cols;
  if (!spec.columns.empty()) {
    for (const auto& name : spec.columns) {
      const auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw LoadError("label column '" + name + "' not found in header");
      label_cols.push_back(static_cast<int>(it - header.begin()));
    }
  } else if (!spec.indices.empty()) {
    for (int idx : spec.indices) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= n_cols) {
        throw LoadError("label column index " + std::to_string(idx) + " is out of range");
      }
      label_cols.push_back(idx);
    }
  } else if (!spec.prefix.empty()) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (header[c].rfind(spec.prefix, 0) == 0) label_cols.push_back(static_cast<int>(c));
    }
    if (label_cols.empty()) throw LoadError("no column starts with label prefix '" + spec.prefix + "'");
  } else {
    if (task == TaskKind::MultiLabel) throw LoadError("multi-label CSV needs explicit label columns or a prefix");
    const auto it = std::find(header.begin(), header.end(), "label");
    label_cols.push_back(it != header.end() ? static_cast<int>(it - header.begin()) : static_cast<int>(n_cols) - 1);
  }
  if (task != TaskKind::MultiLabel && label_cols.size() != 1) {
    throw LoadError(task_kind_name(task) + " task needs exactly one label column");
  }

  std::vector<char> is_label(n_cols, 0);
  for (int c : label_cols) is_label[c] = 1;
  std::vector<std::string> feature_names;
  std::vector<std::string> label_names;
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (!is_label[c]) feature_names.push_back(header[c]);
  }
  for (int c : label_cols) label_names.push_back(header[c]);
  const std::size_t n_features = feature_names.size();
  if (n_features == 0) throw LoadError("CSV has no feature columns");

  const std::size_t n = lines.size() - 1;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;
  values.reserve(n * n_features);
  missing.reserve(n * n_features);
  std::vector<int> classes;
  std::vector<std::uint8_t> matrix;

  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t line_no = r + 2;
    const auto cells = split_csv_record(lines[r + 1]);
    if (cells.size() != n_cols) {
      throw LoadError("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(n_cols));
    }
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (is_label[c]) continue;
      const std::string_view cell = trim(cells[c]);
      double v = 0.0;
      if (cell.empty()) {
        values.push_back(0.0);
        missing.push_back(1);
      } else if (parse_double(cell, v) && std::isfinite(v)) {
        values.push_back(v);
        missing.push_back(0);
      } else {
        throw LoadError("cannot parse '" + std::string(cell) + "' at line " + std::to_string(line_no) +
                        ", column '" + header[c] + "'");
      }
    }
    for (int c : label_cols) {
      int label;
      if (!parse_int_label(cells[c], label)) {
        throw LabelError("label '" + std::string(trim(cells[c])) + "' at line " + std::to_string(line_no) +
                         ", column '" + header[c] + "' is not an integer");
      }
      if (task == TaskKind::MultiLabel) {
        if (label != 0 && label != 1) {
          throw LabelError("multi-label value must be 0 or 1 at line " + std::to_string(line_no) + ", column '" +
                           header[c] + "'");
        }
        matrix.push_back(static_cast<std::uint8_t>(label));
      } else {
        if (task == TaskKind::Binary && label != 0 && label != 1) {
          throw LabelError("binary label must be 0 or 1, got " + std::to_string(label) + " at line " +
                           std::to_string(line_no));
        }
        if (label < 0) throw LabelError("negative class index at line " + std::to_string(line_no));
        classes.push_back(label);
      }
    }
  }
  if (n == 0) throw LoadError("CSV has a header but no data rows");
  LabelBlock labels = make_labels(task, n_classes, std::move(classes), std::move(matrix), n,
                                  static_cast<int>(label_cols.size()));
  Dataset d(FeatureMatrix(n, n_features, std::move(values), std::move(missing)), std::move(labels),
            std::move(feature_names));
  d.label_names = std::move(label_names);
  return d;
}

Dataset load_csv(const std::string& path, const LabelSpec& labels, TaskKind task, int n_classes) {
  return parse_csv(read_file(path), labels, task, n_classes);
}

Dataset parse_libsvm(const std::string& text, TaskKind task, int n_classes, std::size_t n_features) {
  struct Entry {
    std::size_t index;
    double value;
  };
  std::vector<std::vector<Entry>> rows;
  std::vector<int> classes;
  std::vector<std::vector<int>> label_sets;
  std::size_t max_index = 0;
  int max_label = -1;

  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    std::string_view line = lines[ln];
    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(ln + 1);

    std::vector<std::string_view> tokens;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      std::size_t end = pos;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
      if (end > pos) tokens.push_back(line.substr(pos, end - pos));
      pos = end;
    }

    std::size_t first_feature = 0;
    if (!tokens.empty() && tokens[0].find(':') == std::string_view::npos) {
      first_feature = 1;
      if (task == TaskKind::MultiLabel) {
        std::vector<int> set;
        std::string_view rest = tokens[0];
        while (!rest.empty()) {
          const std::size_t comma = rest.find(',');
          const std::string_view tok = rest.substr(0, comma);
          int label;
          if (!parse_int_label(tok, label) || label < 0) {
            throw LabelError("bad label '" + std::string(tok) + "' at " + where);
          }
          set.push_back(label);
          max_label = std::max(max_label, label);
          if (comma == std::string_view::npos) break;
          rest = rest.substr(comma + 1);
        }
        label_sets.push_back(std::move(set));
      } else {
        int label;
        if (!parse_int_label(tokens[0], label)) {
          throw LabelError("label '" + std::string(tokens[0]) + "' at " + where + " is not an integer");
        }
        if (task == TaskKind::Binary && label != 0 && label != 1) {
          throw LabelError("binary label must be 0 or 1, got " + std::to_string(label) + " at " + where);
        }
        if (label < 0) throw LabelError("negative class index at " + where);
        classes.push_back(label);
      }
    } else if (task == TaskKind::MultiLabel) {
      label_sets.emplace_back();
    } else {
      throw LabelError("missing label at " + where);
    }

    std::vector<Entry> entries;
    std::size_t prev = 0;
    for (std::size_t t = first_feature; t < tokens.size(); ++t) {
      const std::size_t colon = tokens[t].find(':');
      if (colon == std::string_view::npos) throw LoadError("expected index:value, got '" + std::string(tokens[t]) + "' at " + where);
      double idx_d, val;
      if (!parse_double(tokens[t].substr(0, colon), idx_d) || idx_d < 1 || idx_d != std::floor(idx_d)) {
        throw LoadError("bad feature index in '" + std::string(tokens[t]) + "' at " + where);
      }
      const auto idx = static_cast<std::size_t>(idx_d);
      if (idx <= prev) throw LoadError("feature indices must be strictly increasing at " + where);
      if (!parse_double(tokens[t].substr(colon + 1), val) || !std::isfinite(val)) {
        throw LoadError("bad feature value in '" + std::string(tokens[t]) + "' at " + where);
      }
      prev = idx;
      max_index = std::max(max_index, idx);
      entries.push_back({idx, val});
    }
    rows.push_back(std::move(entries));
  }
  if (rows.empty()) throw LoadError("LibSVM input has no data lines");

  const std::size_t m = n_features > 0 ? n_features : max_index;
  if (max_index > m) throw LoadError("feature index " + std::to_string(max_index) + " exceeds n_features");
  if (m == 0) throw LoadError("LibSVM input has no features");
  const std::size_t n = rows.size();
  std::vector<double> values(n * m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (const auto& e : rows[r]) values[r * m + (e.index - 1)] = e.value;
  }

  std::vector<std::uint8_t> matrix;
  int n_label_cols = 0;
  if (task == TaskKind::MultiLabel) {
    n_label_cols = n_classes > 0 ? n_classes : max_label + 1;
    if (max_label >= n_label_cols) throw LabelError("label index exceeds declared label count");
    matrix.assign(n * static_cast<std::size_t>(n_label_cols), 0);
    for (std::size_t r = 0; r < n; ++r) {
      for (int l : label_sets[r]) matrix[r * n_label_cols + l] = 1;
    }
  }
  LabelBlock labels = make_labels(task, n_classes, std::move(classes), std::move(matrix), n, n_label_cols);
  return Dataset(FeatureMatrix(n, m, std::move(values)), std::move(labels));
}

Dataset load_libsvm(const std::string& path, TaskKind task, int n_classes, std::size_t n_features) {
  return parse_libsvm(read_file(path), task, n_classes, n_features);
}

std::string to_csv(const Dataset& d) {
  std::ostringstream out;
  const Task& task = d.task();
  std::vector<std::string> label_names = d.label_names;
  const std::size_t n_label_cols = task.kind == TaskKind::MultiLabel ? task.n_classes : 1;
  if (label_names.size() != n_label_cols) {
    label_names.clear();
    if (n_label_cols == 1) {
      label_names.push_back("label");
    } else {
      for (std::size_t k = 0; k < n_label_cols; ++k) label_names.push_back("label_" + std::to_string(k));
    }
  }
  bool first = true;
  for (const auto& name : d.feature_names) {
    out << (first ? "" : ",") << name;
    first = false;
  }
  for (const auto& name : label_names) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t c = 0; c < d.x.cols(); ++c) {
      if (c) out << ',';
      if (!d.x.is_missing(r, c)) out << format_double(d.x(r, c));
    }
    if (task.kind == TaskKind::MultiLabel) {
      for (int k = 0; k < task.n_classes; ++k) out << ',' << static_cast<int>(d.y.label(r, k));
    } else {
      out << ',' << d.y.cls(r);
    }
    out << '\n';
  }
  return out.str();
}

void write_csv(const Dataset& d, const std::string& path) { write_file_atomic(path, to_csv(d)); }

FeatureMatrix take_rows(const FeatureMatrix& x, std::span<const std::size_t> rows) {
  const std::size_t m = x.cols();
  std::vector<double> values(rows.size() * m);
  std::vector<std::uint8_t> missing;
  if (x.has_missing()) missing.resize(rows.size() * m);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) throw ShapeError("row index out of range");
    for (std::size_t c = 0; c < m; ++c) {
      values[i * m + c] = x(rows[i], c);
      if (!missing.empty()) missing[i * m + c] = x.is_missing(rows[i], c) ? 1 : 0;
    }
  }
  return FeatureMatrix(rows.size(), m, std::move(values), std::move(missing));
}

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable parse_csv_table(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw LoadError("CSV document is empty");
  CsvTable t;
  for (auto& cell : split_csv_record(lines[0])) t.header.emplace_back(trim(cell));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    std::vector<std::string> row;
    for (auto& cell : split_csv_record(lines[i])) row.emplace_back(trim(cell));
    if (row.size() != t.header.size()) {
      throw LoadError("line " + std::to_string(i + 1) + ": expected " + std::to_string(t.header.size()) +
                      " cells, got " + std::to_string(row.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

FeatureMatrix feature_columns(const CsvTable& table, const std::vector<std::string>& names) {
  std::vector<int> cols;
  for (const auto& n : names) {
    const int c = table.column(n);
    if (c < 0) throw ShapeError("input has no column '" + n + "'");
    cols.push_back(c);
  }
  const std::size_t m = cols.size();
  std::vector<double> values(table.rows.size() * m);
  std::vector<std::uint8_t> missing(values.size(), 0);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      const std::string& cell = table.rows[r][cols[j]];
      if (cell.empty()) {
        missing[r * m + j] = 1;
      } else if (!parse_double(cell, values[r * m + j])) {
        throw LoadError("line " + std::to_string(r + 2) + ", column '" + names[j] + "': not a number: '" + cell + "'");
      }
    }
  }
  return FeatureMatrix(table.rows.size(), m, std::move(values), std::move(missing));
}

}  // namespace cbgbdt
