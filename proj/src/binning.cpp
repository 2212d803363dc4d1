#include <algorithm>
#include <cmath>

#include "cbgbdt/data.hpp"

namespace cbgbdt {

std::uint16_t FeatureBins::bin_of(double v) const {
  return static_cast<std::uint16_t>(std::lower_bound(thresholds.begin(), thresholds.end(), v) - thresholds.begin());
}

namespace {

// Cut strictly between a < b so that a goes left and b goes right.
double midpoint(double a, double b) {
  const double mid = a / 2.0 + b / 2.0;
  return (mid >= a && mid < b) ? mid : a;
}

}  // namespace

std::vector<double> quantile_thresholds(std::vector<double> values, int max_bin) {
  if (max_bin < 2) throw ParamError("max_bin must be >= 2");
  std::vector<double> cuts;
  if (values.empty()) return cuts;
  std::sort(values.begin(), values.end());

  std::vector<double> distinct;
  std::vector<std::size_t> cumulative;  // rows with value <= distinct[i]
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (distinct.empty() || values[i] != distinct.back()) {
      distinct.push_back(values[i]);
      cumulative.push_back(0);
    }
    cumulative.back() = i + 1;
  }
  const std::size_t n_distinct = distinct.size();
  const auto bins = static_cast<std::size_t>(max_bin);

  if (n_distinct <= bins) {
    for (std::size_t i = 0; i + 1 < n_distinct; ++i) cuts.push_back(midpoint(distinct[i], distinct[i + 1]));
    return cuts;
  }

  // Equal-frequency: the j-th cut sits after the distinct value holding rank
  // ceil(j n / B). Heavy ties collapse neighbouring cuts.
  const std::size_t n = values.size();
  std::size_t i = 0;
  for (std::size_t j = 1; j < bins; ++j) {
    const std::size_t rank = (j * n + bins - 1) / bins;
    while (i < n_distinct && cumulative[i] < rank) ++i;
    if (i + 1 >= n_distinct) break;
    const double cut = midpoint(distinct[i], distinct[i + 1]);
    if (cuts.empty() || cut > cuts.back()) cuts.push_back(cut);
  }
  return cuts;
}

std::vector<std::uint16_t> apply_bins(const FeatureMatrix& x, const std::vector<FeatureBins>& bins) {
  if (bins.size() != x.cols()) throw ShapeError("bin map has " + std::to_string(bins.size()) + " features, data has " + std::to_string(x.cols()));
  const std::size_t n = x.rows();
  std::vector<std::uint16_t> codes(n * x.cols());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    const auto& fb = bins[f];
    for (std::size_t r = 0; r < n; ++r) {
      codes[f * n + r] = x.is_missing(r, f) ? static_cast<std::uint16_t>(fb.missing_bin()) : fb.bin_of(x(r, f));
    }
  }
  return codes;
}

BinMap build_bins(const FeatureMatrix& x, std::span<const std::size_t> train_rows, int max_bin) {
  if (max_bin < 2) throw ParamError("max_bin must be >= 2");
  if (max_bin > 65534) throw ParamError("max_bin must be <= 65534");
  BinMap map;
  map.features.resize(x.cols());
  std::vector<double> column;
  for (std::size_t f = 0; f < x.cols(); ++f) {
    column.clear();
    for (std::size_t r : train_rows) {
      if (!x.is_missing(r, f)) column.push_back(x(r, f));
    }
    map.features[f].thresholds = quantile_thresholds(column, max_bin);
  }
  map.n_rows = x.rows();
  map.codes = apply_bins(x, map.features);
  return map;
}

BinMap build_bins(const Dataset& d, std::span<const std::size_t> train_rows, int max_bin) {
  return build_bins(d.x, train_rows, max_bin);
}

}  // namespace cbgbdt
