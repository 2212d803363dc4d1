#include <algorithm>
#include <cmath>
#include <numeric>

#include "cbgbdt/data.hpp"
#include "json.hpp"

namespace cbgbdt {

namespace {

// Largest-remainder allocation of `total` items proportionally to `sizes`.
std::vector<std::size_t> allocate(const std::vector<std::size_t>& sizes, std::size_t total, std::size_t n) {
  std::vector<std::size_t> alloc(sizes.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t used = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const double exact = static_cast<double>(sizes[c]) * static_cast<double>(total) / static_cast<double>(n);
    alloc[c] = static_cast<std::size_t>(std::floor(exact));
    used += alloc[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < total && i < remainders.size(); ++i) {
    const std::size_t c = remainders[i].second;
    if (alloc[c] < sizes[c]) {
      ++alloc[c];
      ++used;
    }
  }
  return alloc;
}

// Iterative stratification for multi-label data: labels are processed from
// rarest to most common; each row carrying the current label goes to the
// subset that still wants the most of that label.
std::vector<int> iterative_stratify(const std::vector<std::size_t>& rows, const LabelBlock& y,
                                    const std::vector<double>& proportions, Rng& rng) {
  const int n_labels = y.task().n_classes;
  const std::size_t n_sub = proportions.size();
  std::vector<std::size_t> order = rows;
  shuffle(order, rng);

  std::vector<double> want_total(n_sub);
  std::vector<std::vector<double>> want_label(n_sub, std::vector<double>(n_labels));
  std::vector<std::size_t> label_count(n_labels, 0);
  for (std::size_t r : rows) {
    for (int l = 0; l < n_labels; ++l) label_count[l] += y.label(r, l);
  }
  for (std::size_t j = 0; j < n_sub; ++j) {
    want_total[j] = proportions[j] * static_cast<double>(rows.size());
    for (int l = 0; l < n_labels; ++l) want_label[j][l] = proportions[j] * static_cast<double>(label_count[l]);
  }

  std::vector<int> assignment(order.size(), -1);
  std::vector<std::size_t> remaining(n_labels);
  auto assign = [&](std::size_t pos, std::size_t j) {
    assignment[pos] = static_cast<int>(j);
    want_total[j] -= 1.0;
    for (int l = 0; l < n_labels; ++l) {
      if (y.label(order[pos], l)) {
        want_label[j][l] -= 1.0;
        --remaining[l];
      }
    }
  };
  remaining = label_count;

  while (true) {
    int rarest = -1;
    for (int l = 0; l < n_labels; ++l) {
      if (remaining[l] > 0 && (rarest < 0 || remaining[l] < remaining[rarest])) rarest = l;
    }
    if (rarest < 0) break;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (assignment[pos] >= 0 || !y.label(order[pos], rarest)) continue;
      std::size_t best = 0;
      for (std::size_t j = 1; j < n_sub; ++j) {
        if (want_label[j][rarest] > want_label[best][rarest] ||
            (want_label[j][rarest] == want_label[best][rarest] && want_total[j] > want_total[best])) {
          best = j;
        }
      }
      assign(pos, best);
    }
  }
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (assignment[pos] >= 0) continue;
    std::size_t best = 0;
    for (std::size_t j = 1; j < n_sub; ++j) {
      if (want_total[j] > want_total[best]) best = j;
    }
    assign(pos, best);
  }

  // Map back to the caller's row order.
  std::vector<int> result(rows.size());
  std::vector<std::pair<std::size_t, int>> by_row;
  by_row.reserve(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) by_row.emplace_back(order[pos], assignment[pos]);
  std::sort(by_row.begin(), by_row.end());
  std::vector<std::pair<std::size_t, std::size_t>> row_index;
  for (std::size_t i = 0; i < rows.size(); ++i) row_index.emplace_back(rows[i], i);
  std::sort(row_index.begin(), row_index.end());
  for (std::size_t i = 0; i < rows.size(); ++i) result[row_index[i].second] = by_row[i].second;
  return result;
}

}  // namespace

SplitPlan make_split_plan(const Dataset& d, const SplitOptions& opts) {
  if (opts.k < 2) throw SplitError("k must be >= 2 folds");
  if (!(opts.test_fraction >= 0.0 && opts.test_fraction < 1.0)) throw SplitError("test_fraction must lie in [0, 1)");
  const std::size_t n = d.size();
  const auto k = static_cast<std::size_t>(opts.k);
  const auto n_test = static_cast<std::size_t>(std::llround(opts.test_fraction * static_cast<double>(n)));
  if (n - n_test < k) throw SplitError("too few training samples for " + std::to_string(k) + " folds");

  SplitPlan plan;
  plan.seed = opts.seed;
  plan.test_fraction = opts.test_fraction;
  plan.k = opts.k;
  plan.stratify = opts.stratify;
  plan.folds.resize(k);
  Rng rng(hash_combine(opts.seed, 0x5b1175ULL));

  const TaskKind kind = d.task().kind;
  if (opts.stratify && kind != TaskKind::MultiLabel) {
    const int n_classes = d.task().n_classes;
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < n; ++i) by_class[d.y.cls(i)].push_back(i);
    for (auto& members : by_class) shuffle(members, rng);
    std::vector<std::size_t> sizes(n_classes);
    for (int c = 0; c < n_classes; ++c) sizes[c] = by_class[c].size();
    const auto test_alloc = allocate(sizes, n_test, n);
    std::vector<std::vector<std::size_t>> train_by_class(n_classes);
    for (int c = 0; c < n_classes; ++c) {
      const auto& members = by_class[c];
      plan.test.insert(plan.test.end(), members.begin(), members.begin() + test_alloc[c]);
      train_by_class[c].assign(members.begin() + test_alloc[c], members.end());
      if (train_by_class[c].size() < k) {
        throw SplitError("class " + std::to_string(c) + " has " + std::to_string(train_by_class[c].size()) +
                         " training samples, fewer than k=" + std::to_string(k) +
                         " folds; use a non-stratified split (stratify=false)");
      }
    }
    // Deal each class round-robin, continuing the fold pointer across
    // classes so fold sizes differ by at most one.
    std::size_t next = 0;
    for (int c = 0; c < n_classes; ++c) {
      for (std::size_t i : train_by_class[c]) {
        plan.folds[next % k].validation.push_back(i);
        plan.train.push_back(i);
        ++next;
      }
    }
  } else if (opts.stratify) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const double tf = static_cast<double>(n_test) / static_cast<double>(n);
    const auto side = iterative_stratify(all, d.y, {1.0 - tf, tf}, rng);
    for (std::size_t i = 0; i < n; ++i) (side[i] == 1 ? plan.test : plan.train).push_back(i);
    const auto fold_of = iterative_stratify(plan.train, d.y, std::vector<double>(k, 1.0 / static_cast<double>(k)), rng);
    for (std::size_t i = 0; i < plan.train.size(); ++i) plan.folds[fold_of[i]].validation.push_back(plan.train[i]);
  } else {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    shuffle(all, rng);
    plan.test.assign(all.begin(), all.begin() + n_test);
    plan.train.assign(all.begin() + n_test, all.end());
    const std::size_t nt = plan.train.size();
    for (std::size_t j = 0; j < k; ++j) {
      plan.folds[j].validation.assign(plan.train.begin() + j * nt / k, plan.train.begin() + (j + 1) * nt / k);
    }
  }

  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.test.begin(), plan.test.end());
  for (auto& fold : plan.folds) {
    std::sort(fold.validation.begin(), fold.validation.end());
    std::set_difference(plan.train.begin(), plan.train.end(), fold.validation.begin(), fold.validation.end(),
                        std::back_inserter(fold.fit));
    if (fold.validation.empty()) throw SplitError("a fold received no validation samples");
  }
  return plan;
}

std::string SplitPlan::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["test_fraction"] = test_fraction;
  j["k"] = k;
  j["stratify"] = stratify;
  j["train"] = train;
  j["test"] = test;
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : folds) {
    nlohmann::ordered_json fj;
    fj["fit"] = f.fit;
    fj["validation"] = f.validation;
    j["folds"].push_back(std::move(fj));
  }
  return j.dump();
}

SplitPlan SplitPlan::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SplitPlan p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.test_fraction = j.at("test_fraction").get<double>();
    p.k = j.at("k").get<int>();
    p.stratify = j.at("stratify").get<bool>();
    p.train = j.at("train").get<std::vector<std::size_t>>();
    p.test = j.at("test").get<std::vector<std::size_t>>();
    for (const auto& fj : j.at("folds")) {
      p.folds.push_back({fj.at("fit").get<std::vector<std::size_t>>(),
                         fj.at("validation").get<std::vector<std::size_t>>()});
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("invalid split plan JSON: ") + e.what());
  }
}

}  // namespace cbgbdt
