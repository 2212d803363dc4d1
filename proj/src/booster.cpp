#include "cbgbdt/booster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace cbgbdt {

using ojson = nlohmann::ordered_json;

void BoostParams::validate() const {
  if (n_rounds < 0) throw ParamError("n_rounds must be >= 0");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ParamError("learning_rate must lie in (0, 1]");
  if (max_depth < 1 && max_leaves < 2) throw ParamError("need max_depth >= 1 or max_leaves >= 2");
  if (max_leaves == 1) throw ParamError("max_leaves must be >= 2 (or <= 0 for no bound)");
  if (!(lambda_l2 >= 0.0) || !std::isfinite(lambda_l2)) throw ParamError("lambda_l2 must be >= 0");
  if (!(alpha_l1 >= 0.0) || !std::isfinite(alpha_l1)) throw ParamError("alpha_l1 must be >= 0");
  if (min_samples_leaf < 1) throw ParamError("min_samples_leaf must be >= 1");
  if (max_bin < 2 || max_bin > 65534) throw ParamError("max_bin must lie in [2, 65534]");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw ParamError("subsample must lie in (0, 1]");
  if (early_stopping_rounds < 1) throw ParamError("early_stopping_rounds must be >= 1");
  if (!(h_floor > 0.0) || !std::isfinite(h_floor)) throw ParamError("h_floor must be > 0");
  if (threads < 1) throw ParamError("threads must be >= 1");
}

// ---------------------------------------------------------------------------
// Trees

int Tree::leaf_for(const FeatureMatrix& x, std::size_t r) const {
  int i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& n = nodes[i];
    const bool left = x.is_missing(r, n.feature) ? n.default_left : x(r, n.feature) <= n.threshold;
    i = left ? n.left : n.right;
  }
  return i;
}

int Tree::num_leaves() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].is_leaf()) continue;
    d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

namespace {

double threshold_for(const FeatureBins& fb, int bin) {
  return bin < static_cast<int>(fb.thresholds.size()) ? fb.thresholds[bin] : std::numeric_limits<double>::infinity();
}

double soft_threshold(double g, double alpha) {
  if (alpha == 0.0) return g;
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

// Bin codes of the rows a model is trained or scored on, column-major.
struct LocalCodes {
  std::size_t n = 0;
  std::vector<std::uint16_t> codes;

  std::uint16_t at(std::size_t p, std::size_t f) const { return codes[f * n + p]; }
};

LocalCodes gather_codes(const BinMap& map, std::span<const std::size_t> rows) {
  LocalCodes lc;
  lc.n = rows.size();
  lc.codes.resize(lc.n * map.features.size());
  for (std::size_t f = 0; f < map.features.size(); ++f) {
    for (std::size_t p = 0; p < lc.n; ++p) lc.codes[f * lc.n + p] = map.code(rows[p], f);
  }
  return lc;
}

int route(const Tree& t, const std::vector<FeatureBins>& bins, const LocalCodes& lc, std::size_t p) {
  int i = 0;
  while (!t.nodes[i].is_leaf()) {
    const TreeNode& n = t.nodes[i];
    const int code = lc.at(p, n.feature);
    const bool left = code == bins[n.feature].missing_bin() ? n.default_left : code <= n.split_bin;
    i = left ? n.left : n.right;
  }
  return i;
}

// Shared by training updates and prediction so both accumulate identically.
inline void add_tree_output(const Tree& t, const TreeNode& leaf, double lr, double* z) {
  if (t.output >= 0) {
    z[t.output] += lr * leaf.value[0];
  } else {
    for (std::size_t k = 0; k < leaf.value.size(); ++k) z[k] += lr * leaf.value[k];
  }
}

struct SplitChoice {
  bool valid = false;
  int feature = -1;
  int bin = 0;
  bool default_left = false;
  double gain = 0.0;
};

struct OpenLeaf {
  int node = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  int depth = 0;
  std::vector<double> G;
  std::vector<double> H;
  SplitChoice split;
};

// Gradients for one tree: value of output `offset + w` for position p sits at
// grad[p * stride + offset + w].
struct GradView {
  const double* grad;
  const double* hess;
  std::size_t stride;
  std::size_t offset;
  std::size_t width;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<FeatureBins>& bins, const LocalCodes& codes, const BoostParams& params)
      : bins_(bins), codes_(codes), params_(params) {}

  /// `positions` are the sampled training positions in ascending order; the
  /// vector is reordered in place.
  Tree build(std::vector<std::size_t>& positions, const GradView& gv) {
    gv_ = gv;
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<OpenLeaf> open;
    open.push_back(make_leaf(0, positions, 0, positions.size(), 0));
    int n_leaves = 1;
    std::vector<std::size_t> scratch;

    while (params_.max_leaves <= 0 || n_leaves < params_.max_leaves) {
      int pick = -1;
      for (std::size_t i = 0; i < open.size(); ++i) {
        if (!open[i].split.valid) continue;
        if (pick < 0 || open[i].split.gain > open[pick].split.gain ||
            (open[i].split.gain == open[pick].split.gain && open[i].node < open[pick].node)) {
          pick = static_cast<int>(i);
        }
      }
      if (pick < 0) break;
      OpenLeaf leaf = std::move(open[pick]);
      open.erase(open.begin() + pick);

      const SplitChoice& s = leaf.split;
      const int missing = bins_[s.feature].missing_bin();
      scratch.clear();
      std::size_t write = leaf.begin;
      for (std::size_t i = leaf.begin; i < leaf.end; ++i) {
        const std::size_t p = positions[i];
        const int code = codes_.at(p, s.feature);
        const bool left = code == missing ? s.default_left : code <= s.bin;
        if (left) {
          positions[write++] = p;
        } else {
          scratch.push_back(p);
        }
      }
      std::copy(scratch.begin(), scratch.end(), positions.begin() + static_cast<std::ptrdiff_t>(write));

      const int left_id = static_cast<int>(tree.nodes.size());
      const int right_id = left_id + 1;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& node = tree.nodes[leaf.node];
      node.feature = s.feature;
      node.split_bin = s.bin;
      node.threshold = threshold_for(bins_[s.feature], s.bin);
      node.default_left = s.default_left;
      node.left = left_id;
      node.right = right_id;

      open.push_back(make_leaf(left_id, positions, leaf.begin, write, leaf.depth + 1));
      open.push_back(make_leaf(right_id, positions, write, leaf.end, leaf.depth + 1));
      ++n_leaves;
    }

    for (const OpenLeaf& leaf : open) {
      TreeNode& node = tree.nodes[leaf.node];
      node.value.resize(gv_.width);
      for (std::size_t w = 0; w < gv_.width; ++w) {
        node.value[w] = -soft_threshold(leaf.G[w], params_.alpha_l1) / (leaf.H[w] + params_.lambda_l2);
      }
    }
    return tree;
  }

 private:
  double score(const double* G, const double* H) const {
    double s = 0.0;
    for (std::size_t w = 0; w < gv_.width; ++w) {
      const double t = soft_threshold(G[w], params_.alpha_l1);
      s += t * t / (H[w] + params_.lambda_l2);
    }
    return s;
  }

  OpenLeaf make_leaf(int node, const std::vector<std::size_t>& positions, std::size_t begin, std::size_t end,
                     int depth) const {
    OpenLeaf leaf;
    leaf.node = node;
    leaf.begin = begin;
    leaf.end = end;
    leaf.depth = depth;
    leaf.G.assign(gv_.width, 0.0);
    leaf.H.assign(gv_.width, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t base = positions[i] * gv_.stride + gv_.offset;
      for (std::size_t w = 0; w < gv_.width; ++w) {
        leaf.G[w] += gv_.grad[base + w];
        leaf.H[w] += gv_.hess[base + w];
      }
    }
    const bool depth_ok = params_.max_depth <= 0 || depth < params_.max_depth;
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    if (depth_ok && end - begin >= 2 * min_leaf) leaf.split = find_split(leaf, positions);
    return leaf;
  }

  SplitChoice find_split(const OpenLeaf& leaf, const std::vector<std::size_t>& positions) const {
    const std::size_t n_features = bins_.size();
    const std::size_t width = gv_.width;
    const double parent = score(leaf.G.data(), leaf.H.data());
    const std::size_t n_node = leaf.end - leaf.begin;
    std::vector<SplitChoice> per_feature(n_features);

    auto scan_feature = [&](std::size_t f) {
      const int n_bins = bins_[f].missing_bin() + 1;
      std::vector<double> hist(static_cast<std::size_t>(n_bins) * 2 * width, 0.0);
      std::vector<std::size_t> count(n_bins, 0);
      for (std::size_t i = leaf.begin; i < leaf.end; ++i) {
        const std::size_t p = positions[i];
        const int b = codes_.at(p, f);
        double* slot = &hist[static_cast<std::size_t>(b) * 2 * width];
        const std::size_t base = p * gv_.stride + gv_.offset;
        for (std::size_t w = 0; w < width; ++w) {
          slot[w] += gv_.grad[base + w];
          slot[width + w] += gv_.hess[base + w];
        }
        ++count[b];
      }

      const int missing = n_bins - 1;
      const double* miss = &hist[static_cast<std::size_t>(missing) * 2 * width];
      const std::size_t n_missing = count[missing];
      std::vector<double> GL(width, 0.0), HL(width, 0.0), GR(width), HR(width), GLm(width), HLm(width);
      std::size_t nL = 0;
      SplitChoice best;
      const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);

      auto consider = [&](const std::vector<double>& gl, const std::vector<double>& hl, std::size_t nl, int bin,
                          bool default_left) {
        const std::size_t nr = n_node - nl;
        if (nl < min_leaf || nr < min_leaf) return;
        for (std::size_t w = 0; w < width; ++w) {
          GR[w] = leaf.G[w] - gl[w];
          HR[w] = leaf.H[w] - hl[w];
        }
        const double gain = 0.5 * (score(gl.data(), hl.data()) + score(GR.data(), HR.data()) - parent);
        if (!(gain > 0.0) || !(gain > 1e-10 * parent)) return;
        if (!best.valid || gain > best.gain) {
          best.valid = true;
          best.feature = static_cast<int>(f);
          best.bin = bin;
          best.default_left = default_left;
          best.gain = gain;
        }
      };

      for (int t = 0; t < missing; ++t) {
        const double* slot = &hist[static_cast<std::size_t>(t) * 2 * width];
        for (std::size_t w = 0; w < width; ++w) {
          GL[w] += slot[w];
          HL[w] += slot[width + w];
        }
        nL += count[t];
        if (count[t] == 0) continue;  // same partition as the previous cut
        consider(GL, HL, nL, t, false);
        if (n_missing > 0) {
          for (std::size_t w = 0; w < width; ++w) {
            GLm[w] = GL[w] + miss[w];
            HLm[w] = HL[w] + miss[width + w];
          }
          consider(GLm, HLm, nL + n_missing, t, true);
        }
      }
      per_feature[f] = best;
    };

    const std::size_t work = n_node * n_features;
    parallel_for(n_features, work >= 16384 ? params_.threads : 1, scan_feature);

    SplitChoice best;
    for (const SplitChoice& s : per_feature) {
      if (s.valid && (!best.valid || s.gain > best.gain)) best = s;
    }
    return best;
  }

  const std::vector<FeatureBins>& bins_;
  const LocalCodes& codes_;
  const BoostParams& params_;
  GradView gv_{};
};

std::vector<std::size_t> sample_positions(std::span<const std::size_t> rows, const BoostParams& params, int round) {
  std::vector<std::size_t> positions(rows.size());
  std::iota(positions.begin(), positions.end(), 0);
  if (params.subsample >= 1.0) return positions;
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(params.subsample * static_cast<double>(rows.size()))));
  const std::uint64_t round_key = hash_combine(params.seed, static_cast<std::uint64_t>(round));
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(rows.size());
  for (std::size_t p = 0; p < rows.size(); ++p) keyed[p] = {hash_combine(round_key, rows[p]), p};
  std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k - 1), keyed.end());
  positions.resize(k);
  for (std::size_t i = 0; i < k; ++i) positions[i] = keyed[i].second;
  std::sort(positions.begin(), positions.end());
  return positions;
}

constexpr std::size_t kRowChunk = 1024;

}  // namespace

// ---------------------------------------------------------------------------

std::vector<double> base_score(const LabelBlock& y, std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error("base score needs at least one row");
  const Task& task = y.task();
  const auto counts = y.counts(rows);
  const double n = static_cast<double>(rows.size());
  std::vector<double> z;
  if (task.kind == TaskKind::MultiClass) {
    z.resize(counts.size());
    double mean = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      z[k] = std::max(std::log(static_cast<double>(counts[k])) - std::log(n), -10.0);
      mean += z[k];
    }
    mean /= static_cast<double>(z.size());
    for (double& v : z) v -= mean;
    return z;
  }
  auto logit = [&](std::size_t pos) {
    const double v = std::log(static_cast<double>(pos)) - std::log(n - static_cast<double>(pos));
    return std::clamp(v, -10.0, 10.0);
  };
  if (task.kind == TaskKind::Binary) return {logit(counts[1])};
  for (std::size_t c : counts) z.push_back(logit(c));
  return z;
}

std::vector<double> base_score(const Dataset& d, const LossSpec& spec) {
  if (spec.task() != d.task()) throw TaskError("loss task does not match dataset task");
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), 0);
  return base_score(d.y, rows);
}

Matrix link(const Task& task, const Matrix& raw) {
  Matrix out(raw.rows, raw.cols);
  for (std::size_t r = 0; r < raw.rows; ++r) {
    std::span<const double> z(&raw.data[r * raw.cols], raw.cols);
    std::span<double> o(&out.data[r * raw.cols], raw.cols);
    if (task.kind == TaskKind::MultiClass) {
      softmax(z, o);
    } else {
      for (std::size_t k = 0; k < raw.cols; ++k) o[k] = sigmoid(z[k]);
    }
  }
  return out;
}

Ensemble fit(const Dataset& d, const LossSpec& spec, const BoostParams& params,
             std::span<const std::size_t> train_rows, std::span<const std::size_t> valid_rows) {
  params.validate();
  if (spec.task() != d.task()) throw TaskError("loss was built for a different task than the dataset");
  if (train_rows.empty()) throw Error("empty training set");
  {
    std::vector<std::uint8_t> seen(d.size(), 0);
    for (std::size_t r : train_rows) {
      if (r >= d.size()) throw ShapeError("training row index out of range");
      seen[r] = 1;
    }
    for (std::size_t r : valid_rows) {
      if (r >= d.size()) throw ShapeError("validation row index out of range");
      if (seen[r]) throw ParamError("validation rows overlap training rows");
    }
  }

  const auto n_out = static_cast<std::size_t>(spec.n_outputs());
  const std::size_t n_train = train_rows.size();
  const std::size_t n_valid = valid_rows.size();
  const bool has_valid = n_valid > 0;

  Ensemble e;
  e.task = d.task();
  e.n_outputs = static_cast<int>(n_out);
  e.learning_rate = params.learning_rate;
  e.loss = spec;
  e.feature_names = d.feature_names;
  e.base_score = base_score(d.y, train_rows);

  BinMap map = build_bins(d.x, train_rows, params.max_bin);
  e.bins = map.features;
  const LocalCodes train_codes = gather_codes(map, train_rows);
  const LocalCodes valid_codes = gather_codes(map, valid_rows);
  map.codes.clear();
  map.codes.shrink_to_fit();

  auto targets_for = [&](std::span<const std::size_t> rows) {
    std::vector<double> y(rows.size() * n_out);
    for (std::size_t p = 0; p < rows.size(); ++p) d.y.targets(rows[p], {&y[p * n_out], n_out});
    return y;
  };
  const std::vector<double> y_train = targets_for(train_rows);
  const std::vector<double> y_valid = targets_for(valid_rows);

  std::vector<double> z_train(n_train * n_out), z_valid(n_valid * n_out);
  for (std::size_t p = 0; p < n_train; ++p) std::copy(e.base_score.begin(), e.base_score.end(), &z_train[p * n_out]);
  for (std::size_t p = 0; p < n_valid; ++p) std::copy(e.base_score.begin(), e.base_score.end(), &z_valid[p * n_out]);

  std::vector<double> grad(n_train * n_out), hess(n_train * n_out), row_loss(std::max(n_train, n_valid));

  auto mean_loss = [&](const std::vector<double>& y, const std::vector<double>& z, std::size_t n) {
    const std::size_t chunks = (n + kRowChunk - 1) / kRowChunk;
    parallel_for(chunks, params.threads, [&](std::size_t c) {
      const std::size_t end = std::min(n, (c + 1) * kRowChunk);
      for (std::size_t p = c * kRowChunk; p < end; ++p) {
        row_loss[p] = loss_value(spec, {&y[p * n_out], n_out}, {&z[p * n_out], n_out});
      }
    });
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p) s += row_loss[p];
    return s / static_cast<double>(n);
  };

  // Returns the mean training loss at the current scores.
  auto compute_gradients = [&]() {
    const std::size_t chunks = (n_train + kRowChunk - 1) / kRowChunk;
    parallel_for(chunks, params.threads, [&](std::size_t c) {
      const std::size_t end = std::min(n_train, (c + 1) * kRowChunk);
      for (std::size_t p = c * kRowChunk; p < end; ++p) {
        const std::size_t o = p * n_out;
        row_loss[p] = loss_grad_hess_raw(spec, {&y_train[o], n_out}, {&z_train[o], n_out}, {&grad[o], n_out},
                                         {&hess[o], n_out});
        for (std::size_t k = 0; k < n_out; ++k) {
          // NaN compares false and is replaced by the floor.
          if (!(hess[o + k] >= params.h_floor)) hess[o + k] = params.h_floor;
        }
      }
    });
    double s = 0.0;
    for (std::size_t p = 0; p < n_train; ++p) s += row_loss[p];
    return s / static_cast<double>(n_train);
  };

  auto apply_tree = [&](const Tree& t, const LocalCodes& codes, std::vector<double>& z, std::size_t n) {
    const std::size_t chunks = (n + kRowChunk - 1) / kRowChunk;
    parallel_for(chunks, params.threads, [&](std::size_t c) {
      const std::size_t end = std::min(n, (c + 1) * kRowChunk);
      for (std::size_t p = c * kRowChunk; p < end; ++p) {
        add_tree_output(t, t.nodes[route(t, e.bins, codes, p)], e.learning_rate, &z[p * n_out]);
      }
    });
  };

  TreeBuilder builder(e.bins, train_codes, params);
  std::vector<bool> active(n_out, true);
  double best_valid = std::numeric_limits<double>::infinity();
  int best_round = 0;
  if (has_valid) {
    best_valid = mean_loss(y_valid, z_valid, n_valid);
    e.history.valid_loss.push_back(best_valid);
  }

  for (int round = 0; round < params.n_rounds; ++round) {
    const double train_loss = compute_gradients();
    if (e.history.train_loss.size() == static_cast<std::size_t>(round)) e.history.train_loss.push_back(train_loss);

    std::vector<Tree> new_trees;
    if (params.tree_per_output) {
      for (std::size_t k = 0; k < n_out; ++k) {
        if (!active[k]) continue;
        auto positions = sample_positions(train_rows, params, round);
        Tree t = builder.build(positions, {grad.data(), hess.data(), n_out, k, 1});
        if (t.nodes.size() == 1) {
          active[k] = false;
          continue;
        }
        t.output = static_cast<int>(k);
        t.round = round;
        new_trees.push_back(std::move(t));
      }
    } else {
      auto positions = sample_positions(train_rows, params, round);
      Tree t = builder.build(positions, {grad.data(), hess.data(), n_out, 0, n_out});
      if (t.nodes.size() > 1) {
        t.round = round;
        new_trees.push_back(std::move(t));
      }
    }
    if (new_trees.empty()) break;

    for (Tree& t : new_trees) {
      apply_tree(t, train_codes, z_train, n_train);
      if (has_valid) apply_tree(t, valid_codes, z_valid, n_valid);
      e.trees.push_back(std::move(t));
    }
    e.rounds_trained = round + 1;

    if (has_valid) {
      const double v = mean_loss(y_valid, z_valid, n_valid);
      e.history.valid_loss.push_back(v);
      if (v < best_valid) {
        best_valid = v;
        best_round = e.rounds_trained;
      }
      if (e.rounds_trained - best_round >= params.early_stopping_rounds) break;
    }
  }
  if (e.history.train_loss.size() == static_cast<std::size_t>(e.rounds_trained)) {
    e.history.train_loss.push_back(mean_loss(y_train, z_train, n_train));
  }
  e.best_iteration = has_valid ? best_round : e.rounds_trained;
  return e;
}

Ensemble fit(const Dataset& d, const LossSpec& spec, const BoostParams& params) {
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), 0);
  return fit(d, spec, params, rows);
}

// ---------------------------------------------------------------------------
// Prediction

void Ensemble::check_features(const FeatureMatrix& x) const {
  if (x.cols() != n_features()) {
    throw ShapeError("model expects " + std::to_string(n_features()) + " features, got " + std::to_string(x.cols()));
  }
}

Matrix Ensemble::predict_raw(const FeatureMatrix& x, int rounds) const {
  check_features(x);
  const int limit = rounds < 0 ? best_iteration : rounds;
  const auto n_out = static_cast<std::size_t>(n_outputs);
  Matrix z(x.rows(), n_out);
  for (std::size_t r = 0; r < x.rows(); ++r) std::copy(base_score.begin(), base_score.end(), &z.data[r * n_out]);
  for (const Tree& t : trees) {
    if (t.round >= limit) break;
    for (std::size_t r = 0; r < x.rows(); ++r) add_tree_output(t, t.nodes[t.leaf_for(x, r)], learning_rate, &z.data[r * n_out]);
  }
  return z;
}

Matrix Ensemble::predict_proba(const FeatureMatrix& x, int rounds) const { return link(task, predict_raw(x, rounds)); }

// ---------------------------------------------------------------------------
// Serialization

namespace {

ojson loss_to_json(const LossSpec& s) {
  ojson j;
  j["kind"] = loss_kind_name(s.kind());
  ojson p = ojson::object();
  const LossParams& lp = s.params();
  if (lp.w) p["w"] = *lp.w;
  if (lp.gamma) p["gamma"] = *lp.gamma;
  if (lp.gamma_pos) p["gamma_pos"] = *lp.gamma_pos;
  if (lp.gamma_neg) p["gamma_neg"] = *lp.gamma_neg;
  if (lp.margin) p["margin"] = *lp.margin;
  if (lp.beta) p["beta"] = *lp.beta;
  j["params"] = p;
  j["class_counts"] = s.class_counts();
  return j;
}

LossSpec loss_from_json(const nlohmann::json& j, const Task& task) {
  LossParams lp;
  const auto& p = j.at("params");
  auto opt = [&](const char* key, std::optional<double>& out) {
    if (p.contains(key)) out = p.at(key).get<double>();
  };
  opt("w", lp.w);
  opt("gamma", lp.gamma);
  opt("gamma_pos", lp.gamma_pos);
  opt("gamma_neg", lp.gamma_neg);
  opt("margin", lp.margin);
  opt("beta", lp.beta);
  return LossSpec::make(parse_loss_kind(j.at("kind").get<std::string>()), task, lp,
                        j.at("class_counts").get<std::vector<std::size_t>>());
}

}  // namespace

std::string Ensemble::to_json() const {
  ojson j;
  j["format_version"] = kModelFormatVersion;
  j["task"] = task_kind_name(task.kind);
  j["n_classes"] = task.n_classes;
  j["K_out"] = n_outputs;
  j["base_score"] = base_score;
  j["learning_rate"] = learning_rate;
  j["loss_spec"] = loss_to_json(loss);
  ojson thresholds = ojson::array();
  for (const auto& fb : bins) thresholds.push_back(fb.thresholds);
  j["bin_thresholds"] = thresholds;
  ojson tj = ojson::array();
  for (const Tree& t : trees) {
    ojson one;
    one["round"] = t.round;
    one["output"] = t.output;
    ojson nodes = ojson::array();
    for (const TreeNode& n : t.nodes) {
      ojson nj;
      if (n.is_leaf()) {
        nj["value"] = n.value;
      } else {
        nj["feature"] = n.feature;
        nj["bin"] = n.split_bin;
        nj["default_left"] = n.default_left;
        nj["left"] = n.left;
        nj["right"] = n.right;
      }
      nodes.push_back(std::move(nj));
    }
    one["nodes"] = std::move(nodes);
    tj.push_back(std::move(one));
  }
  j["trees"] = std::move(tj);
  j["best_iteration"] = best_iteration;
  j["rounds_trained"] = rounds_trained;
  j["feature_names"] = feature_names;
  return j.dump();
}

Ensemble Ensemble::from_json(const std::string& text) {
  Ensemble e;
  try {
    const auto j = nlohmann::json::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw LoadError("unsupported model format_version " + std::to_string(version));
    }
    const TaskKind kind = parse_task_kind(j.at("task").get<std::string>());
    const int k = j.at("n_classes").get<int>();
    e.task = kind == TaskKind::Binary ? Task::binary()
             : kind == TaskKind::MultiClass ? Task::multiclass(k)
                                            : Task::multilabel(k);
    e.n_outputs = j.at("K_out").get<int>();
    if (e.n_outputs != e.task.n_outputs()) throw LoadError("K_out does not match the task");
    e.base_score = j.at("base_score").get<std::vector<double>>();
    if (e.base_score.size() != static_cast<std::size_t>(e.n_outputs)) throw LoadError("base_score has wrong length");
    e.learning_rate = j.at("learning_rate").get<double>();
    e.loss = loss_from_json(j.at("loss_spec"), e.task);
    for (const auto& th : j.at("bin_thresholds")) e.bins.push_back({th.get<std::vector<double>>()});
    const auto n_features = static_cast<int>(e.bins.size());
    for (const auto& tj : j.at("trees")) {
      Tree t;
      t.round = tj.at("round").get<int>();
      t.output = tj.at("output").get<int>();
      if (t.output < -1 || t.output >= e.n_outputs) throw LoadError("tree output index out of range");
      const std::size_t width = t.output < 0 ? static_cast<std::size_t>(e.n_outputs) : 1;
      const auto& nodes = tj.at("nodes");
      const int n_nodes = static_cast<int>(nodes.size());
      if (n_nodes == 0) throw LoadError("tree without nodes");
      for (int i = 0; i < n_nodes; ++i) {
        const auto& nj = nodes[i];
        TreeNode n;
        if (nj.contains("value")) {
          n.value = nj.at("value").get<std::vector<double>>();
          if (n.value.size() != width) throw LoadError("leaf value has wrong width");
        } else {
          n.feature = nj.at("feature").get<int>();
          n.split_bin = nj.at("bin").get<int>();
          n.default_left = nj.at("default_left").get<bool>();
          n.left = nj.at("left").get<int>();
          n.right = nj.at("right").get<int>();
          if (n.feature < 0 || n.feature >= n_features) throw LoadError("split feature out of range");
          if (n.split_bin < 0 || n.split_bin >= e.bins[n.feature].n_value_bins()) throw LoadError("split bin out of range");
          // Children always follow their parent, which rules out cycles.
          if (n.left <= i || n.right <= i || n.left >= n_nodes || n.right >= n_nodes || n.left == n.right) {
            throw LoadError("malformed tree node links");
          }
          n.threshold = threshold_for(e.bins[n.feature], n.split_bin);
        }
        t.nodes.push_back(std::move(n));
      }
      e.trees.push_back(std::move(t));
    }
    e.best_iteration = j.at("best_iteration").get<int>();
    e.rounds_trained = j.at("rounds_trained").get<int>();
    if (j.contains("feature_names")) e.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& ex) {
    throw LoadError(std::string("invalid model file: ") + ex.what());
  } catch (const LoadError&) {
    throw;
  } catch (const Error& ex) {
    throw LoadError(std::string("invalid model file: ") + ex.what());
  }
  return e;
}

void Ensemble::save(const std::string& path) const { write_file_atomic(path, to_json()); }

Ensemble Ensemble::load(const std::string& path) { return from_json(read_file(path)); }

}  // namespace cbgbdt
