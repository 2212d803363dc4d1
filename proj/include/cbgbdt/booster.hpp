#ifndef CBGBDT_BOOSTER_HPP_
#define CBGBDT_BOOSTER_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cbgbdt/data.hpp"
#include "cbgbdt/losses.hpp"

namespace cbgbdt {

struct BoostParams {
  int n_rounds = 100;
  double learning_rate = 0.1;
  int max_depth = 6;     // <= 0: unbounded
  int max_leaves = 31;   // <= 0: unbounded
  double lambda_l2 = 1.0;
  double alpha_l1 = 0.0;
  int min_samples_leaf = 1;
  int max_bin = 255;
  double subsample = 1.0;
  int early_stopping_rounds = 50;
  std::uint64_t seed = 0;
  double h_floor = kDefaultHessianFloor;
  /// One width-1 tree per output each round instead of one vector-leaf tree.
  bool tree_per_output = false;
  int threads = 1;

  /// Throws ParamError naming the first bad field.
  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  /// Rows whose bin code is <= split_bin go left.
  int split_bin = 0;
  /// Raw-value form of split_bin: x <= threshold goes left.
  double threshold = 0.0;
  bool default_left = false;
  int left = -1;
  int right = -1;
  /// Leaf weights before the learning rate.
  std::vector<double> value;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  /// Output this tree writes to, or -1 for a vector-leaf tree.
  int output = -1;
  /// Boosting round that produced the tree.
  int round = 0;

  /// Node index of the leaf reached by row `r` of `x`.
  int leaf_for(const FeatureMatrix& x, std::size_t r) const;
  int num_leaves() const;
  int depth() const;
};

struct TrainingHistory {
  /// Mean loss over training rows; entry t is the loss after t rounds.
  std::vector<double> train_loss;
  /// Same for validation rows (empty when fit without validation).
  std::vector<double> valid_loss;
};

class Ensemble {
 public:
  Task task;
  int n_outputs = 1;
  std::vector<double> base_score;
  double learning_rate = 0.1;
  LossSpec loss;
  std::vector<FeatureBins> bins;
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;
  /// Rounds used at inference.
  int best_iteration = 0;
  int rounds_trained = 0;
  TrainingHistory history;

  std::size_t n_features() const { return bins.size(); }

  /// z0 + lr * sum of trees from the first `rounds` rounds (-1: best_iteration).
  Matrix predict_raw(const FeatureMatrix& x, int rounds = -1) const;
  Matrix predict_proba(const FeatureMatrix& x, int rounds = -1) const;

  /// Versioned JSON document with a fixed field order.
  std::string to_json() const;
  static Ensemble from_json(const std::string& text);
  void save(const std::string& path) const;
  static Ensemble load(const std::string& path);

 private:
  void check_features(const FeatureMatrix& x) const;
};

inline constexpr int kModelFormatVersion = 1;

/// Prior scores: logit of each label's positive rate clamped to [-10, 10], or
/// centered log class frequencies for MultiClass.
std::vector<double> base_score(const LabelBlock& y, std::span<const std::size_t> rows);
std::vector<double> base_score(const Dataset& d, const LossSpec& spec);

/// Trains on `train_rows`. With a non-empty `valid_rows` the validation loss
/// drives early stopping and inference uses the best round.
Ensemble fit(const Dataset& d, const LossSpec& spec, const BoostParams& params,
             std::span<const std::size_t> train_rows, std::span<const std::size_t> valid_rows = {});
/// All rows, no validation.
Ensemble fit(const Dataset& d, const LossSpec& spec, const BoostParams& params);

/// Converts raw scores to probabilities with the task's link.
Matrix link(const Task& task, const Matrix& raw);

}  // namespace cbgbdt

#endif  // CBGBDT_BOOSTER_HPP_
