#ifndef CBGBDT_TUNER_HPP_
#define CBGBDT_TUNER_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cbgbdt/booster.hpp"
#include "cbgbdt/data.hpp"
#include "cbgbdt/losses.hpp"
#include "cbgbdt/metrics.hpp"

namespace cbgbdt {

/// Booster families: leaf-wise (num_leaves bound), depth-wise (max_depth
/// bound), and sketch-style multi-output (vector leaves, binning and
/// subsampling tuned).
enum class Profile { LeafWise, DepthWise, Sketch };

inline constexpr Profile kAllProfiles[] = {Profile::LeafWise, Profile::DepthWise, Profile::Sketch};

std::string profile_name(Profile p);
Profile parse_profile(const std::string& name);

struct Dimension {
  enum class Kind { LogReal, LogInt, Choice };
  std::string name;
  Kind kind = Kind::LogReal;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> choices;

  static Dimension log_real(std::string name, double lo, double hi);
  static Dimension log_int(std::string name, double lo, double hi);
  static Dimension choice(std::string name, std::vector<double> values);
};

using ParamMap = std::map<std::string, double>;

struct SearchSpace {
  std::vector<Dimension> dims;
  /// Values applied to every trial (iterations, early stopping).
  ParamMap fixed;

  void validate() const;
  const Dimension* find(const std::string& name) const;
};

SearchSpace default_space(Profile profile, LossKind kind);

/// Deterministic in (space, seed, trial_index); dimensions are drawn in
/// declaration order. Fixed values are included.
ParamMap sample(const SearchSpace& space, std::uint64_t seed, int trial_index);

/// Profile defaults overridden by the booster entries of `params`.
BoostParams to_boost_params(Profile profile, const ParamMap& params);
/// Loss entries of `params` (w, gamma, gamma_pos, gamma_neg, margin, beta).
LossParams to_loss_params(const ParamMap& params);

struct TrialRecord {
  int index = 0;
  ParamMap params;
  std::vector<double> fold_f1;
  std::vector<int> fold_best_iteration;
  double mean_f1 = 0.0;
  bool failed = false;
  std::string error;

  std::string to_json() const;
  static TrialRecord from_json(const std::string& line);
};

struct SearchOptions {
  int n_trials = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Replaces default_space(profile, kind) when set.
  std::optional<SearchSpace> space;
  /// Unset: default_averaging(task).
  std::optional<Averaging> averaging;
  /// Called once per finished trial in index order.
  std::function<void(const TrialRecord&)> on_record;
};

struct SearchResult {
  int best = -1;
  std::vector<TrialRecord> records;

  const TrialRecord& best_record() const { return records.at(best); }
};

/// Random search with k-fold cross-validation. Each fold's model early-stops
/// on that fold's validation rows; trials are ranked by mean validation F1
/// with ties going to the lower index. Throws Error when every trial fails.
SearchResult run_search(const Dataset& d, const SplitPlan& plan, LossKind kind, Profile profile,
                        const SearchOptions& opts);

/// Cross-validation of one parameter map (one trial). Never throws for
/// per-fold training failures; they mark the record failed.
TrialRecord evaluate_trial(const Dataset& d, const SplitPlan& plan, LossKind kind, Profile profile,
                           const ParamMap& params, Averaging averaging, int index = 0);

struct FinalEvaluation {
  std::vector<double> fold_f1;
  std::vector<int> fold_best_iteration;
  double mean = 0.0;
  /// Population standard deviation.
  double std = 0.0;
};

/// Refits once per fold (early stopping on the fold's validation rows) and
/// scores each refit on the test rows.
FinalEvaluation final_evaluate(const Dataset& d, const SplitPlan& plan, LossKind kind, Profile profile,
                               const ParamMap& params, std::optional<Averaging> averaging = {}, int threads = 1);

/// Loss spec for the given rows: CBCE takes its class counts from them.
LossSpec make_loss(LossKind kind, const Dataset& d, std::span<const std::size_t> rows, const LossParams& params);

/// Config fragment {"loss": {...}, "booster": {...}} for `train`.
std::string params_to_config(Profile profile, LossKind kind, const ParamMap& params);

}  // namespace cbgbdt

#endif  // CBGBDT_TUNER_HPP_
