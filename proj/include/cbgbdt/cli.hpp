#ifndef CBGBDT_CLI_HPP_
#define CBGBDT_CLI_HPP_

#include <cstdint>
#include <exception>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cbgbdt/booster.hpp"
#include "cbgbdt/data.hpp"
#include "cbgbdt/losses.hpp"
#include "cbgbdt/metrics.hpp"
#include "cbgbdt/tuner.hpp"

namespace cbgbdt {

struct DatasetConfig {
  std::string path;
  std::string format = "csv";  // csv | libsvm
  std::string name;            // defaults to the file stem
  LabelSpec label;
  TaskKind task = TaskKind::Binary;
  int n_classes = 0;
  std::size_t n_features = 0;
};

struct RunConfig {
  std::vector<DatasetConfig> datasets;  // `dataset` and/or `datasets`
  LossKind loss_kind = LossKind::CE;
  LossParams loss_params;
  BoostParams booster;
  SplitOptions split;
  int n_trials = 100;
  Profile profile = Profile::LeafWise;
  std::optional<Averaging> averaging;
  std::uint64_t search_seed = 0;
  std::vector<Profile> profiles;  // sweep; empty: all
  std::vector<LossKind> losses;   // sweep; empty: all supported
  std::string output = "out";
  std::uint64_t seed = 0;
  int threads = 1;
};

using Override = std::pair<std::string, std::string>;

/// Parses one JSON config document. Unknown keys and out-of-range values
/// throw ConfigError naming the key; unsupported (loss, task) pairs throw
/// CapabilityError.
RunConfig config_from_json(const std::string& text);

/// Deep-merges the documents at `paths` in order, then applies dotted-key
/// overrides (`loss.kind` = `WCE`). Values parse as JSON when they can and
/// fall back to strings.
RunConfig load_config(const std::vector<std::string>& paths, const std::vector<Override>& overrides);

Dataset load_dataset(const DatasetConfig& dc);

/// Fits on the fold-0 training rows with early stopping on fold 0; writes
/// <out>/model.json and <out>/metrics.json.
void cmd_train(const RunConfig& cfg, std::ostream& log);

/// Writes `id,p_0..p_{K-1}` rows; CSV inputs are matched to the model's
/// feature names.
void cmd_predict(const std::string& model_path, const std::string& data_path, const std::string& out_path,
                 const std::string& format, std::ostream& log);

/// Runs search + final evaluation per (dataset, profile, loss) cell and
/// writes <out>/summary.csv. Completed cells are reused.
void cmd_sweep(const RunConfig& cfg, std::ostream& log);

inline constexpr const char* kSummaryHeader = "dataset,profile,loss,f1_mean,f1_std,best_params_path,status";

/// Reads summary CSVs and writes improvement.csv, cells.csv and deltas.csv
/// into `out_dir`.
void cmd_report(const std::vector<std::string>& summaries, const std::string& out_dir, std::ostream& log);

struct GencheckOptions {
  int draws = 1000;
  std::uint64_t seed = 0;
  double wce_grad_scale = 1.0;
};

/// Returns the process exit code.
int cmd_gencheck(const GencheckOptions& opts, std::ostream& log);

/// 2 for configuration and contract errors, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace cbgbdt

#endif  // CBGBDT_CLI_HPP_
