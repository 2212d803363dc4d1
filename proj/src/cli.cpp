#include "cbgbdt/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "cbgbdt/gradcheck.hpp"
#include "json.hpp"

namespace cbgbdt {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config parsing

[[noreturn]] void bad_key(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

template <typename T>
T read_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number()) bad_key(key, "expected an integer");
      if (v.is_number_float() && v.get<double>() != std::floor(v.get<double>())) bad_key(key, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<double>() < 0) bad_key(key, "expected a non-negative integer");
      }
    }
    if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) bad_key(key, "expected a number");
    }
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) bad_key(key, "expected true or false");
    }
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) bad_key(key, "expected a string");
    }
    return v.get<T>();
  } catch (const json::exception&) {
    bad_key(key, "has the wrong type");
  }
}

void require_object(const json& v, const std::string& key) {
  if (!v.is_object()) bad_key(key, "expected an object");
}

template <typename Fn>
void for_each_key(const json& obj, const std::string& prefix, Fn&& fn) {
  require_object(obj, prefix);
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const std::string key = prefix + "." + it.key();
    if (!fn(it.key(), it.value(), key)) throw ConfigError("unknown config key '" + key + "'");
  }
}

// Rethrows domain errors from the library as configuration errors.
template <typename Fn>
void as_config_error(const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const CapabilityError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

DatasetConfig parse_dataset(const json& obj, const std::string& prefix) {
  DatasetConfig dc;
  bool has_path = false;
  for_each_key(obj, prefix, [&](const std::string& k, const json& v, const std::string& key) {
    if (k == "path") {
      dc.path = read_as<std::string>(v, key);
      has_path = true;
    } else if (k == "format") {
      dc.format = read_as<std::string>(v, key);
      if (dc.format != "csv" && dc.format != "libsvm") bad_key(key, "expected csv or libsvm");
    } else if (k == "name") {
      dc.name = read_as<std::string>(v, key);
    } else if (k == "label") {
      const auto add = [&](const json& e) {
        if (e.is_string()) dc.label.columns.push_back(e.get<std::string>());
        else if (e.is_number_integer()) dc.label.indices.push_back(e.get<int>());
        else bad_key(key, "expected column names or indices");
      };
      if (v.is_array()) {
        for (const auto& e : v) add(e);
      } else {
        add(v);
      }
    } else if (k == "label_prefix") {
      dc.label.prefix = read_as<std::string>(v, key);
    } else if (k == "task") {
      as_config_error(key, [&] { dc.task = parse_task_kind(read_as<std::string>(v, key)); });
    } else if (k == "n_classes") {
      dc.n_classes = read_as<int>(v, key);
    } else if (k == "n_features") {
      dc.n_features = read_as<std::size_t>(v, key);
    } else {
      return false;
    }
    return true;
  });
  if (!has_path) bad_key(prefix + ".path", "is required");
  if (!fs::exists(dc.path)) bad_key(prefix + ".path", "file not found: " + dc.path);
  if (dc.name.empty()) dc.name = fs::path(dc.path).stem().string();
  return dc;
}

Task declared_task(const DatasetConfig& dc) {
  const int k = dc.n_classes >= 2 ? dc.n_classes : 3;
  switch (dc.task) {
    case TaskKind::Binary: return Task::binary();
    case TaskKind::MultiClass: return Task::multiclass(k);
    case TaskKind::MultiLabel: return Task::multilabel(k);
  }
  return Task::binary();
}

void check_loss(LossKind kind, const LossParams& lp, const Task& task) {
  std::vector<std::size_t> counts;
  if (kind == LossKind::CBCE && task.kind != TaskKind::MultiLabel) counts.assign(task.n_classes, 1);
  as_config_error("loss", [&] { LossSpec::make(kind, task, lp, counts); });
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require_object(root, "<root>");
  RunConfig cfg;

  // Top-level seed first: it is the default for every other seed.
  if (root.contains("seed")) cfg.seed = read_as<std::uint64_t>(root["seed"], "seed");
  cfg.split.seed = cfg.seed;
  cfg.booster.seed = cfg.seed;
  cfg.search_seed = cfg.seed;

  for (auto it = root.begin(); it != root.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    if (k == "seed") continue;
    if (k == "threads") {
      cfg.threads = read_as<int>(v, k);
      if (cfg.threads < 1) bad_key(k, "must be >= 1");
    } else if (k == "output") {
      cfg.output = read_as<std::string>(v, k);
    } else if (k == "dataset") {
      cfg.datasets.insert(cfg.datasets.begin(), parse_dataset(v, "dataset"));
    } else if (k == "datasets") {
      if (!v.is_array()) bad_key(k, "expected an array");
      for (std::size_t i = 0; i < v.size(); ++i) cfg.datasets.push_back(parse_dataset(v[i], "datasets[" + std::to_string(i) + "]"));
    } else if (k == "loss") {
      for_each_key(v, "loss", [&](const std::string& lk, const json& lv, const std::string& key) {
        if (lk == "kind") {
          as_config_error(key, [&] { cfg.loss_kind = parse_loss_kind(read_as<std::string>(lv, key)); });
        } else if (lk == "w") cfg.loss_params.w = read_as<double>(lv, key);
        else if (lk == "gamma") cfg.loss_params.gamma = read_as<double>(lv, key);
        else if (lk == "gamma_pos") cfg.loss_params.gamma_pos = read_as<double>(lv, key);
        else if (lk == "gamma_neg") cfg.loss_params.gamma_neg = read_as<double>(lv, key);
        else if (lk == "margin") cfg.loss_params.margin = read_as<double>(lv, key);
        else if (lk == "beta") cfg.loss_params.beta = read_as<double>(lv, key);
        else return false;
        return true;
      });
    } else if (k == "losses") {
      if (!v.is_array()) bad_key(k, "expected an array of loss names");
      for (const auto& e : v) as_config_error(k, [&] { cfg.losses.push_back(parse_loss_kind(read_as<std::string>(e, k))); });
    } else if (k == "profiles") {
      if (!v.is_array()) bad_key(k, "expected an array of profile names");
      for (const auto& e : v) as_config_error(k, [&] { cfg.profiles.push_back(parse_profile(read_as<std::string>(e, k))); });
    } else if (k == "booster") {
      BoostParams& b = cfg.booster;
      for_each_key(v, "booster", [&](const std::string& bk, const json& bv, const std::string& key) {
        if (bk == "n_rounds") b.n_rounds = read_as<int>(bv, key);
        else if (bk == "learning_rate") b.learning_rate = read_as<double>(bv, key);
        else if (bk == "max_depth") b.max_depth = read_as<int>(bv, key);
        else if (bk == "max_leaves") b.max_leaves = read_as<int>(bv, key);
        else if (bk == "lambda_l2") b.lambda_l2 = read_as<double>(bv, key);
        else if (bk == "alpha_l1") b.alpha_l1 = read_as<double>(bv, key);
        else if (bk == "min_samples_leaf") b.min_samples_leaf = read_as<int>(bv, key);
        else if (bk == "max_bin") b.max_bin = read_as<int>(bv, key);
        else if (bk == "subsample") b.subsample = read_as<double>(bv, key);
        else if (bk == "early_stopping_rounds") b.early_stopping_rounds = read_as<int>(bv, key);
        else if (bk == "seed") b.seed = read_as<std::uint64_t>(bv, key);
        else if (bk == "h_floor") b.h_floor = read_as<double>(bv, key);
        else if (bk == "tree_per_output") b.tree_per_output = read_as<bool>(bv, key);
        else return false;
        return true;
      });
    } else if (k == "split") {
      for_each_key(v, "split", [&](const std::string& sk, const json& sv, const std::string& key) {
        if (sk == "seed") cfg.split.seed = read_as<std::uint64_t>(sv, key);
        else if (sk == "test_fraction") cfg.split.test_fraction = read_as<double>(sv, key);
        else if (sk == "k") cfg.split.k = read_as<int>(sv, key);
        else if (sk == "stratify") cfg.split.stratify = read_as<bool>(sv, key);
        else return false;
        return true;
      });
    } else if (k == "tuner") {
      for_each_key(v, "tuner", [&](const std::string& tk, const json& tv, const std::string& key) {
        if (tk == "n_trials") cfg.n_trials = read_as<int>(tv, key);
        else if (tk == "profile") as_config_error(key, [&] { cfg.profile = parse_profile(read_as<std::string>(tv, key)); });
        else if (tk == "averaging") as_config_error(key, [&] { cfg.averaging = parse_averaging(read_as<std::string>(tv, key)); });
        else if (tk == "seed") cfg.search_seed = read_as<std::uint64_t>(tv, key);
        else return false;
        return true;
      });
    } else {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }

  as_config_error("booster", [&] { cfg.booster.validate(); });
  if (cfg.split.k < 2) bad_key("split.k", "must be >= 2");
  if (!(cfg.split.test_fraction >= 0.0 && cfg.split.test_fraction < 1.0)) bad_key("split.test_fraction", "must lie in [0, 1)");
  if (cfg.n_trials < 1) bad_key("tuner.n_trials", "must be >= 1");

  std::set<std::string> names;
  for (const auto& dc : cfg.datasets) {
    if (!names.insert(dc.name).second) throw ConfigError("duplicate dataset name '" + dc.name + "'");
    const Task task = declared_task(dc);
    check_loss(cfg.loss_kind, cfg.loss_params, task);
    for (LossKind lk : cfg.losses) {
      if (!supports(lk, task.kind)) {
        throw CapabilityError("loss " + loss_kind_name(lk) + " is not available for " + task_kind_name(task.kind) +
                              " tasks (capability table)");
      }
    }
  }
  return cfg;
}

RunConfig load_config(const std::vector<std::string>& paths, const std::vector<Override>& overrides) {
  json merged = json::object();
  for (const auto& p : paths) {
    std::string text;
    try {
      text = read_file(p);
    } catch (const LoadError&) {
      throw ConfigError("cannot read config file " + p);
    }
    try {
      merged.merge_patch(json::parse(text));
    } catch (const json::exception& e) {
      throw ConfigError("config " + p + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& [key, raw] : overrides) {
    if (key.empty()) throw ConfigError("empty override key");
    std::string ptr;
    std::stringstream ss(key);
    std::string part;
    while (std::getline(ss, part, '.')) {
      if (part.empty()) throw ConfigError("malformed override key '" + key + "'");
      ptr += "/" + part;
    }
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    try {
      const json::json_pointer jp(ptr);
      if (value.is_null()) {
        // null removes the key, as in a merge patch
        if (merged.contains(jp)) merged[jp.parent_pointer()].erase(jp.back());
      } else {
        merged[jp] = value;
      }
    } catch (const json::exception&) {
      throw ConfigError("cannot apply override '" + key + "'");
    }
  }
  return config_from_json(merged.dump());
}

Dataset load_dataset(const DatasetConfig& dc) {
  if (dc.format == "libsvm") return load_libsvm(dc.path, dc.task, dc.n_classes, dc.n_features);
  return load_csv(dc.path, dc.label, dc.task, dc.n_classes);
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::string g17(double v) { return fmt("%.17g", v); }

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out;
}

ojson history_json(const std::vector<double>& v) {
  ojson a = ojson::array();
  for (double x : v) a.push_back(x);
  return a;
}

}  // namespace

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  if (cfg.datasets.size() != 1) throw ConfigError("train needs exactly one dataset (config key 'dataset')");
  const Dataset d = load_dataset(cfg.datasets[0]);
  const SplitPlan plan = make_split_plan(d, cfg.split);
  const Fold& fold = plan.folds.at(0);
  const LossSpec spec = make_loss(cfg.loss_kind, d, fold.fit, cfg.loss_params);
  BoostParams bp = cfg.booster;
  bp.threads = cfg.threads;
  const Ensemble e = fit(d, spec, bp, fold.fit, fold.validation);
  const Averaging avg = cfg.averaging.value_or(default_averaging(d.task()));

  ojson m;
  m["task"] = task_kind_name(d.task().kind);
  m["loss"] = loss_kind_name(spec.kind());
  m["averaging"] = averaging_name(avg);
  m["rounds_trained"] = e.rounds_trained;
  m["best_iteration"] = e.best_iteration;
  m["n_trees"] = e.trees.size();
  m["train_loss"] = history_json(e.history.train_loss);
  m["valid_loss"] = history_json(e.history.valid_loss);
  const double valid_f1 = f1(e.predict_proba(take_rows(d.x, fold.validation)), d.y, fold.validation, 0.5, avg).value;
  m["valid_f1"] = valid_f1;
  if (!plan.test.empty()) {
    m["test_f1"] = f1(e.predict_proba(take_rows(d.x, plan.test)), d.y, plan.test, 0.5, avg).value;
  }

  const fs::path out(cfg.output);
  e.save((out / "model.json").string());
  write_file_atomic((out / "metrics.json").string(), m.dump(2) + "\n");
  log << "trained " << e.rounds_trained << " rounds (best iteration " << e.best_iteration << "), validation F1 "
      << fmt("%.2f", valid_f1);
  if (m.contains("test_f1")) log << ", test F1 " << fmt("%.2f", m["test_f1"].get<double>());
  log << "\nwrote " << (out / "model.json").string() << " and " << (out / "metrics.json").string() << "\n";
}

void cmd_predict(const std::string& model_path, const std::string& data_path, const std::string& out_path,
                 const std::string& format, std::ostream& log) {
  const Ensemble e = Ensemble::load(model_path);
  FeatureMatrix x;
  if (format == "libsvm") {
    x = parse_libsvm(read_file(data_path), e.task.kind, e.task.n_classes, e.n_features()).x;
  } else if (format == "csv") {
    const CsvTable table = parse_csv_table(read_file(data_path));
    std::vector<std::string> names = e.feature_names;
    if (names.empty()) {
      for (std::size_t f = 0; f < e.n_features(); ++f) names.push_back("f" + std::to_string(f));
    }
    x = feature_columns(table, names);
  } else {
    throw ConfigError("unknown input format '" + format + "' (expected csv or libsvm)");
  }
  const Matrix p = e.predict_proba(x);
  const bool binary = e.task.kind == TaskKind::Binary;
  const int k = binary ? 2 : e.n_outputs;
  std::string out = "id";
  for (int c = 0; c < k; ++c) out += ",p_" + std::to_string(c);
  out += "\n";
  for (std::size_t r = 0; r < p.rows; ++r) {
    out += std::to_string(r);
    if (binary) {
      out += "," + g17(1.0 - p(r, 0)) + "," + g17(p(r, 0));
    } else {
      for (int c = 0; c < k; ++c) out += "," + g17(p(r, c));
    }
    out += "\n";
  }
  write_file_atomic(out_path, out);
  log << "wrote " << p.rows << " predictions to " << out_path << "\n";
}

// ---------------------------------------------------------------------------
// Sweep

namespace {

struct CellOutcome {
  bool ok = false;
  double f1_mean = 0.0;
  double f1_std = 0.0;
};

CellOutcome run_cell(const RunConfig& cfg, const Dataset& d, const SplitPlan& plan, const std::string& dataset,
                     Profile profile, LossKind kind, const fs::path& dir, std::ostream& log) {
  const fs::path result_path = dir / "result.json";
  if (fs::exists(result_path)) {
    try {
      const auto r = json::parse(read_file(result_path.string()));
      if (r.at("status").get<std::string>() == "ok") {
        log << "  " << dataset << " / " << profile_name(profile) << " / " << loss_kind_name(kind) << ": reused\n";
        return {true, r.at("f1_mean").get<double>(), r.at("f1_std").get<double>()};
      }
    } catch (const std::exception&) {
      // unreadable result: run the cell again
    }
  }

  fs::create_directories(dir);
  std::ostringstream cell_log;
  const auto start = std::chrono::steady_clock::now();
  ojson result;
  result["dataset"] = dataset;
  result["profile"] = profile_name(profile);
  result["loss"] = loss_kind_name(kind);
  CellOutcome outcome;
  try {
    const fs::path partial = dir / "trials.jsonl.partial";
    std::ofstream trials(partial, std::ios::trunc);
    if (!trials) throw Error("cannot write " + partial.string());
    SearchOptions opts;
    opts.n_trials = cfg.n_trials;
    opts.seed = cfg.search_seed;
    opts.threads = cfg.threads;
    opts.averaging = cfg.averaging;
    opts.on_record = [&](const TrialRecord& r) {
      trials << r.to_json() << "\n" << std::flush;
      cell_log << "trial " << r.index << ": " << (r.failed ? "failed: " + r.error : "mean F1 " + fmt("%.4f", r.mean_f1))
               << "\n";
    };
    const SearchResult sr = run_search(d, plan, kind, profile, opts);
    trials.close();
    fs::rename(partial, dir / "trials.jsonl");
    const TrialRecord& best = sr.best_record();
    write_file_atomic((dir / "best_params.json").string(), params_to_config(profile, kind, best.params) + "\n");
    const FinalEvaluation fe = final_evaluate(d, plan, kind, profile, best.params, cfg.averaging, cfg.threads);
    result["status"] = "ok";
    result["f1_mean"] = fe.mean;
    result["f1_std"] = fe.std;
    result["test_f1"] = fe.fold_f1;
    result["best_iteration"] = fe.fold_best_iteration;
    result["best_trial"] = best.index;
    result["best_valid_f1"] = best.mean_f1;
    outcome = {true, fe.mean, fe.std};
    cell_log << "best trial " << best.index << " (validation F1 " << fmt("%.4f", best.mean_f1) << "), test F1 "
             << fmt("%.4f", fe.mean) << " +- " << fmt("%.4f", fe.std) << "\n";
  } catch (const Error& e) {
    result["status"] = "failed";
    result["error"] = e.what();
    cell_log << "failed: " << e.what() << "\n";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  cell_log << "elapsed " << fmt("%.2f", secs) << " s\n";
  write_file_atomic((dir / "log.txt").string(), cell_log.str());
  write_file_atomic(result_path.string(), result.dump(2) + "\n");
  log << "  " << dataset << " / " << profile_name(profile) << " / " << loss_kind_name(kind) << ": "
      << (outcome.ok ? "F1 " + fmt("%.2f", outcome.f1_mean) : "failed (see " + (dir / "log.txt").string() + ")") << "\n";
  return outcome;
}

}  // namespace

void cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  if (cfg.datasets.empty()) throw ConfigError("sweep needs 'dataset' or 'datasets'");
  const fs::path out(cfg.output);
  const std::vector<Profile> profiles =
      cfg.profiles.empty() ? std::vector<Profile>(std::begin(kAllProfiles), std::end(kAllProfiles)) : cfg.profiles;

  std::string summary = std::string(kSummaryHeader) + "\n";
  for (const auto& dc : cfg.datasets) {
    const std::string bytes = read_file(dc.path);
    const std::string digest = hex64(fnv1a(bytes.data(), bytes.size()));
    std::optional<Dataset> d;
    std::optional<SplitPlan> plan;
    std::string load_error;
    try {
      d = load_dataset(dc);
      plan = make_split_plan(*d, cfg.split);
    } catch (const Error& e) {
      load_error = e.what();
      log << "dataset " << dc.name << ": " << load_error << "\n";
    }
    std::vector<LossKind> losses = cfg.losses;
    if (losses.empty()) {
      for (LossKind k : kAllLossKinds) {
        if (supports(k, dc.task)) losses.push_back(k);
      }
    }
    for (Profile profile : profiles) {
      for (LossKind kind : losses) {
        const std::string key_src = digest + '\0' + profile_name(profile) + '\0' + loss_kind_name(kind) + '\0' +
                                    std::to_string(cfg.search_seed);
        const std::string key = hex64(fnv1a(key_src.data(), key_src.size()));
        const std::string cell = safe_name(dc.name) + "-" + profile_name(profile) + "-" + loss_kind_name(kind) + "-" + key;
        const fs::path dir = out / "cells" / cell;
        CellOutcome r;
        if (d) {
          r = run_cell(cfg, *d, *plan, dc.name, profile, kind, dir, log);
        } else {
          fs::create_directories(dir);
          write_file_atomic((dir / "log.txt").string(), "failed: " + load_error + "\n");
        }
        const std::string params_path = (fs::path("cells") / cell / "best_params.json").generic_string();
        summary += csv_cell(dc.name) + "," + profile_name(profile) + "," + loss_kind_name(kind) + ",";
        summary += r.ok ? g17(r.f1_mean) + "," + g17(r.f1_std) + "," + params_path + ",ok\n" : ",,,failed\n";
      }
    }
  }
  write_file_atomic((out / "summary.csv").string(), summary);
  log << "wrote " << (out / "summary.csv").string() << "\n";
}

// ---------------------------------------------------------------------------
// Report

void cmd_report(const std::vector<std::string>& summaries, const std::string& out_dir, std::ostream& log) {
  if (summaries.empty()) throw ConfigError("report needs at least one summary CSV");
  struct Cell {
    std::string profile;
    std::string loss;
    double mean;
    double std;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Cell>> by_dataset;
  for (const auto& path : summaries) {
    const CsvTable t = parse_csv_table(read_file(path));
    const int c_dataset = t.column("dataset"), c_profile = t.column("profile"), c_loss = t.column("loss"),
              c_mean = t.column("f1_mean"), c_std = t.column("f1_std"), c_status = t.column("status");
    if (std::min({c_dataset, c_profile, c_loss, c_mean, c_std, c_status}) < 0) {
      throw LoadError(path + ": not a summary CSV (expected header " + kSummaryHeader + ")");
    }
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      if (row[c_status] != "ok") continue;
      Cell c{row[c_profile], row[c_loss], 0.0, 0.0};
      try {
        c.mean = std::stod(row[c_mean]);
        c.std = row[c_std].empty() ? 0.0 : std::stod(row[c_std]);
      } catch (const std::exception&) {
        throw LoadError(path + ": line " + std::to_string(i + 2) + ": bad F1 value");
      }
      auto [it, inserted] = by_dataset.try_emplace(row[c_dataset]);
      if (inserted) order.push_back(row[c_dataset]);
      it->second.push_back(c);
    }
  }
  if (order.empty()) throw Error("summaries contain no completed cells");

  std::string improvement_csv = "dataset,bmp,cmp,delta,bmp_cell,cmp_cell\n";
  std::string cells_csv = "dataset,profile,loss,f1_mean,f1_std\n";
  std::string deltas_csv = "dataset,delta\n";
  for (const auto& name : order) {
    const auto& cells = by_dataset[name];
    std::vector<double> bmp, cmp;
    std::vector<const Cell*> bmp_cells, cmp_cells;
    for (const Cell& c : cells) {
      cells_csv += csv_cell(name) + "," + c.profile + "," + c.loss + "," + fmt("%.2f", c.mean) + "," + fmt("%.2f", c.std) + "\n";
      if (c.loss == "CE") {
        bmp.push_back(c.mean);
        bmp_cells.push_back(&c);
      } else {
        cmp.push_back(c.mean);
        cmp_cells.push_back(&c);
      }
    }
    if (cmp.empty()) throw Error("dataset '" + name + "': no class-balanced cells");
    if (bmp.empty()) throw Error("dataset '" + name + "': no baseline (CE) cells");
    const Improvement imp = improvement(bmp, cmp);
    const auto best_of = [](const std::vector<double>& v) {
      return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    };
    const Cell& bc = *bmp_cells[best_of(bmp)];
    const Cell& cc = *cmp_cells[best_of(cmp)];
    improvement_csv += csv_cell(name) + "," + fmt("%.2f", imp.bmp) + "," + fmt("%.2f", imp.cmp) + "," +
                       fmt("%.2f", imp.delta) + "," + bc.profile + "/" + bc.loss + "," + cc.profile + "/" + cc.loss + "\n";
    deltas_csv += csv_cell(name) + "," + fmt("%.2f", imp.delta) + "\n";
    log << name << ": BMP " << fmt("%.2f", imp.bmp) << " (" << bc.profile << "/" << bc.loss << "), CMP "
        << fmt("%.2f", imp.cmp) << " (" << cc.profile << "/" << cc.loss << "), delta " << fmt("%+.2f", imp.delta) << "\n";
  }
  const fs::path out(out_dir);
  write_file_atomic((out / "improvement.csv").string(), improvement_csv);
  write_file_atomic((out / "cells.csv").string(), cells_csv);
  write_file_atomic((out / "deltas.csv").string(), deltas_csv);
}

// ---------------------------------------------------------------------------

int cmd_gencheck(const GencheckOptions& opts, std::ostream& log) {
  FdOptions fo;
  fo.draws = opts.draws;
  fo.seed = opts.seed;
  fo.wce_grad_scale = opts.wce_grad_scale;
  const auto fd = fd_suite(fo);
  bool ok = true;
  log << "finite-difference checks (" << opts.draws << " draws per task)\n";
  for (LossKind kind : kAllLossKinds) {
    bool pass = true;
    std::string detail;
    double wg = 0.0, wh = 0.0;
    for (const auto& r : fd) {
      if (r.kind != kind) continue;
      wg = std::max(wg, r.worst_grad);
      wh = std::max(wh, r.worst_hess);
      if (!r.passed()) {
        pass = false;
        if (detail.empty()) detail = task_kind_name(r.task) + ", " + r.first_failure;
      }
    }
    ok = ok && pass;
    log << "  " << loss_kind_name(kind) << ": " << (pass ? "pass" : "FAIL") << "  (max rel err grad "
        << fmt("%.1e", wg) << ", hess " << fmt("%.1e", wh) << ")";
    if (!pass) log << "  " << detail;
    log << "\n";
  }
  const auto ids = identity_suite(opts.seed);
  log << "reduction identities (" << ids.size() << " checks)\n";
  for (const auto& r : ids) {
    ok = ok && r.passed;
    log << "  " << r.name << ": " << (r.passed ? "pass" : "FAIL") << "  (max rel diff " << fmt("%.1e", r.worst) << ")";
    if (!r.passed) log << "  " << r.detail;
    log << "\n";
  }
  log << (ok ? "all checks passed\n" : "some checks FAILED\n");
  return ok ? 0 : 1;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParamError*>(&e) ||
      dynamic_cast<const CapabilityError*>(&e)) {
    return 2;
  }
  return 1;
}

}  // namespace cbgbdt
