#include "cbgbdt/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include "json.hpp"

namespace cbgbdt {

using ojson = nlohmann::ordered_json;

std::string profile_name(Profile p) {
  switch (p) {
    case Profile::LeafWise: return "leaf-wise";
    case Profile::DepthWise: return "depth-wise";
    case Profile::Sketch: return "sketch";
  }
  return "?";
}

Profile parse_profile(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (c != '-' && c != '_') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "leafwise") return Profile::LeafWise;
  if (s == "depthwise") return Profile::DepthWise;
  if (s == "sketch") return Profile::Sketch;
  throw ParamError("unknown profile '" + name + "' (expected leaf-wise, depth-wise or sketch)");
}

Dimension Dimension::log_real(std::string name, double lo, double hi) {
  return {std::move(name), Kind::LogReal, lo, hi, {}};
}

Dimension Dimension::log_int(std::string name, double lo, double hi) {
  return {std::move(name), Kind::LogInt, lo, hi, {}};
}

Dimension Dimension::choice(std::string name, std::vector<double> values) {
  return {std::move(name), Kind::Choice, 0.0, 0.0, std::move(values)};
}

void SearchSpace::validate() const {
  for (const auto& d : dims) {
    if (d.kind == Dimension::Kind::Choice) {
      if (d.choices.empty()) throw ParamError("choice dimension '" + d.name + "' has no values");
    } else if (!(d.lo > 0.0 && d.lo < d.hi)) {
      throw ParamError("log dimension '" + d.name + "' needs 0 < lo < hi");
    }
  }
}

const Dimension* SearchSpace::find(const std::string& name) const {
  for (const auto& d : dims) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

SearchSpace default_space(Profile profile, LossKind kind) {
  using D = Dimension;
  SearchSpace s;
  s.fixed = {{"n_rounds", 1000}, {"early_stopping_rounds", 50}};
  switch (profile) {
    case Profile::LeafWise:
      s.dims = {D::log_int("num_leaves", 8, 64), D::log_real("reg_alpha", 1e-4, 2), D::log_real("reg_lambda", 1e-4, 2),
                D::log_real("learning_rate", 0.01, 1.0)};
      break;
    case Profile::DepthWise:
      s.dims = {D::log_int("max_depth", 2, 10), D::log_real("reg_alpha", 1e-4, 1), D::log_real("reg_lambda", 1e-4, 5),
                D::log_real("eta", 1e-3, 1)};
      break;
    case Profile::Sketch:
      s.dims = {D::log_int("max_depth", 2, 10), D::log_real("lambda_l2", 1e-4, 2), D::log_real("learning_rate", 0.01, 1),
                D::log_int("max_bin", 64, 256), D::log_real("subsample", 0.05, 1)};
      break;
  }
  switch (kind) {
    case LossKind::CE: break;
    case LossKind::WCE: s.dims.push_back(D::choice("w", {2, 3, 5})); break;
    case LossKind::FL: s.dims.push_back(D::choice("gamma", {0.5, 1, 2})); break;
    case LossKind::ASL:
      s.dims.push_back(D::choice("gamma_pos", {0.0, 0.1}));
      s.dims.push_back(D::choice("gamma_neg", {0.5, 1, 2}));
      s.dims.push_back(D::choice("margin", {0.05, 0.2}));
      break;
    case LossKind::ACE: s.dims.push_back(D::choice("margin", {0.05, 0.2})); break;
    case LossKind::AWE:
      s.dims.push_back(D::choice("w", {2, 3, 5}));
      s.dims.push_back(D::choice("margin", {0.05, 0.2}));
      break;
    case LossKind::CBCE: s.dims.push_back(D::choice("beta", {0.9, 0.99, 0.999, 0.9999})); break;
  }
  return s;
}

ParamMap sample(const SearchSpace& space, std::uint64_t seed, int trial_index) {
  space.validate();
  Rng rng(hash_combine(seed, static_cast<std::uint64_t>(trial_index)));
  ParamMap out = space.fixed;
  for (const auto& d : space.dims) {
    switch (d.kind) {
      case Dimension::Kind::LogReal: {
        const double v = std::exp(std::log(d.lo) + rng.uniform() * (std::log(d.hi) - std::log(d.lo)));
        out[d.name] = std::clamp(v, d.lo, d.hi);
        break;
      }
      case Dimension::Kind::LogInt: {
        const double v = std::exp(std::log(d.lo) + rng.uniform() * (std::log(d.hi) - std::log(d.lo)));
        out[d.name] = std::clamp(std::round(v), std::ceil(d.lo), std::floor(d.hi));
        break;
      }
      case Dimension::Kind::Choice:
        out[d.name] = d.choices[rng.below(d.choices.size())];
        break;
    }
  }
  return out;
}

namespace {

bool is_loss_key(const std::string& k) {
  return k == "w" || k == "gamma" || k == "gamma_pos" || k == "gamma_neg" || k == "margin" || k == "beta";
}

int as_int(const std::string& key, double v) {
  if (v != std::round(v) || std::abs(v) > 1e9) throw ParamError("parameter '" + key + "' must be an integer");
  return static_cast<int>(v);
}

}  // namespace

BoostParams to_boost_params(Profile profile, const ParamMap& params) {
  BoostParams bp;
  switch (profile) {
    case Profile::LeafWise:
      bp.max_depth = -1;
      bp.max_leaves = 31;
      bp.lambda_l2 = 0.0;
      bp.tree_per_output = true;
      break;
    case Profile::DepthWise:
      bp.max_depth = 6;
      bp.max_leaves = 0;
      bp.tree_per_output = true;
      break;
    case Profile::Sketch:
      bp.max_depth = 6;
      bp.max_leaves = 0;
      bp.tree_per_output = false;
      break;
  }
  for (const auto& [key, v] : params) {
    if (key == "num_leaves" || key == "max_leaves") bp.max_leaves = as_int(key, v);
    else if (key == "max_depth") bp.max_depth = as_int(key, v);
    else if (key == "reg_alpha" || key == "alpha_l1") bp.alpha_l1 = v;
    else if (key == "reg_lambda" || key == "lambda_l2") bp.lambda_l2 = v;
    else if (key == "learning_rate" || key == "eta") bp.learning_rate = v;
    else if (key == "max_bin") bp.max_bin = as_int(key, v);
    else if (key == "subsample") bp.subsample = v;
    else if (key == "n_rounds" || key == "iterations") bp.n_rounds = as_int(key, v);
    else if (key == "early_stopping_rounds") bp.early_stopping_rounds = as_int(key, v);
    else if (key == "min_samples_leaf") bp.min_samples_leaf = as_int(key, v);
    else if (!is_loss_key(key)) throw ParamError("unknown search parameter '" + key + "'");
  }
  return bp;
}

LossParams to_loss_params(const ParamMap& params) {
  LossParams lp;
  auto take = [&](const char* key, std::optional<double>& out) {
    if (auto it = params.find(key); it != params.end()) out = it->second;
  };
  take("w", lp.w);
  take("gamma", lp.gamma);
  take("gamma_pos", lp.gamma_pos);
  take("gamma_neg", lp.gamma_neg);
  take("margin", lp.margin);
  take("beta", lp.beta);
  return lp;
}

LossSpec make_loss(LossKind kind, const Dataset& d, std::span<const std::size_t> rows, const LossParams& params) {
  std::vector<std::size_t> counts;
  if (kind == LossKind::CBCE && d.task().kind != TaskKind::MultiLabel) counts = d.y.counts(rows);
  return LossSpec::make(kind, d.task(), params, counts);
}

// ---------------------------------------------------------------------------

std::string TrialRecord::to_json() const {
  ojson j;
  j["trial"] = index;
  j["params"] = ojson(params);
  j["fold_f1"] = fold_f1;
  j["fold_best_iteration"] = fold_best_iteration;
  j["mean_f1"] = mean_f1;
  j["status"] = failed ? "failed" : "ok";
  if (failed) j["error"] = error;
  return j.dump();
}

TrialRecord TrialRecord::from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    TrialRecord r;
    r.index = j.at("trial").get<int>();
    r.params = j.at("params").get<ParamMap>();
    r.fold_f1 = j.at("fold_f1").get<std::vector<double>>();
    r.fold_best_iteration = j.at("fold_best_iteration").get<std::vector<int>>();
    r.mean_f1 = j.at("mean_f1").get<double>();
    r.failed = j.at("status").get<std::string>() != "ok";
    if (j.contains("error")) r.error = j.at("error").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("invalid trial record: ") + e.what());
  }
}

namespace {

void require_all_classes(const Dataset& d, std::span<const std::size_t> rows, const char* what, std::size_t fold) {
  if (d.task().kind != TaskKind::MultiClass) return;
  const auto counts = d.y.counts(rows);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw SplitError("fold " + std::to_string(fold) + " " + what + " rows have no samples of class " +
                       std::to_string(c));
    }
  }
}

struct FoldFit {
  double f1 = 0.0;
  int best_iteration = 0;
};

FoldFit fit_fold(const Dataset& d, const Fold& fold, std::size_t fold_index, LossKind kind, const BoostParams& bp,
                 const LossParams& lp, std::span<const std::size_t> score_rows, Averaging averaging) {
  require_all_classes(d, fold.fit, "training", fold_index);
  require_all_classes(d, fold.validation, "validation", fold_index);
  const LossSpec spec = make_loss(kind, d, fold.fit, lp);
  const Ensemble e = fit(d, spec, bp, fold.fit, fold.validation);
  const Matrix prob = e.predict_proba(take_rows(d.x, score_rows));
  return {f1(prob, d.y, score_rows, 0.5, averaging).value, e.best_iteration};
}

BoostParams fold_params(Profile profile, const ParamMap& params, const SplitPlan& plan, std::size_t fold) {
  BoostParams bp = to_boost_params(profile, params);
  bp.threads = 1;
  bp.seed = hash_combine(plan.seed, fold);
  return bp;
}

}  // namespace

TrialRecord evaluate_trial(const Dataset& d, const SplitPlan& plan, LossKind kind, Profile profile,
                           const ParamMap& params, Averaging averaging, int index) {
  TrialRecord rec;
  rec.index = index;
  rec.params = params;
  try {
    const LossParams lp = to_loss_params(params);
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
      const BoostParams bp = fold_params(profile, params, plan, f);
      const FoldFit r = fit_fold(d, plan.folds[f], f, kind, bp, lp, plan.folds[f].validation, averaging);
      rec.fold_f1.push_back(r.f1);
      rec.fold_best_iteration.push_back(r.best_iteration);
    }
    rec.mean_f1 = std::accumulate(rec.fold_f1.begin(), rec.fold_f1.end(), 0.0) / static_cast<double>(rec.fold_f1.size());
  } catch (const Error& e) {
    rec.failed = true;
    rec.error = e.what();
    rec.mean_f1 = 0.0;
  }
  return rec;
}

SearchResult run_search(const Dataset& d, const SplitPlan& plan, LossKind kind, Profile profile,
                        const SearchOptions& opts) {
  if (opts.n_trials < 1) throw ParamError("n_trials must be >= 1");
  if (plan.folds.empty()) throw ParamError("split plan has no folds");
  if (!supports(kind, d.task().kind)) {
    throw CapabilityError("loss " + loss_kind_name(kind) + " is not available for " + task_kind_name(d.task().kind) +
                          " tasks (capability table)");
  }
  const SearchSpace space = opts.space ? *opts.space : default_space(profile, kind);
  space.validate();
  const Averaging averaging = opts.averaging.value_or(default_averaging(d.task()));

  SearchResult result;
  const auto n = static_cast<std::size_t>(opts.n_trials);
  result.records.resize(n);
  std::vector<bool> finished(n, false);
  std::size_t next_emit = 0;
  std::mutex emit_mutex;

  parallel_for(n, opts.threads, [&](std::size_t t) {
    const int index = static_cast<int>(t);
    TrialRecord rec = evaluate_trial(d, plan, kind, profile, sample(space, opts.seed, index), averaging, index);
    std::lock_guard<std::mutex> lock(emit_mutex);
    result.records[t] = std::move(rec);
    finished[t] = true;
    while (next_emit < n && finished[next_emit]) {
      if (opts.on_record) opts.on_record(result.records[next_emit]);
      ++next_emit;
    }
  });

  for (std::size_t t = 0; t < n; ++t) {
    const auto& r = result.records[t];
    if (r.failed) continue;
    if (result.best < 0 || r.mean_f1 > result.records[result.best].mean_f1) result.best = static_cast<int>(t);
  }
  if (result.best < 0) throw Error("all " + std::to_string(n) + " trials failed: " + result.records[0].error);
  return result;
}

FinalEvaluation final_evaluate(const Dataset& d, const SplitPlan& plan, LossKind kind, Profile profile,
                               const ParamMap& params, std::optional<Averaging> averaging, int threads) {
  if (plan.test.empty()) throw ParamError("split plan has an empty test set");
  const Averaging avg = averaging.value_or(default_averaging(d.task()));
  const LossParams lp = to_loss_params(params);
  const std::size_t k = plan.folds.size();
  std::vector<FoldFit> fits(k);
  parallel_for(k, threads, [&](std::size_t f) {
    fits[f] = fit_fold(d, plan.folds[f], f, kind, fold_params(profile, params, plan, f), lp, plan.test, avg);
  });
  FinalEvaluation out;
  for (const auto& r : fits) {
    out.fold_f1.push_back(r.f1);
    out.fold_best_iteration.push_back(r.best_iteration);
  }
  out.mean = std::accumulate(out.fold_f1.begin(), out.fold_f1.end(), 0.0) / static_cast<double>(k);
  double ss = 0.0;
  for (double v : out.fold_f1) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(k));
  return out;
}

std::string params_to_config(Profile profile, LossKind kind, const ParamMap& params) {
  const BoostParams bp = to_boost_params(profile, params);
  const LossParams lp = to_loss_params(params);
  ojson loss;
  loss["kind"] = loss_kind_name(kind);
  if (lp.w) loss["w"] = *lp.w;
  if (lp.gamma) loss["gamma"] = *lp.gamma;
  if (lp.gamma_pos) loss["gamma_pos"] = *lp.gamma_pos;
  if (lp.gamma_neg) loss["gamma_neg"] = *lp.gamma_neg;
  if (lp.margin) loss["margin"] = *lp.margin;
  if (lp.beta) loss["beta"] = *lp.beta;
  ojson booster;
  booster["n_rounds"] = bp.n_rounds;
  booster["learning_rate"] = bp.learning_rate;
  booster["max_depth"] = bp.max_depth;
  booster["max_leaves"] = bp.max_leaves;
  booster["lambda_l2"] = bp.lambda_l2;
  booster["alpha_l1"] = bp.alpha_l1;
  booster["min_samples_leaf"] = bp.min_samples_leaf;
  booster["max_bin"] = bp.max_bin;
  booster["subsample"] = bp.subsample;
  booster["early_stopping_rounds"] = bp.early_stopping_rounds;
  booster["h_floor"] = bp.h_floor;
  booster["tree_per_output"] = bp.tree_per_output;
  ojson j;
  j["loss"] = std::move(loss);
  j["booster"] = std::move(booster);
  return j.dump(2);
}

}  // namespace cbgbdt
