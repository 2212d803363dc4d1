#include <algorithm>
#include <cmath>
#include <set>

#include "cbgbdt/tuner.hpp"
#include "doctest.h"
#include "json.hpp"
#include "synth.hpp"

using namespace cbgbdt;

namespace {

std::vector<std::string> names(const SearchSpace& s) {
  std::vector<std::string> out;
  for (const auto& d : s.dims) out.push_back(d.name);
  return out;
}

SearchSpace small_space(double lr_lo = 0.05, double lr_hi = 0.5) {
  SearchSpace s;
  s.fixed = {{"n_rounds", 60}, {"early_stopping_rounds", 10}};
  s.dims = {Dimension::log_int("num_leaves", 4, 16), Dimension::log_real("learning_rate", lr_lo, lr_hi)};
  return s;
}

}  // namespace

TEST_CASE("default spaces") {
  const SearchSpace lw = default_space(Profile::LeafWise, LossKind::WCE);
  CHECK(names(lw) == std::vector<std::string>{"num_leaves", "reg_alpha", "reg_lambda", "learning_rate", "w"});
  const Dimension* nl = lw.find("num_leaves");
  REQUIRE(nl);
  CHECK(nl->kind == Dimension::Kind::LogInt);
  CHECK(nl->lo == 8);
  CHECK(nl->hi == 64);
  CHECK(lw.find("reg_alpha")->lo == 1e-4);
  CHECK(lw.find("reg_alpha")->hi == 2);
  CHECK(lw.find("learning_rate")->lo == 0.01);
  CHECK(lw.find("learning_rate")->hi == 1.0);
  CHECK(lw.find("w")->choices == std::vector<double>{2, 3, 5});
  CHECK(lw.fixed.at("n_rounds") == 1000);
  CHECK(lw.fixed.at("early_stopping_rounds") == 50);

  const SearchSpace sk = default_space(Profile::Sketch, LossKind::ASL);
  REQUIRE(sk.find("max_bin"));
  CHECK(sk.find("max_bin")->kind == Dimension::Kind::LogInt);
  CHECK(sk.find("max_bin")->lo == 64);
  CHECK(sk.find("max_bin")->hi == 256);
  CHECK(sk.find("subsample")->lo == 0.05);
  CHECK(sk.find("subsample")->hi == 1.0);
  CHECK(sk.find("gamma_pos")->choices == std::vector<double>{0.0, 0.1});
  CHECK(sk.find("margin")->choices == std::vector<double>{0.05, 0.2});

  const SearchSpace dw = default_space(Profile::DepthWise, LossKind::CE);
  for (const char* loss_key : {"w", "gamma", "gamma_pos", "gamma_neg", "margin", "beta"}) CHECK(dw.find(loss_key) == nullptr);

  for (Profile p : kAllProfiles)
    for (LossKind k : kAllLossKinds) CHECK_NOTHROW(default_space(p, k).validate());
}

TEST_CASE("space validation") {
  SearchSpace s;
  s.dims = {Dimension::log_real("learning_rate", 0.0, 1.0)};
  CHECK_THROWS_AS(s.validate(), ParamError);
  s.dims = {Dimension::log_real("learning_rate", 0.5, 0.1)};
  CHECK_THROWS_AS(s.validate(), ParamError);
  s.dims = {Dimension::choice("w", {})};
  CHECK_THROWS_AS(s.validate(), ParamError);
}

TEST_CASE("sampling") {
  const SearchSpace s = default_space(Profile::Sketch, LossKind::AWE);
  CHECK(sample(s, 5, 3) == sample(s, 5, 3));
  CHECK(sample(s, 5, 3) != sample(s, 5, 4));
  CHECK(sample(s, 5, 3) != sample(s, 6, 3));

  SearchSpace lr;
  lr.dims = {Dimension::log_real("x", 0.01, 1.0), Dimension::log_int("n", 2, 10), Dimension::choice("w", {2, 3, 5})};
  std::vector<double> xs;
  std::set<double> ws, ns;
  for (int i = 0; i < 10000; ++i) {
    const ParamMap m = sample(lr, 77, i);
    xs.push_back(m.at("x"));
    ws.insert(m.at("w"));
    ns.insert(m.at("n"));
    CHECK(m.at("x") >= 0.01);
    CHECK(m.at("x") <= 1.0);
  }
  std::nth_element(xs.begin(), xs.begin() + 5000, xs.end());
  CHECK(xs[5000] >= 0.08);
  CHECK(xs[5000] <= 0.125);
  CHECK(ws == std::set<double>{2, 3, 5});
  CHECK(ns == std::set<double>{2, 3, 4, 5, 6, 7, 8, 9, 10});
}

TEST_CASE("parameter translation") {
  const BoostParams lw = to_boost_params(Profile::LeafWise, {{"num_leaves", 12}, {"reg_alpha", 0.1}, {"reg_lambda", 0.2}, {"learning_rate", 0.3}, {"w", 3}});
  CHECK(lw.max_leaves == 12);
  CHECK(lw.max_depth <= 0);
  CHECK(lw.alpha_l1 == 0.1);
  CHECK(lw.lambda_l2 == 0.2);
  CHECK(lw.learning_rate == 0.3);
  CHECK(lw.tree_per_output);
  const BoostParams dw = to_boost_params(Profile::DepthWise, {{"max_depth", 4}, {"eta", 0.05}, {"iterations", 7}});
  CHECK(dw.max_depth == 4);
  CHECK(dw.learning_rate == 0.05);
  CHECK(dw.n_rounds == 7);
  CHECK_FALSE(to_boost_params(Profile::Sketch, {}).tree_per_output);
  CHECK_THROWS_AS(to_boost_params(Profile::Sketch, {{"colour", 1}}), ParamError);
  CHECK_THROWS_AS(to_boost_params(Profile::Sketch, {{"max_depth", 2.5}}), ParamError);
  const LossParams lp = to_loss_params({{"w", 5}, {"margin", 0.2}, {"learning_rate", 0.1}});
  CHECK(lp.w == 5.0);
  CHECK(lp.margin == 0.2);
  CHECK_FALSE(lp.gamma.has_value());

  const auto cfg = nlohmann::json::parse(params_to_config(Profile::LeafWise, LossKind::AWE, {{"w", 5}, {"margin", 0.2}, {"num_leaves", 9}}));
  CHECK(cfg["loss"]["kind"] == "AWE");
  CHECK(cfg["loss"]["w"] == 5.0);
  CHECK(cfg["booster"]["max_leaves"] == 9);
}

TEST_CASE("class-balanced loss takes counts from the given rows") {
  const Dataset d = synth::blobs({40, 10, 5}, 2, 1.0, 1);
  const std::vector<std::size_t> rows = {0, 1, 2, 40, 41, 50};
  const LossSpec s = make_loss(LossKind::CBCE, d, rows, {});
  CHECK(s.class_counts() == std::vector<std::size_t>{3, 2, 1});
}

TEST_CASE("trial records") {
  TrialRecord r;
  r.index = 4;
  r.params = {{"learning_rate", 0.1}, {"w", 3}};
  r.fold_f1 = {50, 60.5};
  r.fold_best_iteration = {3, 9};
  r.mean_f1 = 55.25;
  const TrialRecord back = TrialRecord::from_json(r.to_json());
  CHECK(back.index == 4);
  CHECK(back.params == r.params);
  CHECK(back.fold_f1 == r.fold_f1);
  CHECK(back.fold_best_iteration == r.fold_best_iteration);
  CHECK_FALSE(back.failed);
  CHECK(r.to_json().find('\n') == std::string::npos);
  CHECK_THROWS_AS(TrialRecord::from_json("{\"trial\":1}"), LoadError);
}

TEST_CASE("search records, ranking and determinism") {
  const Dataset d = synth::gaussian_binary(400, 4, 1.5, 2);
  const SplitPlan plan = make_split_plan(d, {1, 0.2, 5, true});
  SearchOptions o;
  o.n_trials = 6;
  o.seed = 9;
  o.space = small_space();
  std::vector<int> emitted;
  o.on_record = [&](const TrialRecord& r) { emitted.push_back(r.index); };
  const SearchResult a = run_search(d, plan, LossKind::WCE, Profile::LeafWise, o);
  CHECK(emitted == std::vector<int>{0, 1, 2, 3, 4, 5});
  REQUIRE(a.records.size() == 6);
  for (const auto& r : a.records) {
    CHECK_FALSE(r.failed);
    CHECK(r.fold_f1.size() == 5);
    CHECK(r.fold_best_iteration.size() == 5);
    double s = 0;
    for (double v : r.fold_f1) s += v;
    CHECK(r.mean_f1 == doctest::Approx(s / 5).epsilon(1e-15));
    CHECK(a.best_record().mean_f1 >= r.mean_f1);
  }
  for (int i = 0; i < a.best; ++i) CHECK(a.records[i].mean_f1 < a.best_record().mean_f1);

  o.on_record = nullptr;
  o.threads = 3;
  const SearchResult b = run_search(d, plan, LossKind::WCE, Profile::LeafWise, o);
  CHECK(b.best == a.best);
  for (int i = 0; i < 6; ++i) CHECK(b.records[i].to_json() == a.records[i].to_json());

  o.threads = 1;
  o.n_trials = 5;
  const SearchResult prefix = run_search(d, plan, LossKind::WCE, Profile::LeafWise, o);
  for (int i = 0; i < 5; ++i) CHECK(prefix.records[i].to_json() == a.records[i].to_json());

  o.n_trials = 1;
  CHECK(run_search(d, plan, LossKind::WCE, Profile::LeafWise, o).best == 0);
}

TEST_CASE("a superior configuration in trial 0 is selected") {
  // Imbalanced and separable: with 20 rounds a learning rate of 0.5 separates
  // the classes while 0.011 never lifts the minority above 0.5.
  const Dataset d = synth::gaussian_binary(300, 4, 6.0, 3);
  const SplitPlan plan = make_split_plan(d, {2, 0.2, 5, true});
  SearchSpace s;
  s.fixed = {{"n_rounds", 20}, {"early_stopping_rounds", 20}, {"num_leaves", 8}};
  s.dims = {Dimension::choice("learning_rate", {0.5, 0.011})};
  std::uint64_t seed = 0;
  auto fits = [&](std::uint64_t sd) {
    if (sample(s, sd, 0).at("learning_rate") != 0.5) return false;
    for (int i = 1; i < 4; ++i)
      if (sample(s, sd, i).at("learning_rate") != 0.011) return false;
    return true;
  };
  while (!fits(seed)) ++seed;
  SearchOptions o;
  o.n_trials = 4;
  o.seed = seed;
  o.space = s;
  const SearchResult r = run_search(d, plan, LossKind::CE, Profile::LeafWise, o);
  CHECK(r.best == 0);
  CHECK(r.records[0].mean_f1 > 90.0);
  for (int i = 1; i < 4; ++i) CHECK(r.records[i].mean_f1 < 1e-9);
}

TEST_CASE("trials fail when a fold lacks a class") {
  const Dataset d = synth::blobs({30, 30, 5}, 2, 2.0, 4);
  SplitPlan plan;
  plan.seed = 1;
  plan.k = 2;
  for (std::size_t i = 0; i < d.size(); ++i) (i % 7 == 0 ? plan.test : plan.train).push_back(i);
  // Every class-2 training row lands in the first fold's validation set.
  Fold a, b;
  for (std::size_t r : plan.train) {
    const bool rare = d.y.cls(r) == 2;
    ((rare || r % 2 == 0) ? a.validation : b.validation).push_back(r);
  }
  a.fit = b.validation;
  b.fit = a.validation;
  plan.folds = {a, b};
  const TrialRecord rec = evaluate_trial(d, plan, LossKind::CE, Profile::Sketch, {{"n_rounds", 5}}, Averaging::Macro, 3);
  CHECK(rec.failed);
  CHECK(rec.index == 3);
  CHECK(rec.error.find("class 2") != std::string::npos);
  SearchOptions o;
  o.n_trials = 2;
  o.space = small_space();
  CHECK_THROWS_AS(run_search(d, plan, LossKind::CE, Profile::Sketch, o), Error);
}

TEST_CASE("search rejects unsupported losses") {
  const Dataset d = synth::block_multilabel(100, 3, 1, 1);
  const SplitPlan plan = make_split_plan(d, {1, 0.2, 5, false});
  CHECK_THROWS_AS(run_search(d, plan, LossKind::CBCE, Profile::Sketch, {}), CapabilityError);
}

TEST_CASE("final evaluation") {
  const Dataset d = synth::blobs({120, 60, 40}, 3, 1.5, 6);
  const SplitPlan plan = make_split_plan(d, {3, 0.2, 5, true});
  const ParamMap params = {{"n_rounds", 40}, {"early_stopping_rounds", 10}, {"learning_rate", 0.3}, {"max_depth", 3}};
  const FinalEvaluation fe = final_evaluate(d, plan, LossKind::FL, Profile::DepthWise, params);
  REQUIRE(fe.fold_f1.size() == 5);
  const auto [lo, hi] = std::minmax_element(fe.fold_f1.begin(), fe.fold_f1.end());
  CHECK(fe.mean >= *lo);
  CHECK(fe.mean <= *hi);
  double s = 0, ss = 0;
  for (double v : fe.fold_f1) s += v;
  for (double v : fe.fold_f1) ss += (v - s / 5) * (v - s / 5);
  CHECK(fe.mean == doctest::Approx(s / 5).epsilon(1e-15));
  CHECK(fe.std == doctest::Approx(std::sqrt(ss / 5)).epsilon(1e-12));
  const FinalEvaluation again = final_evaluate(d, plan, LossKind::FL, Profile::DepthWise, params, {}, 3);
  CHECK(again.fold_f1 == fe.fold_f1);

  // Constant features: every refit is the prior alone.
  std::vector<int> y(100);
  for (int i = 0; i < 100; ++i) y[i] = i % 3 == 0;
  const Dataset trivial(FeatureMatrix(100, 1, std::vector<double>(100, 1.0)), LabelBlock::binary(y));
  const SplitPlan tp = make_split_plan(trivial, {1, 0.2, 5, true});
  const FinalEvaluation z = final_evaluate(trivial, tp, LossKind::CE, Profile::LeafWise, {{"n_rounds", 10}});
  CHECK(z.std == 0.0);
}
