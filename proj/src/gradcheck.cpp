#include "cbgbdt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cbgbdt/tuner.hpp"

namespace cbgbdt {

namespace {

Task make_task(TaskKind kind, int k) {
  switch (kind) {
    case TaskKind::Binary: return Task::binary();
    case TaskKind::MultiClass: return Task::multiclass(k);
    case TaskKind::MultiLabel: return Task::multilabel(k);
  }
  return Task::binary();
}

void draw_sample(const Task& task, Rng& rng, std::vector<double>& y, std::vector<double>& z) {
  const auto n = static_cast<std::size_t>(task.n_outputs());
  y.assign(n, 0.0);
  z.resize(n);
  for (auto& v : z) v = -6.0 + 12.0 * rng.uniform();
  if (task.kind == TaskKind::MultiClass) {
    y[rng.below(n)] = 1.0;
  } else {
    for (auto& v : y) v = static_cast<double>(rng.below(2));
  }
}

std::vector<std::size_t> draw_counts(const Task& task, Rng& rng) {
  std::vector<std::size_t> c(static_cast<std::size_t>(task.n_classes));
  for (auto& v : c) v = 1 + rng.below(1000);
  return c;
}

double rel_err(double analytic, double numeric) { return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)); }

bool near_kink(const LossSpec& spec, std::span<const double> z, double band) {
  if (spec.margin() <= 0.0) return false;
  std::vector<double> p(z.size());
  if (spec.task().kind == TaskKind::MultiClass) {
    softmax(z, p);
  } else {
    for (std::size_t k = 0; k < z.size(); ++k) p[k] = sigmoid(z[k]);
  }
  return std::any_of(p.begin(), p.end(), [&](double v) { return std::abs(v - spec.margin()) < band; });
}

}  // namespace

FdResult fd_check(LossKind kind, TaskKind task_kind, const FdOptions& opts) {
  FdResult res;
  res.kind = kind;
  res.task = task_kind;
  const Task task = make_task(task_kind, opts.n_classes);
  const SearchSpace grid = default_space(Profile::LeafWise, kind);
  const auto n = static_cast<std::size_t>(task.n_outputs());
  Rng rng(hash_combine(opts.seed, hash_combine(static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(task_kind))));
  std::vector<double> y, z, g(n), h(n), gp(n), gm(n), scratch(n);

  for (int draw = 0; draw < opts.draws; ++draw) {
    const LossParams lp = to_loss_params(sample(grid, rng.next(), draw));
    const std::vector<std::size_t> counts = kind == LossKind::CBCE ? draw_counts(task, rng) : std::vector<std::size_t>{};
    const LossSpec spec = LossSpec::make(kind, task, lp, counts);
    draw_sample(task, rng, y, z);
    if (near_kink(spec, z, opts.band)) {
      ++res.skipped;
      continue;
    }
    ++res.checked;
    loss_grad_hess_raw(spec, y, z, g, h);
    if (kind == LossKind::WCE) {
      for (auto& v : g) v *= opts.wce_grad_scale;
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double z0 = z[k];
      z[k] = z0 + opts.step;
      const double lp_val = loss_value(spec, y, z);
      loss_grad_hess_raw(spec, y, z, gp, scratch);
      z[k] = z0 - opts.step;
      const double lm_val = loss_value(spec, y, z);
      loss_grad_hess_raw(spec, y, z, gm, scratch);
      z[k] = z0;
      const double fd1 = (lp_val - lm_val) / (2.0 * opts.step);
      const double fd2 = (gp[k] - gm[k]) / (2.0 * opts.step);
      const double eg = rel_err(g[k], fd1);
      const double eh = rel_err(h[k], fd2);
      res.worst_grad = std::max(res.worst_grad, eg);
      res.worst_hess = std::max(res.worst_hess, eh);
      if (eg > opts.grad_tol || eh > opts.hess_tol) {
        if (res.failures == 0) {
          char buf[256];
          std::snprintf(buf, sizeof(buf), "draw %d output %zu: g=%.12g fd=%.12g h=%.12g fd=%.12g", draw, k, g[k], fd1,
                        h[k], fd2);
          res.first_failure = buf;
        }
        ++res.failures;
      }
    }
  }
  return res;
}

std::vector<FdResult> fd_suite(const FdOptions& opts) {
  std::vector<FdResult> out;
  for (LossKind kind : kAllLossKinds) {
    for (TaskKind task : {TaskKind::Binary, TaskKind::MultiClass, TaskKind::MultiLabel}) {
      if (supports(kind, task)) out.push_back(fd_check(kind, task, opts));
    }
  }
  return out;
}

namespace {

struct Side {
  LossKind kind;
  LossParams params;
};

using Field = std::optional<double> LossParams::*;

LossParams params_of(std::initializer_list<std::pair<Field, double>> values) {
  LossParams p;
  for (const auto& [field, v] : values) p.*field = v;
  return p;
}

// Compares two losses on random samples for every task in `tasks`.
void compare(IdentityResult& r, const std::vector<TaskKind>& tasks, const std::function<std::pair<Side, Side>(Rng&)>& pick,
             std::uint64_t seed, int draws, double tol) {
  Rng rng(seed);
  std::vector<double> y, z;
  for (TaskKind tk : tasks) {
    const Task task = make_task(tk, 4);
    const auto n = static_cast<std::size_t>(task.n_outputs());
    std::vector<double> ga(n), ha(n), gb(n), hb(n);
    for (int i = 0; i < draws; ++i) {
      auto [a, b] = pick(rng);
      const auto counts = draw_counts(task, rng);
      const LossSpec sa = LossSpec::make(a.kind, task, a.params, a.kind == LossKind::CBCE ? counts : std::vector<std::size_t>{});
      const LossSpec sb = LossSpec::make(b.kind, task, b.params, b.kind == LossKind::CBCE ? counts : std::vector<std::size_t>{});
      draw_sample(task, rng, y, z);
      const double va = loss_grad_hess_raw(sa, y, z, ga, ha);
      const double vb = loss_grad_hess_raw(sb, y, z, gb, hb);
      double worst = rel_err(va, vb);
      for (std::size_t k = 0; k < n; ++k) worst = std::max({worst, rel_err(ga[k], gb[k]), rel_err(ha[k], hb[k])});
      r.worst = std::max(r.worst, worst);
      if (worst > tol && r.passed) {
        r.passed = false;
        r.detail = task_kind_name(tk) + " draw " + std::to_string(i);
      }
    }
  }
}

}  // namespace

std::vector<IdentityResult> identity_suite(std::uint64_t seed, int draws, double tol) {
  const std::vector<TaskKind> sigmoid_tasks = {TaskKind::Binary, TaskKind::MultiLabel};
  const std::vector<TaskKind> all_tasks = {TaskKind::Binary, TaskKind::MultiClass, TaskKind::MultiLabel};
  const std::vector<TaskKind> single_label = {TaskKind::Binary, TaskKind::MultiClass};
  auto choose = [](Rng& rng, std::initializer_list<double> v) { return *(v.begin() + rng.below(v.size())); };
  std::vector<IdentityResult> out;
  std::uint64_t stream = 0;

  auto run = [&](const std::string& name, const std::vector<TaskKind>& tasks,
                 const std::function<std::pair<Side, Side>(Rng&)>& pick,
                 const std::function<std::pair<Side, Side>(Rng&)>& multiclass_pick) {
    IdentityResult r;
    r.name = name;
    compare(r, tasks, pick, hash_combine(seed, ++stream), draws, tol);
    if (multiclass_pick) compare(r, {TaskKind::MultiClass}, multiclass_pick, hash_combine(seed, ++stream), draws, tol);
    out.push_back(r);
  };

  const Side ce{LossKind::CE, {}};
  const Side fl0{LossKind::FL, params_of({{&LossParams::gamma, 0.0}})};
  const Side wce1{LossKind::WCE, params_of({{&LossParams::w, 1.0}})};
  const Side ace0{LossKind::ACE, params_of({{&LossParams::margin, 0.0}})};

  run("FL(gamma=0) == CE", sigmoid_tasks, [&](Rng&) { return std::pair{fl0, ce}; },
      [&](Rng&) { return std::pair{fl0, wce1}; });
  run("WCE(w=1) == CE", sigmoid_tasks, [&](Rng&) { return std::pair{wce1, ce}; },
      [&](Rng&) { return std::pair{wce1, ace0}; });
  run("ACE(m=0) == CE", sigmoid_tasks, [&](Rng&) { return std::pair{ace0, ce}; },
      [&](Rng&) { return std::pair{ace0, fl0}; });
  run("AWE(m=0) == WCE", all_tasks,
      [&](Rng& rng) {
        const double w = choose(rng, {2, 3, 5});
        return std::pair{Side{LossKind::AWE, params_of({{&LossParams::w, w}, {&LossParams::margin, 0.0}})}, Side{LossKind::WCE, params_of({{&LossParams::w, w}})}};
      },
      nullptr);
  run("ASL(gamma_pos=gamma_neg, m=0) == FL", all_tasks,
      [&](Rng& rng) {
        const double g = choose(rng, {0.5, 1, 2});
        return std::pair{Side{LossKind::ASL, params_of({{&LossParams::gamma_pos, g}, {&LossParams::gamma_neg, g}, {&LossParams::margin, 0.0}})},
                         Side{LossKind::FL, params_of({{&LossParams::gamma, g}})}};
      },
      nullptr);
  run("CBCE(beta=0) == CE", single_label, [&](Rng&) { return std::pair{Side{LossKind::CBCE, params_of({{&LossParams::beta, 0.0}})}, ce}; },
      nullptr);
  return out;
}

}  // namespace cbgbdt
