#include "cbgbdt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cbgbdt {

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::CE: return "CE";
    case LossKind::WCE: return "WCE";
    case LossKind::FL: return "FL";
    case LossKind::ASL: return "ASL";
    case LossKind::ACE: return "ACE";
    case LossKind::AWE: return "AWE";
    case LossKind::CBCE: return "CBCE";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  std::string up = name;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (up == "CB-CE") up = "CBCE";
  for (LossKind k : kAllLossKinds) {
    if (loss_kind_name(k) == up) return k;
  }
  throw ParamError("unknown loss kind '" + name + "' (expected CE, WCE, FL, ASL, ACE, AWE or CBCE)");
}

bool supports(LossKind kind, TaskKind task) {
  return !(kind == LossKind::CBCE && task == TaskKind::MultiLabel);
}

// ---------------------------------------------------------------------------

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) { return -softplus(-z); }

void softmax(std::span<const double> z, std::span<double> out) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = std::exp(z[k] - zmax);
    sum += out[k];
  }
  for (std::size_t k = 0; k < z.size(); ++k) out[k] /= sum;
}

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out(z.size());
  softmax(z, out);
  return out;
}

std::vector<double> cbce_weights(std::span<const std::size_t> counts, double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) throw ParamError("CBCE beta must lie in [0, 1)");
  if (counts.empty()) throw ParamError("CBCE needs per-class sample counts");
  std::vector<double> w(counts.size());
  double total = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] < 1) throw ParamError("CBCE class counts must all be >= 1");
    // 1 - beta^n via expm1 keeps precision when beta^n is close to 1.
    const double eff = beta == 0.0 ? 1.0 : -std::expm1(static_cast<double>(counts[k]) * std::log(beta));
    w[k] = (1.0 - beta) / eff;
    total += w[k];
  }
  const double scale = static_cast<double>(counts.size()) / total;
  for (double& v : w) v *= scale;
  return w;
}

// ---------------------------------------------------------------------------

LossSpec LossSpec::make(LossKind kind, Task task, const LossParams& params,
                        std::vector<std::size_t> class_counts) {
  if (!supports(kind, task.kind)) {
    throw CapabilityError("loss " + loss_kind_name(kind) + " is not available for " + task_kind_name(task.kind) +
                          " tasks (capability table)");
  }
  const bool wants_w = kind == LossKind::WCE || kind == LossKind::AWE;
  const bool wants_gamma = kind == LossKind::FL;
  const bool wants_asl = kind == LossKind::ASL;
  const bool wants_margin = kind == LossKind::ASL || kind == LossKind::ACE || kind == LossKind::AWE;
  const bool wants_beta = kind == LossKind::CBCE;

  auto reject = [&](const std::optional<double>& v, bool allowed, const char* name) {
    if (v && !allowed) {
      throw ParamError(std::string("parameter '") + name + "' does not apply to loss " + loss_kind_name(kind));
    }
    if (v && !std::isfinite(*v)) throw ParamError(std::string("parameter '") + name + "' must be finite");
  };
  reject(params.w, wants_w, "w");
  reject(params.gamma, wants_gamma, "gamma");
  reject(params.gamma_pos, wants_asl, "gamma_pos");
  reject(params.gamma_neg, wants_asl, "gamma_neg");
  reject(params.margin, wants_margin, "margin");
  reject(params.beta, wants_beta, "beta");

  LossSpec s;
  s.kind_ = kind;
  s.task_ = task;
  s.params_ = params;
  s.has_negative_ = !(task.kind == TaskKind::MultiClass && (kind == LossKind::CE || kind == LossKind::CBCE));

  if (wants_w) {
    s.w_ = params.w.value_or(kDefaultW);
    if (!(s.w_ > 0.0)) throw ParamError("w must be > 0");
  }
  if (wants_gamma) {
    s.gamma_pos_ = s.gamma_neg_ = params.gamma.value_or(kDefaultGamma);
    if (s.gamma_pos_ < 0.0) throw ParamError("gamma must be >= 0");
  }
  if (wants_asl) {
    s.gamma_pos_ = params.gamma_pos.value_or(kDefaultGammaPos);
    s.gamma_neg_ = params.gamma_neg.value_or(kDefaultGammaNeg);
    if (s.gamma_pos_ < 0.0 || s.gamma_neg_ < 0.0) throw ParamError("gamma_pos and gamma_neg must be >= 0");
    if (s.gamma_neg_ < s.gamma_pos_) throw ParamError("ASL requires gamma_neg >= gamma_pos");
  }
  if (wants_margin) {
    s.margin_ = params.margin.value_or(kDefaultMargin);
    if (!(s.margin_ >= 0.0 && s.margin_ < 1.0)) throw ParamError("margin must lie in [0, 1)");
  }

  const std::size_t k = static_cast<std::size_t>(task.n_classes);
  if (wants_beta) {
    s.beta_ = params.beta.value_or(kDefaultBeta);
    if (!(s.beta_ >= 0.0 && s.beta_ < 1.0)) throw ParamError("beta must lie in [0, 1)");
    if (class_counts.size() != k) {
      throw ParamError("CBCE needs " + std::to_string(k) + " class counts, got " +
                       std::to_string(class_counts.size()));
    }
    s.class_weights_ = cbce_weights(class_counts, s.beta_);
    s.counts_ = std::move(class_counts);
  } else {
    s.class_weights_.assign(k, 1.0);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Per-label kernels.
//
// For a part function L(p), the kernels return the value together with the
// scaled derivatives
//   gs = p q L'(p)        (dL/dz under a sigmoid link)
//   f  = p^2 q^2 L''(p)
// written so that no factor 1/p or 1/q is formed. Under a sigmoid link
// d2L/dz2 = f + (q - p) gs; the softmax coupling is assembled from the same
// pieces in multiclass_eval.

namespace {

struct PartEval {
  double value = 0.0;
  double gs = 0.0;
  double f = 0.0;
};

inline double pow_or_one(double x, double e) { return e == 0.0 ? 1.0 : std::pow(x, e); }

// (1-p)^gamma log p
PartEval positive_part(double p, double q, double logp, double gamma) {
  PartEval r;
  const double qg = pow_or_one(q, gamma);
  r.value = qg * logp;
  const double ratio = q > 0.0 ? logp / q : -1.0;  // log p / q -> -1 as q -> 0
  const double qg1 = qg * q;
  r.gs = qg1 * (1.0 - gamma * p * ratio);
  r.f = gamma * p * qg1 * ((gamma - 1.0) * p * ratio - 2.0) - qg1 * q;
  return r;
}

// u^gamma log(1-u), u = max(p - m, 0). Zero (value and derivatives) on the
// clipped branch p <= m.
PartEval negative_part(double p, double q, double logq, double gamma, double m) {
  PartEval r;
  double u, logr, s;  // s = q / (1-u)
  if (m == 0.0) {
    u = p;
    logr = logq;
    s = 1.0;
  } else {
    u = p - m;
    if (!(u > 0.0)) return r;
    logr = std::log1p(-u);
    s = q / (q + m);
  }
  if (!(u > 0.0)) return r;
  const double ug = pow_or_one(u, gamma);
  const double ratio = logr / u;
  r.value = ug * logr;
  r.gs = gamma * p * q * ug * ratio - p * ug * s;
  double f = -ug * p * p * s * s;
  if (gamma != 0.0) {
    const double ug1p2 = std::pow(u, gamma - 1.0) * p * p;
    f += gamma * (gamma - 1.0) * ratio * ug1p2 * q * q - 2.0 * gamma * ug1p2 * q * s;
  }
  r.f = f;
  return r;
}

struct LabelTerms {
  double value = 0.0;
  double gs = 0.0;
  double f = 0.0;
};

// -y*c_pos*l_pos - (1-y)*c_neg*l_neg for one label probability.
LabelTerms label_terms(const LossSpec& s, double y, double c_pos, double c_neg, double p, double q, double logp,
                       double logq) {
  LabelTerms t;
  if (y != 0.0) {
    const PartEval a = positive_part(p, q, logp, s.gamma_pos());
    const double c = y * c_pos;
    t.value -= c * a.value;
    t.gs -= c * a.gs;
    t.f -= c * a.f;
  }
  if (s.has_negative_part() && y != 1.0) {
    const PartEval b = negative_part(p, q, logq, s.gamma_neg(), s.margin());
    const double c = (1.0 - y) * c_neg;
    t.value -= c * b.value;
    t.gs -= c * b.gs;
    t.f -= c * b.f;
  }
  return t;
}

double binary_eval(const LossSpec& s, double y, double z, double c_pos, double c_neg, double* g, double* h) {
  const double p = sigmoid(z);
  const double q = sigmoid(-z);
  const LabelTerms t = label_terms(s, y, c_pos, c_neg, p, q, log_sigmoid(z), log_sigmoid(-z));
  if (g != nullptr) {
    *g = t.gs;
    *h = t.f + (q - p) * t.gs;
  }
  return t.value;
}

double multiclass_eval(const LossSpec& s, std::span<const double> y, std::span<const double> z, double* g,
                       double* h) {
  const std::size_t k_out = z.size();
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> e(k_out);
  double sum = 0.0;
  for (std::size_t k = 0; k < k_out; ++k) {
    e[k] = std::exp(z[k] - zmax);
    sum += e[k];
  }
  const double log_sum = std::log(sum);
  const auto& cw = s.class_weights();

  std::vector<double> p(k_out), q(k_out), gs(k_out), f(k_out);
  double value = 0.0;
  for (std::size_t k = 0; k < k_out; ++k) {
    double others = 0.0;
    for (std::size_t j = 0; j < k_out; ++j) {
      if (j != k) others += e[j];
    }
    p[k] = e[k] / sum;
    q[k] = others / sum;
    const double logp = p[k] > 0.5 ? std::log1p(-q[k]) : (z[k] - zmax) - log_sum;
    const double logq = q[k] > 0.5 ? std::log1p(-p[k]) : std::log(others) - log_sum;
    // CBCE weights the whole sample by its class weight, carried on the
    // positive part of the true class.
    const LabelTerms t = label_terms(s, y[k], s.w() * cw[k], 1.0, p[k], q[k], logp, logq);
    value += t.value;
    gs[k] = t.gs;
    f[k] = t.f;
  }
  if (g != nullptr) {
    // dp_j/dz_k = p_j (d_jk - p_k), d2p_j/dz_k2 = (dp_j/dz_k)(1 - 2 p_k).
    for (std::size_t k = 0; k < k_out; ++k) {
      double gk = gs[k];
      double hk = f[k];
      for (std::size_t j = 0; j < k_out; ++j) {
        if (j == k || q[j] <= 0.0) continue;
        const double r = p[k] / q[j];
        gk -= gs[j] * r;
        hk += f[j] * r * r;
      }
      g[k] = gk;
      h[k] = hk + (q[k] - p[k]) * gk;
    }
  }
  return value;
}

double evaluate(const LossSpec& s, std::span<const double> y, std::span<const double> z, double* g, double* h) {
  const std::size_t k_out = static_cast<std::size_t>(s.n_outputs());
  if (y.size() != k_out || z.size() != k_out) {
    throw ShapeError("loss expects " + std::to_string(k_out) + " targets and scores");
  }
  switch (s.task().kind) {
    case TaskKind::Binary: {
      const auto& cw = s.class_weights();
      return binary_eval(s, y[0], z[0], s.w() * cw[1], cw[0], g, h);
    }
    case TaskKind::MultiLabel: {
      double value = 0.0;
      for (std::size_t k = 0; k < k_out; ++k) {
        value += binary_eval(s, y[k], z[k], s.w(), 1.0, g ? g + k : nullptr, h ? h + k : nullptr);
      }
      return value;
    }
    case TaskKind::MultiClass:
      return multiclass_eval(s, y, z, g, h);
  }
  return 0.0;
}

}  // namespace

double loss_value(const LossSpec& spec, std::span<const double> y, std::span<const double> z) {
  return evaluate(spec, y, z, nullptr, nullptr);
}

double loss_grad_hess_raw(const LossSpec& spec, std::span<const double> y, std::span<const double> z,
                          std::span<double> grad, std::span<double> hess_raw) {
  return evaluate(spec, y, z, grad.data(), hess_raw.data());
}

GradHess loss_grad_hess(const LossSpec& spec, std::span<const double> y, std::span<const double> z,
                        double h_floor) {
  const std::size_t k_out = static_cast<std::size_t>(spec.n_outputs());
  GradHess out;
  out.grad.resize(k_out);
  out.hess_raw.resize(k_out);
  loss_grad_hess_raw(spec, y, z, out.grad, out.hess_raw);
  out.hess.resize(k_out);
  for (std::size_t k = 0; k < k_out; ++k) {
    out.hess[k] = out.hess_raw[k] > h_floor ? out.hess_raw[k] : h_floor;
  }
  return out;
}

}  // namespace cbgbdt
