#ifndef CBGBDT_LOSSES_HPP_
#define CBGBDT_LOSSES_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbgbdt/data.hpp"

namespace cbgbdt {

enum class LossKind { CE, WCE, FL, ASL, ACE, AWE, CBCE };

inline constexpr LossKind kAllLossKinds[] = {LossKind::CE,  LossKind::WCE, LossKind::FL,  LossKind::ASL,
                                             LossKind::ACE, LossKind::AWE, LossKind::CBCE};

std::string loss_kind_name(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

/// Capability table: CBCE has no multi-label form, every other loss supports
/// all three tasks.
bool supports(LossKind kind, TaskKind task);

/// Parameters as supplied by a user. Unset entries take the defaults below.
struct LossParams {
  std::optional<double> w;          // positive-part weight (WCE, AWE)
  std::optional<double> gamma;      // focusing exponent (FL)
  std::optional<double> gamma_pos;  // ASL positive exponent
  std::optional<double> gamma_neg;  // ASL negative exponent
  std::optional<double> margin;     // probability shift (ASL, ACE, AWE)
  std::optional<double> beta;       // effective-number parameter (CBCE)
};

inline constexpr double kDefaultW = 3.0;
inline constexpr double kDefaultGamma = 1.0;
inline constexpr double kDefaultGammaPos = 0.0;
inline constexpr double kDefaultGammaNeg = 1.0;
inline constexpr double kDefaultMargin = 0.05;
inline constexpr double kDefaultBeta = 0.999;

/// Immutable, validated loss description.
///
/// Every loss is written per label as l = -y*l_pos(p) - (1-y)*l_neg(p):
///
///   CE   l_pos = log p                 l_neg = log(1-p)
///   WCE  l_pos = w log p               l_neg = log(1-p)
///   FL   l_pos = (1-p)^g log p         l_neg = p^g log(1-p)
///   ASL  l_pos = (1-p)^g+ log p        l_neg = p_m^g- log(1-p_m)
///   ACE  l_pos = log p                 l_neg = log(1-p_m)
///   AWE  l_pos = w log p               l_neg = log(1-p_m)
///   CBCE CE with every sample scaled by its class weight
///
/// with p_m = max(p - m, 0). Binary and multi-label use sigmoid links; the
/// multi-label loss is the sum of per-label binary losses. Multi-class uses
/// softmax: CE and CBCE are -w_y log p_y, the other kinds apply both parts
/// to every class probability under one-hot targets.
class LossSpec {
 public:
  /// Throws CapabilityError for unsupported (kind, task) pairs and ParamError
  /// for parameters that are irrelevant to `kind` or out of range. CBCE needs
  /// `class_counts` (Binary: {neg, pos}; MultiClass: K counts).
  static LossSpec make(LossKind kind, Task task, const LossParams& params = {},
                       std::vector<std::size_t> class_counts = {});

  LossKind kind() const { return kind_; }
  const Task& task() const { return task_; }
  int n_outputs() const { return task_.n_outputs(); }

  /// Parameters as given (unset stays unset); used for serialization.
  const LossParams& params() const { return params_; }
  const std::vector<std::size_t>& class_counts() const { return counts_; }

  double w() const { return w_; }
  double gamma_pos() const { return gamma_pos_; }
  double gamma_neg() const { return gamma_neg_; }
  double margin() const { return margin_; }
  double beta() const { return beta_; }
  /// Per-class weights (all 1 except for CBCE).
  const std::vector<double>& class_weights() const { return class_weights_; }
  bool has_negative_part() const { return has_negative_; }

 private:
  LossKind kind_ = LossKind::CE;
  Task task_;
  LossParams params_;
  std::vector<std::size_t> counts_;
  double w_ = 1.0;
  double gamma_pos_ = 0.0;
  double gamma_neg_ = 0.0;
  double margin_ = 0.0;
  double beta_ = 0.0;
  bool has_negative_ = true;
  std::vector<double> class_weights_;
};

inline constexpr double kDefaultHessianFloor = 1e-6;

/// Per-output derivatives of the loss of one sample. `hess` is floored,
/// `hess_raw` is the analytic second derivative before flooring.
struct GradHess {
  std::vector<double> grad;
  std::vector<double> hess;
  std::vector<double> hess_raw;
};

double sigmoid(double z);
/// log(sigmoid(z)) computed without overflow.
double log_sigmoid(double z);
double softplus(double z);
std::vector<double> softmax(std::span<const double> z);
void softmax(std::span<const double> z, std::span<double> out);

/// Loss of one sample. `y` holds n_outputs() targets (one-hot for
/// multi-class), `z` the raw scores.
double loss_value(const LossSpec& spec, std::span<const double> y, std::span<const double> z);

/// Writes the gradient and the un-floored diagonal Hessian into `grad` and
/// `hess_raw` (each n_outputs() long). Returns the loss value.
double loss_grad_hess_raw(const LossSpec& spec, std::span<const double> y, std::span<const double> z,
                          std::span<double> grad, std::span<double> hess_raw);

GradHess loss_grad_hess(const LossSpec& spec, std::span<const double> y, std::span<const double> z,
                        double h_floor = kDefaultHessianFloor);

/// Class-balanced weights (1-beta)/(1-beta^n_k), normalized to sum to K.
std::vector<double> cbce_weights(std::span<const std::size_t> counts, double beta);

}  // namespace cbgbdt

#endif  // CBGBDT_LOSSES_HPP_
