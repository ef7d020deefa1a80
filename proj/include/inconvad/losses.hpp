#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>

#include "inconvad/autograd.hpp"
#include "inconvad/layers.hpp"
#include "inconvad/types.hpp"

namespace inconvad::losses {

inline constexpr double kDefaultMargin = 0.9;
inline constexpr double kDefaultLambdaMargin = 0.15;
inline constexpr double kDefaultLambdaAgree = 1.0;
inline constexpr double kProbabilityEpsilon = 1e-7;

// A scalar objective together with its named parts; total is
// sum_k weights[k] * components[k].
struct LossValue {
  double total = 0.0;
  std::map<std::string, double> components;
  std::map<std::string, double> weights;

  double weighted_sum() const;
};

// Sum over V, A, D of (y - mu)^2 / (2 var) + log(var) / 2.
double gaussian_nll(const GaussianVad& pred, const VadVector& target);

// y * d^2 + (1 - y) * max(0, m - d)^2 with d the Euclidean distance; y = 1
// means consistent.
double margin_loss(std::span<const double> e_s, std::span<const double> e_t, int y, double margin);

// Cross-entropy with p clamped into [eps, 1 - eps].
double binary_cross_entropy(double p, double target);

// BCE against y_inc = 1 - y plus lambda * margin.
LossValue classifier_loss(double p_inc, int y, std::span<const double> e_s, std::span<const double> e_t,
                          double margin = kDefaultMargin, double lambda_margin = kDefaultLambdaMargin);

// Normalized product of the two per-dimension Gaussians.
GaussianVad agreement_target(const GaussianVad& g_s, const GaussianVad& g_t);

// NLL of the fused mean under the agreement target (fused variance unused).
double agreement_loss(const GaussianVad& fused, const GaussianVad& g_s, const GaussianVad& g_t);

// Labeled: nll + lambda * agree. Unlabeled: lambda * agree.
LossValue fusion_loss(const GaussianVad& fused, const std::optional<VadVector>& labels, const GaussianVad& g_s,
                      const GaussianVad& g_t, double lambda_agree = kDefaultLambdaAgree);

// ---- differentiable forms used during training ----
namespace graph {

using ag::Var;

Matrix vad_row(const VadVector& v);

Var gaussian_nll(Var mu, Var log_var, const VadVector& target);
// Training variant: each dimension's NLL term is scaled by a detached
// variance^beta so confident dimensions cannot starve the mean of an
// uncertain one. beta = 0 reproduces gaussian_nll.
Var weighted_gaussian_nll(Var mu, Var log_var, const VadVector& target, double beta);
Var margin_loss(Var e_s, Var e_t, int y, double margin);
Var binary_cross_entropy(Var p, double target);

// Fills `parts` (when given) with the component values and weights.
Var classifier_loss(Var p_inc, int y, Var e_s, Var e_t, double margin, double lambda_margin,
                    LossValue* parts = nullptr);

// The target is a constant: no gradient reaches the unimodal predictions.
Var agreement_loss(Var fused_mu, const GaussianVad& target);

Var fusion_loss(const nn::HeteroscedasticHead::Output& fused, const std::optional<VadVector>& labels,
                const GaussianVad& agreement, double lambda_agree, LossValue* parts = nullptr);

}  // namespace graph

}  // namespace inconvad::losses
