#include "inconvad/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace inconvad::losses {

namespace {

void require_finite(const GaussianVad& g, const char* what) {
  if (!g.finite()) throw std::invalid_argument(std::string(what) + " is not finite");
}

void require_label(int y) {
  if (y != 0 && y != 1) throw std::invalid_argument("consistency label must be 0 or 1");
}

double finish(LossValue& lv) {
  lv.total = lv.weighted_sum();
  return lv.total;
}

}  // namespace

double LossValue::weighted_sum() const {
  double s = 0.0;
  for (const auto& [name, value] : components) {
    const auto it = weights.find(name);
    s += (it == weights.end() ? 1.0 : it->second) * value;
  }
  return s;
}

double gaussian_nll(const GaussianVad& pred, const VadVector& target) {
  require_finite(pred, "prediction");
  if (!target.finite()) throw std::invalid_argument("target is not finite");
  if (!pred.respects_floor()) throw std::invalid_argument("prediction violates the variance floor");
  double total = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double r = target[k] - pred.mu[k];
    total += r * r / (2.0 * pred.variance(k)) + 0.5 * pred.log_var[k];
  }
  return total;
}

double margin_loss(std::span<const double> e_s, std::span<const double> e_t, int y, double margin) {
  if (e_s.size() != e_t.size()) throw std::invalid_argument("margin_loss: embedding widths differ");
  if (!(margin > 0.0)) throw std::invalid_argument("margin_loss: margin must be positive");
  require_label(y);
  double d2 = 0.0;
  for (std::size_t i = 0; i < e_s.size(); ++i) d2 += (e_s[i] - e_t[i]) * (e_s[i] - e_t[i]);
  if (y == 1) return d2;
  const double gap = std::max(0.0, margin - std::sqrt(d2));
  return gap * gap;
}

double binary_cross_entropy(double p, double target) {
  if (!std::isfinite(p)) throw std::invalid_argument("probability is not finite");
  const double q = std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  return -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
}

LossValue classifier_loss(double p_inc, int y, std::span<const double> e_s, std::span<const double> e_t,
                          double margin, double lambda_margin) {
  require_label(y);
  LossValue lv;
  lv.components["bce"] = binary_cross_entropy(p_inc, 1.0 - y);
  lv.components["margin"] = margin_loss(e_s, e_t, y, margin);
  lv.weights = {{"bce", 1.0}, {"margin", lambda_margin}};
  finish(lv);
  return lv;
}

GaussianVad agreement_target(const GaussianVad& g_s, const GaussianVad& g_t) {
  require_finite(g_s, "speech prediction");
  require_finite(g_t, "text prediction");
  GaussianVad out;
  for (std::size_t k = 0; k < 3; ++k) {
    // Precisions relative to the larger one keep extreme ratios finite.
    const double ls = -g_s.log_var[k];
    const double lt = -g_t.log_var[k];
    const double top = std::max(ls, lt);
    const double ps = std::exp(ls - top);
    const double pt = std::exp(lt - top);
    out.mu[k] = (ps * g_s.mu[k] + pt * g_t.mu[k]) / (ps + pt);
    out.log_var[k] = -(top + std::log(ps + pt));
  }
  return out;
}

double agreement_loss(const GaussianVad& fused, const GaussianVad& g_s, const GaussianVad& g_t) {
  require_finite(fused, "fused prediction");
  const GaussianVad target = agreement_target(g_s, g_t);
  double total = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double r = fused.mu[k] - target.mu[k];
    total += r * r / (2.0 * target.variance(k)) + 0.5 * target.log_var[k];
  }
  return total;
}

LossValue fusion_loss(const GaussianVad& fused, const std::optional<VadVector>& labels, const GaussianVad& g_s,
                      const GaussianVad& g_t, double lambda_agree) {
  if (!labels && lambda_agree == 0.0)
    throw std::invalid_argument("fusion_loss: unlabeled record with agreement disabled carries no signal");
  LossValue lv;
  if (labels) {
    lv.components["nll"] = gaussian_nll(fused, *labels);
    lv.weights["nll"] = 1.0;
  }
  lv.components["agree"] = agreement_loss(fused, g_s, g_t);
  lv.weights["agree"] = lambda_agree;
  finish(lv);
  return lv;
}

namespace graph {

Matrix vad_row(const VadVector& v) { return Matrix::row_vector({v.v, v.a, v.d}); }

Var gaussian_nll(Var mu, Var log_var, const VadVector& target) {
  if (!target.finite()) throw std::invalid_argument("target is not finite");
  ag::Graph& g = *mu.graph();
  Var residual = ag::sub(g.constant(vad_row(target)), mu);
  Var quad = ag::mul(ag::square(residual), ag::exp(ag::scale(log_var, -1.0)));
  return ag::scale(ag::add(ag::sum_all(quad), ag::sum_all(log_var)), 0.5);
}

Var weighted_gaussian_nll(Var mu, Var log_var, const VadVector& target, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("nll beta must be in [0, 1]");
  if (beta == 0.0) return gaussian_nll(mu, log_var, target);
  if (!target.finite()) throw std::invalid_argument("target is not finite");
  Matrix weight = log_var.value();
  for (std::size_t k = 0; k < weight.size(); ++k) weight.raw()[k] = std::exp(beta * weight.raw()[k]);
  Var residual = ag::sub(mu.graph()->constant(vad_row(target)), mu);
  Var per_dim = ag::add(ag::mul(ag::square(residual), ag::exp(ag::scale(log_var, -1.0))), log_var);
  return ag::scale(ag::sum_all(ag::mul_const(per_dim, weight)), 0.5);
}

Var margin_loss(Var e_s, Var e_t, int y, double margin) {
  if (e_s.cols() != e_t.cols() || e_s.rows() != 1 || e_t.rows() != 1)
    throw std::invalid_argument("margin_loss: embedding widths differ");
  if (!(margin > 0.0)) throw std::invalid_argument("margin_loss: margin must be positive");
  require_label(y);
  Var d2 = ag::sum_all(ag::square(ag::sub(e_s, e_t)));
  if (y == 1) return d2;
  Var gap = ag::clamp_min(ag::add_scalar(ag::scale(ag::sqrt(d2), -1.0), margin), 0.0);
  return ag::square(gap);
}

Var binary_cross_entropy(Var p, double target) {
  Var q = ag::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  Var pos = ag::scale(ag::log(q), -target);
  Var neg = ag::scale(ag::log(ag::add_scalar(ag::scale(q, -1.0), 1.0)), -(1.0 - target));
  return ag::add(pos, neg);
}

Var classifier_loss(Var p_inc, int y, Var e_s, Var e_t, double margin, double lambda_margin, LossValue* parts) {
  require_label(y);
  Var bce = binary_cross_entropy(p_inc, 1.0 - y);
  Var m = margin_loss(e_s, e_t, y, margin);
  Var total = ag::add(bce, ag::scale(m, lambda_margin));
  if (parts) {
    parts->components = {{"bce", bce.scalar()}, {"margin", m.scalar()}};
    parts->weights = {{"bce", 1.0}, {"margin", lambda_margin}};
    parts->total = total.scalar();
  }
  return total;
}

Var agreement_loss(Var fused_mu, const GaussianVad& target) {
  ag::Graph& g = *fused_mu.graph();
  Matrix precision_half(1, 3);
  double log_term = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    precision_half[k] = 0.5 / target.variance(k);
    log_term += 0.5 * target.log_var[k];
  }
  Var residual = ag::sub(fused_mu, g.constant(vad_row(target.mu)));
  return ag::add_scalar(ag::sum_all(ag::mul_const(ag::square(residual), precision_half)), log_term);
}

Var fusion_loss(const nn::HeteroscedasticHead::Output& fused, const std::optional<VadVector>& labels,
                const GaussianVad& agreement, double lambda_agree, LossValue* parts) {
  if (!labels && lambda_agree == 0.0)
    throw std::invalid_argument("fusion_loss: unlabeled record with agreement disabled carries no signal");
  Var agree = agreement_loss(fused.mu, agreement);
  Var total = ag::scale(agree, lambda_agree);
  if (parts) {
    parts->components = {{"agree", agree.scalar()}};
    parts->weights = {{"agree", lambda_agree}};
  }
  if (labels) {
    Var nll = gaussian_nll(fused.mu, fused.log_var, *labels);
    total = ag::add(nll, total);
    if (parts) {
      parts->components["nll"] = nll.scalar();
      parts->weights["nll"] = 1.0;
    }
  }
  if (parts) parts->total = total.scalar();
  return total;
}

}  // namespace graph

}  // namespace inconvad::losses
