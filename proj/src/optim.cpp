#include "inconvad/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "inconvad/kernels.hpp"

namespace inconvad::optim {

AdamW::AdamW(ag::ParamList params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void AdamW::step(const ag::GradStore& grads, double lr_backbone, double lr_heads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ag::Parameter& p = *params_[i];
    const Matrix* g = grads.find(&p);
    if (!g) continue;
    const double lr = p.group == ag::ParamGroup::backbone ? lr_backbone : lr_heads;
    auto w = p.value.flat();
    auto m = m_[i].flat();
    auto v = v_[i].flat();
    auto gr = g->flat();
    const double decay = p.decay ? 1.0 - lr * cfg_.weight_decay : 1.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gr[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gr[k] * gr[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] = w[k] * decay - lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

double clip_grad_norm(ag::GradStore& grads, const ag::ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params)
    if (const Matrix* g = grads.find(p)) sq += kernels::sum_squares(g->flat());
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const auto* p : params)
      if (grads.find(p))
        for (double& x : grads.at(p).flat()) x *= s;
  }
  return norm;
}

double warmup_cosine(std::size_t step, std::size_t total_steps, double warmup_fraction, double peak) {
  if (total_steps == 0) throw std::invalid_argument("schedule needs at least one step");
  const auto warmup = static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total_steps) return 0.0;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

bool EarlyStopping::update(std::size_t epoch, double metric) {
  if (best_epoch_ == 0 || metric > best_) {
    best_ = metric;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

}  // namespace inconvad::optim
