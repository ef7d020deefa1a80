#pragma once

#include <cstddef>
#include <vector>

#include "inconvad/autograd.hpp"

namespace inconvad::optim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay; decay applies only to parameters whose
// `decay` flag is set.
class AdamW {
 public:
  AdamW(ag::ParamList params, AdamWConfig cfg);

  // One update; parameters without a gradient in `grads` are left untouched.
  void step(const ag::GradStore& grads, double lr_backbone, double lr_heads);
  std::size_t steps() const { return t_; }
  const ag::ParamList& params() const { return params_; }

 private:
  ag::ParamList params_;
  AdamWConfig cfg_;
  std::vector<Matrix> m_, v_;
  std::size_t t_ = 0;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ag::GradStore& grads, const ag::ParamList& params, double max_norm);

// Linear warmup from 0 over the first warmup_fraction of total_steps, then
// cosine decay to 0 at total_steps.
double warmup_cosine(std::size_t step, std::size_t total_steps, double warmup_fraction, double peak);

// Patience counter over a maximized validation metric; epochs are 1-based.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when `metric` is a new best (strict improvement).
  bool update(std::size_t epoch, double metric);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }
  bool has_best() const { return best_epoch_ != 0; }

 private:
  std::size_t patience_;
  std::size_t since_best_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
};

}  // namespace inconvad::optim
