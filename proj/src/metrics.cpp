#include "inconvad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace inconvad::metrics {

namespace {

struct Moments {
  double mean_x = 0, mean_y = 0, var_x = 0, var_y = 0, cov = 0;
};

Moments moments(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("metric inputs differ in length");
  if (x.size() < 2) throw std::invalid_argument("metric needs at least two values");
  const double n = static_cast<double>(x.size());
  Moments m;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.mean_x += x[i];
    m.mean_y += y[i];
  }
  m.mean_x /= n;
  m.mean_y /= n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - m.mean_x;
    const double dy = y[i] - m.mean_y;
    m.var_x += dx * dx;
    m.var_y += dy * dy;
    m.cov += dx * dy;
  }
  m.var_x /= n;
  m.var_y /= n;
  m.cov /= n;
  return m;
}

void check_labels(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  if (scores.empty()) throw std::invalid_argument("binary metrics need at least one record");
  for (int l : labels)
    if (l != 0 && l != 1) throw std::invalid_argument("binary labels must be 0 or 1");
}

}  // namespace

double ccc(std::span<const double> pred, std::span<const double> gold, bool* degenerate) {
  const Moments m = moments(pred, gold);
  const double d = m.mean_x - m.mean_y;
  const double denom = m.var_x + m.var_y + d * d;
  const bool degen = m.var_y == 0.0 && m.var_x == 0.0;
  if (degenerate) *degenerate = degen;
  if (degen || denom == 0.0) {
    spdlog::warn("ccc: both prediction and gold are constant; reporting 0");
    return 0.0;
  }
  return std::clamp(2.0 * m.cov / denom, -1.0, 1.0);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const Moments m = moments(x, y);
  if (m.var_x == 0.0 || m.var_y == 0.0) return 0.0;
  return m.cov / std::sqrt(m.var_x * m.var_y);
}

BinaryMetrics binary_metrics(std::span<const double> scores, std::span<const int> labels, double tau) {
  check_labels(scores, labels);
  BinaryMetrics b;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pos = scores[i] >= tau;
    if (labels[i] == 1)
      (pos ? b.tp : b.fn)++;
    else
      (pos ? b.fp : b.tn)++;
  }
  b.accuracy = static_cast<double>(b.tp + b.tn) / static_cast<double>(scores.size());
  if (b.tp + b.fp == 0)
    b.precision_undefined = true;
  else
    b.precision = static_cast<double>(b.tp) / static_cast<double>(b.tp + b.fp);
  if (b.tp + b.fn == 0)
    b.recall_undefined = true;
  else
    b.recall = static_cast<double>(b.tp) / static_cast<double>(b.tp + b.fn);
  if (b.precision + b.recall == 0.0)
    b.f1_undefined = true;
  else
    b.f1 = 2.0 * b.precision * b.recall / (b.precision + b.recall);
  return b;
}

std::vector<double> candidate_thresholds(std::span<const double> scores) {
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> out{0.0, 1.0};
  for (std::size_t i = 1; i < sorted.size(); ++i) out.push_back(0.5 * (sorted[i - 1] + sorted[i]));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

YoudenResult youden(std::span<const double> scores, std::span<const int> labels) {
  check_labels(scores, labels);
  std::vector<double> pos_scores, neg_scores;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos_scores : neg_scores).push_back(scores[i]);
  if (pos_scores.empty() || neg_scores.empty())
    throw std::invalid_argument("youden_threshold needs both classes present");
  std::sort(pos_scores.begin(), pos_scores.end());
  std::sort(neg_scores.begin(), neg_scores.end());
  const auto P = static_cast<std::int64_t>(pos_scores.size());
  const auto N = static_cast<std::int64_t>(neg_scores.size());
  // J * P * N = tp * N + tn * P - P * N, compared exactly in integers.
  std::int64_t best = 0;
  YoudenResult r;
  bool first = true;
  for (double c : candidate_thresholds(scores)) {
    const auto tp = P - (std::lower_bound(pos_scores.begin(), pos_scores.end(), c) - pos_scores.begin());
    const auto tn = std::lower_bound(neg_scores.begin(), neg_scores.end(), c) - neg_scores.begin();
    const std::int64_t value = tp * N + tn * P;
    if (first || value > best) {
      best = value;
      r.tau = c;
      first = false;
    }
  }
  r.j = static_cast<double>(best - P * N) / static_cast<double>(P * N);
  return r;
}

double youden_threshold(std::span<const double> scores, std::span<const int> labels) {
  return youden(scores, labels).tau;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_labels(scores, labels);
  std::vector<double> taus = candidate_thresholds(scores);
  std::vector<RocPoint> out;
  for (auto it = taus.rbegin(); it != taus.rend(); ++it) {
    const BinaryMetrics b = binary_metrics(scores, labels, *it);
    const double pos = static_cast<double>(b.tp + b.fn);
    const double neg = static_cast<double>(b.fp + b.tn);
    out.push_back({*it, neg > 0 ? b.fp / neg : 0.0, pos > 0 ? b.tp / pos : 0.0});
  }
  return out;
}

double mean_ccc(const std::array<double, 3>& per_dim) { return (per_dim[0] + per_dim[1] + per_dim[2]) / 3.0; }

KeyValues EvalReport::to_key_values() const {
  KeyValues kv;
  kv.set("records", std::to_string(n_records));
  if (ccc) {
    for (std::size_t k = 0; k < 3; ++k) kv.set(std::string("ccc.") + kVadNames[k], format_double((*ccc)[k]));
    kv.set("ccc.avg", format_double(ccc_avg));
  }
  if (binary) {
    kv.set("accuracy", format_double(binary->accuracy));
    kv.set("f1", format_double(binary->f1));
    kv.set("precision", format_double(binary->precision));
    kv.set("recall", format_double(binary->recall));
    if (binary->precision_undefined) kv.set("precision.undefined", "true");
    if (binary->recall_undefined) kv.set("recall.undefined", "true");
    if (binary->f1_undefined) kv.set("f1.undefined", "true");
  }
  if (tau_star) kv.set("tau_star", format_double(*tau_star));
  return kv;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["records"] = n_records;
  if (ccc) {
    for (std::size_t k = 0; k < 3; ++k) j["ccc"][kVadNames[k]] = (*ccc)[k];
    j["ccc"]["avg"] = ccc_avg;
  }
  if (binary) {
    j["binary"] = {{"accuracy", binary->accuracy}, {"f1", binary->f1},
                   {"precision", binary->precision}, {"recall", binary->recall},
                   {"tp", binary->tp}, {"fp", binary->fp}, {"fn", binary->fn}, {"tn", binary->tn}};
  }
  if (tau_star) j["tau_star"] = *tau_star;
  return j.dump();
}

}  // namespace inconvad::metrics
