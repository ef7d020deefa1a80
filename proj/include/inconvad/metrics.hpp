#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inconvad/config.hpp"
#include "inconvad/types.hpp"

namespace inconvad::metrics {

// Concordance correlation coefficient with population moments. When both
// sequences are constant the value is defined as 0, `degenerate` is set and
// a warning is logged.
double ccc(std::span<const double> pred, std::span<const double> gold, bool* degenerate = nullptr);

double pearson(std::span<const double> x, std::span<const double> y);

// Label 1 = inconsistent = positive; predicted positive iff score >= tau.
struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  // Set when the corresponding denominator was zero and the value forced to 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

BinaryMetrics binary_metrics(std::span<const double> scores, std::span<const int> labels, double tau);

// Thresholds examined by the Youden sweep: 0, 1 and every midpoint between
// consecutive distinct scores, ascending.
std::vector<double> candidate_thresholds(std::span<const double> scores);

struct YoudenResult {
  double tau = 0.5;
  double j = 0.0;
};

// Maximizes sensitivity + specificity - 1 over candidate_thresholds; ties
// go to the smallest threshold.
YoudenResult youden(std::span<const double> scores, std::span<const int> labels);
double youden_threshold(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double tau;
  double fpr;
  double tpr;
};
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

struct EvalReport {
  std::optional<std::array<double, 3>> ccc;
  double ccc_avg = 0.0;
  std::optional<BinaryMetrics> binary;
  std::optional<double> tau_star;
  std::size_t n_records = 0;

  KeyValues to_key_values() const;
  // Single-line JSON record.
  std::string to_json() const;
};

double mean_ccc(const std::array<double, 3>& per_dim);

}  // namespace inconvad::metrics
