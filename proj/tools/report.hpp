#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "inconvad/metrics.hpp"
#include "inconvad/pipeline.hpp"

// SVG figures for the `report` command.
namespace inconvad::report {

struct Series {
  std::string name;
  std::array<double, 3> values{};
};

// Grouped bars: one group per VAD dimension, one bar per series.
std::string ccc_bars(const std::vector<Series>& series);

// ROC polyline with the operating point at `tau` marked.
std::string roc_plot(const std::vector<metrics::RocPoint>& roc, double tau, double fpr_at_tau, double tpr_at_tau);

// Histogram of speech gate weights in [0, 1].
std::string gate_histogram(const std::vector<double>& gate_s, std::size_t bins = 20);

// Validation metric per epoch, one line per run log.
std::string training_curves(const std::map<std::string, pipeline::RunLog>& logs);

}  // namespace inconvad::report
