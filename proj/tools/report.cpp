#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

namespace inconvad::report {
namespace {

constexpr double kWidth = 580.0;
constexpr double kHeight = 320.0;
constexpr double kLeft = 56.0;
constexpr double kRight = 110.0;
constexpr double kTop = 28.0;
constexpr double kBottom = 44.0;
constexpr std::array<const char*, 6> kPalette{"#3b6ea5", "#d1773b", "#4e9a5b", "#9b59b6", "#c0392b", "#7f8c8d"};

// Plot area mapping from data coordinates to pixels.
struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string open_svg(const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{3}</text>\n",
      kWidth, kHeight, kWidth / 2, escape(title));
}

std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, int yticks, int xticks) {
  std::string s;
  s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", f.px(f.x0), f.py(f.y0),
                   f.px(f.x1), f.py(f.y0));
  s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", f.px(f.x0), f.py(f.y0),
                   f.px(f.x0), f.py(f.y1));
  for (int i = 0; i <= yticks; ++i) {
    const double v = f.y0 + (f.y1 - f.y0) * i / yticks;
    s += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", f.px(f.x0),
                     f.py(v), f.px(f.x1), f.py(v));
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2g}</text>\n", f.px(f.x0) - 4, f.py(v) + 4,
                     v);
  }
  for (int i = 0; xticks > 0 && i <= xticks; ++i) {
    const double v = f.x0 + (f.x1 - f.x0) * i / xticks;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", f.px(v), f.py(f.y0) + 14,
                     v);
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (kLeft + kWidth - kRight) / 2,
                   kHeight - 8, escape(xlabel));
  s += fmt::format("<text x=\"14\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {0})\">{1}</text>\n",
                   (kTop + kHeight - kBottom) / 2, escape(ylabel));
  return s;
}

std::string legend(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 4 + 14.0 * i;
    s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", kWidth - 100, y,
                     kPalette[i % kPalette.size()]);
    s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kWidth - 86, y + 9, escape(names[i]));
  }
  return s;
}

}  // namespace

std::string ccc_bars(const std::vector<Series>& series) {
  double lo = 0.0;
  for (const auto& s : series)
    for (double v : s.values) lo = std::min(lo, std::floor(v * 10.0) / 10.0);
  const Frame f{0.0, 3.0, lo, 1.0};
  std::string svg = open_svg("CCC per dimension") + axes(f, "dimension", "CCC", 5, 0);
  const double group = f.px(1.0) - f.px(0.0);
  const double bar = group * 0.8 / std::max<std::size_t>(1, series.size());
  for (std::size_t k = 0; k < 3; ++k) {
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", f.px(k + 0.5),
                       f.py(f.y0) + 14, kVadNames[k]);
    for (std::size_t i = 0; i < series.size(); ++i) {
      const double v = series[i].values[k];
      const double x = f.px(static_cast<double>(k)) + group * 0.1 + bar * i;
      const double top = f.py(std::max(v, 0.0));
      const double base = f.py(std::min(v, 0.0));
      svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n", x, top,
                         bar * 0.9, base - top, kPalette[i % kPalette.size()]);
    }
  }
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.name);
  return svg + legend(names) + "</svg>\n";
}

std::string roc_plot(const std::vector<metrics::RocPoint>& roc, double tau, double fpr_at_tau, double tpr_at_tau) {
  const Frame f{0.0, 1.0, 0.0, 1.0};
  std::string svg = open_svg("Inconsistency ROC") + axes(f, "false positive rate", "true positive rate", 5, 5);
  svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#aaa\" stroke-dasharray=\"4 3\"/>\n",
                     f.px(0), f.py(0), f.px(1), f.py(1));
  std::vector<metrics::RocPoint> pts = roc;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.fpr != b.fpr ? a.fpr < b.fpr : a.tpr < b.tpr;
  });
  std::string path;
  for (const auto& p : pts) path += fmt::format("{:.2f},{:.2f} ", f.px(p.fpr), f.py(p.tpr));
  svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", path, kPalette[0]);
  svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"5\" fill=\"{}\"/>\n", f.px(fpr_at_tau),
                     f.py(tpr_at_tau), kPalette[4]);
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">threshold {:.3f}</text>\n", f.px(fpr_at_tau) + 8,
                     f.py(tpr_at_tau) + 14, tau);
  return svg + "</svg>\n";
}

std::string gate_histogram(const std::vector<double>& gate_s, std::size_t bins) {
  if (bins == 0) bins = 1;
  std::vector<std::size_t> counts(bins, 0);
  for (double g : gate_s) {
    const auto b = static_cast<std::size_t>(std::clamp(g, 0.0, 1.0) * static_cast<double>(bins));
    ++counts[std::min(b, bins - 1)];
  }
  const double peak = static_cast<double>(std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end())));
  const Frame f{0.0, 1.0, 0.0, peak};
  std::string svg = open_svg("Speech gate weight") + axes(f, "speech gate (text gate = 1 - speech)", "records", 4, 5);
  for (std::size_t b = 0; b < bins; ++b) {
    const double x0 = f.px(static_cast<double>(b) / bins);
    const double x1 = f.px(static_cast<double>(b + 1) / bins);
    const double top = f.py(static_cast<double>(counts[b]));
    svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n", x0, top,
                       x1 - x0 - 1, f.py(0) - top, kPalette[1]);
  }
  return svg + "</svg>\n";
}

std::string training_curves(const std::map<std::string, pipeline::RunLog>& logs) {
  double lo = 0.0, hi = 1.0;
  std::size_t max_epoch = 1;
  for (const auto& [name, log] : logs)
    for (const auto& e : log.epochs) {
      lo = std::min(lo, e.val_metric);
      hi = std::max(hi, e.val_metric);
      max_epoch = std::max(max_epoch, e.epoch);
    }
  const Frame f{1.0, static_cast<double>(std::max<std::size_t>(2, max_epoch)), lo, hi};
  const int xticks = max_epoch <= 11 ? static_cast<int>(std::max<std::size_t>(1, max_epoch - 1)) : 5;
  std::string svg = open_svg("Validation metric by epoch") + axes(f, "epoch", "validation metric", 5, xticks);
  std::vector<std::string> names;
  std::size_t i = 0;
  for (const auto& [name, log] : logs) {
    std::string path;
    for (const auto& e : log.epochs)
      path += fmt::format("{:.2f},{:.2f} ", f.px(static_cast<double>(e.epoch)), f.py(e.val_metric));
    svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", path,
                       kPalette[i++ % kPalette.size()]);
    names.push_back(name);
  }
  return svg + legend(names) + "</svg>\n";
}

}  // namespace inconvad::report
