#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "minimax/errors.hpp"

namespace minimax {

using ScoreMap = Eigen::ArrayXXd;  // H x W
using MaskMap = Eigen::Array<unsigned char, Eigen::Dynamic, Eigen::Dynamic>;

/// Area under the ROC curve as the Mann-Whitney statistic (ties count 1/2).
/// Throws UndefinedMetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Step-wise average precision: sum over distinct thresholds (descending) of
/// (R_n - R_{n-1}) * P_n.
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// Best F1 over thresholds taken from the distinct scores (positive when score >= t).
double f1_max(std::span<const double> scores, std::span<const int> labels);

enum class Connectivity { Four = 4, Eight = 8 };

/// Labels connected foreground components; background is -1, components are
/// numbered 0..count-1 in raster order of their first pixel.
Eigen::ArrayXXi connected_components(const MaskMap& mask, Connectivity conn, int* count);

struct AuproOptions {
  double fpr_cap = 0.3;
  Connectivity connectivity = Connectivity::Eight;
};

/// Area under the per-region-overlap vs false-positive-rate curve, integrated
/// with the trapezoid rule up to the FPR cap and divided by the cap. Every
/// distinct score is a threshold, so the curve is exact.
double aupro(const std::vector<ScoreMap>& scores, const std::vector<MaskMap>& masks,
             const AuproOptions& opts = {});

struct MetricReport {
  static constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
  double i_auroc = kMissing;
  double i_ap = kMissing;
  double i_f1max = kMissing;
  double p_auroc = kMissing;
  double p_ap = kMissing;
  double p_f1max = kMissing;
  double aupro = kMissing;

  std::vector<double> fields() const {
    return {i_auroc, i_ap, i_f1max, p_auroc, p_ap, p_f1max, aupro};
  }
};

/// Arithmetic mean of the seven metrics; ContractError if any is missing.
double mad(const MetricReport& report);

struct EvalSet {
  std::vector<double> image_scores;
  std::vector<int> image_labels;
  std::vector<ScoreMap> pixel_scores;
  std::vector<MaskMap> pixel_masks;
};

MetricReport compute_metrics(const EvalSet& set, const AuproOptions& opts = {});

}  // namespace minimax
