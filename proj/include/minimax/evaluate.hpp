#pragma once

#include <functional>
#include <string>
#include <vector>

#include "minimax/config.hpp"
#include "minimax/dataset.hpp"
#include "minimax/metrics.hpp"
#include "minimax/model.hpp"

namespace minimax {

// Produces anomaly maps (n, 1, R, R) for a batch of samples. Model maps are
// raw and get smoothed before scoring; fixture scorers may opt out so their
// maps are taken as final.
struct Scorer {
  std::function<Tensor<float>(const std::vector<const Sample*>&)> maps;
  bool smooth = true;
};

Scorer model_scorer(const Model<float>& model);
// Scores equal to the ground-truth masks, unsmoothed: a perfect localiser.
Scorer oracle_scorer();
// The same value everywhere: an uninformative scorer.
Scorer constant_scorer(float value);

struct ScoredImage {
  const Sample* sample = nullptr;
  Tensor<float> smoothed;  // (1, 1, R, R)
  double score = 0;
};

struct CategoryResult {
  std::string category;
  MetricReport report;
  std::vector<ScoredImage> images;
};

// Smooths each map, takes its maximum as the image score and computes all
// seven metrics on the smoothed maps. Metric errors are rethrown with the
// category name attached.
CategoryResult evaluate_category(const std::string& category, const std::vector<Sample>& test,
                                 const Scorer& scorer, const EvalConfig& cfg);

// Column-wise mean of several reports.
MetricReport mean_report(const std::vector<MetricReport>& reports);

}  // namespace minimax
