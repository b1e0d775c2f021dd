#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "minimax/evaluate.hpp"
#include "minimax/report.hpp"
#include "minimax/train.hpp"

namespace minimax {

// Train split of every category under root, pooled in category order. A
// multi-category root therefore trains one shared model (unified setting).
std::vector<Sample> load_training_set(const std::filesystem::path& root, int resolution);

struct RootEvaluation {
  std::vector<std::vector<Sample>> test_sets;  // owns the samples results point into
  std::vector<CategoryResult> categories;
  MetricReport mean;

  std::vector<ReportRow> rows() const;
};

// Evaluates every category under root separately; `mean` averages the
// per-category reports.
RootEvaluation evaluate_root(const std::filesystem::path& root, const Scorer& scorer,
                             const EvalConfig& cfg, int resolution);

// One 16-bit PNG (plus sidecar JSON) per test image:
// dir/<category>/<defect>/<stem>.png
void write_anomaly_maps(const std::filesystem::path& dir, const RootEvaluation& eval);

struct FeatureDiagnostics {
  double encoder_variance = 0;
  double decoder_variance = 0;
  double encoder_entropy = 0;
  double decoder_entropy = 0;
  long images = 0;
};

// Per-batch diagnostics averaged with weights proportional to batch size.
FeatureDiagnostics diagnose_features(const Model<float>& model, const std::vector<Sample>& data,
                                     int batch_size);

// "cpu" unless overridden by the flag or MINIMAXAD_DEVICE; only cpu is
// supported, anything else is a ConfigError.
std::string resolve_device(const std::string& flag);

}  // namespace minimax
