#include "minimax/pipeline.hpp"

#include <cstdlib>

namespace minimax {

std::vector<Sample> load_training_set(const std::filesystem::path& root, int resolution) {
  std::vector<Sample> out;
  for (const auto& dir : discover_categories(root)) {
    auto s = load_split(dir, Split::Train, resolution);
    out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  if (out.empty()) throw DatasetError("no training images under " + root.string());
  return out;
}

std::vector<ReportRow> RootEvaluation::rows() const {
  std::vector<ReportRow> r;
  for (const auto& c : categories) r.push_back({c.category, c.report});
  return r;
}

RootEvaluation evaluate_root(const std::filesystem::path& root, const Scorer& scorer,
                             const EvalConfig& cfg, int resolution) {
  const auto dirs = discover_categories(root);
  if (dirs.empty()) throw DatasetError("no categories under " + root.string());
  RootEvaluation ev;
  // Reserved up front so sample addresses held by results never move.
  ev.test_sets.reserve(dirs.size());
  std::vector<MetricReport> reports;
  for (const auto& dir : dirs) {
    ev.test_sets.push_back(load_split(dir, Split::Test, resolution));
    const std::string name = dir.filename().string();
    ev.categories.push_back(evaluate_category(name, ev.test_sets.back(), scorer, cfg));
    reports.push_back(ev.categories.back().report);
  }
  ev.mean = mean_report(reports);
  return ev;
}

void write_anomaly_maps(const std::filesystem::path& dir, const RootEvaluation& eval) {
  for (const auto& cat : eval.categories)
    for (const auto& img : cat.images) {
      const auto sub = dir / cat.category / img.sample->defect;
      std::error_code ec;
      std::filesystem::create_directories(sub, ec);
      if (ec) throw IoError("cannot create " + sub.string());
      const auto stem = std::filesystem::path(img.sample->path).stem().string();
      write_anomaly_map(sub / (stem + ".png"), img.smoothed, img.sample->path, img.score);
    }
}

FeatureDiagnostics diagnose_features(const Model<float>& model, const std::vector<Sample>& data,
                                     int batch_size) {
  if (data.empty()) throw DatasetError("no images to diagnose");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  FeatureDiagnostics d;
  for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(batch_size)) {
    std::vector<const Sample*> batch;
    for (std::size_t i = b; i < std::min(data.size(), b + batch_size); ++i) batch.push_back(&data[i]);
    const auto images = Var<float>::constant(stack_images(batch));
    const auto enc = encode(images, model);
    const auto dec = decode(bottleneck(enc, model), model);
    const double w = static_cast<double>(batch.size());
    d.encoder_variance += w * feature_variance(enc);
    d.decoder_variance += w * feature_variance(dec);
    d.encoder_entropy += w * feature_entropy(enc);
    d.decoder_entropy += w * feature_entropy(dec);
    d.images += static_cast<long>(batch.size());
  }
  const double n = static_cast<double>(d.images);
  d.encoder_variance /= n;
  d.decoder_variance /= n;
  d.encoder_entropy /= n;
  d.decoder_entropy /= n;
  return d;
}

std::string resolve_device(const std::string& flag) {
  std::string dev = flag;
  if (dev.empty()) {
    const char* env = std::getenv("MINIMAXAD_DEVICE");
    dev = env && *env ? env : "cpu";
  }
  if (dev != "cpu") throw ConfigError("device '" + dev + "' is not available; only cpu is supported");
  return dev;
}

}  // namespace minimax
