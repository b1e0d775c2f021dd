#include "minimax/evaluate.hpp"

#include "minimax/anomaly.hpp"

namespace minimax {

Scorer model_scorer(const Model<float>& model) {
  return {[&model](const std::vector<const Sample*>& batch) {
    const auto images = Var<float>::constant(stack_images(batch));
    const auto enc = encode(images, model);
    const auto dec = decode(bottleneck(enc, model), model);
    return anomaly_map(enc, dec, images.shape().h, images.shape().w).aggregated.value();
  }};
}

Scorer oracle_scorer() {
  return {[](const std::vector<const Sample*>& batch) {
    const Shape s = batch.front()->image.shape();
    Tensor<float> out(Shape{static_cast<Index>(batch.size()), 1, s.h, s.w});
    for (std::size_t i = 0; i < batch.size(); ++i)
      for (Index p = 0; p < s.plane(); ++p) out.plane(static_cast<Index>(i), 0)[p] = batch[i]->mask[p];
    return out;
  }, false};
}

Scorer constant_scorer(float value) {
  return {[value](const std::vector<const Sample*>& batch) {
    const Shape s = batch.front()->image.shape();
    return Tensor<float>(Shape{static_cast<Index>(batch.size()), 1, s.h, s.w}, value);
  }};
}

CategoryResult evaluate_category(const std::string& category, const std::vector<Sample>& test,
                                 const Scorer& scorer, const EvalConfig& cfg) {
  cfg.validate();
  CategoryResult result;
  result.category = category;
  EvalSet set;
  for (std::size_t b = 0; b < test.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
    std::vector<const Sample*> batch;
    for (std::size_t i = b; i < std::min(test.size(), b + cfg.batch_size); ++i) batch.push_back(&test[i]);
    const Tensor<float> maps = gaussian_smooth(scorer.maps(batch), scorer.smooth ? cfg.smoothing_sigma : 0.0);
    const Shape s = maps.shape();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ScoredImage img;
      img.sample = batch[i];
      img.smoothed = Tensor<float>(Shape{1, 1, s.h, s.w});
      std::copy_n(maps.plane(static_cast<Index>(i), 0), s.plane(), img.smoothed.data());
      img.score = img.smoothed.array().maxCoeff();

      // Row-major planes map onto column-major Eigen arrays as W x H, transposed back.
      ScoreMap sm = Eigen::Map<const Eigen::ArrayXXf>(img.smoothed.data(), s.w, s.h).transpose().cast<double>();
      MaskMap mm = Eigen::Map<const MaskMap>(batch[i]->mask.data(), s.w, s.h).transpose();
      set.image_scores.push_back(img.score);
      set.image_labels.push_back(batch[i]->label);
      set.pixel_scores.push_back(std::move(sm));
      set.pixel_masks.push_back(std::move(mm));
      result.images.push_back(std::move(img));
    }
  }
  try {
    result.report = compute_metrics(set, cfg.aupro());
  } catch (const UndefinedMetricError& e) {
    throw UndefinedMetricError("category " + category + ": " + e.what());
  }
  return result;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ContractError("mean of no reports");
  MetricReport m;
  double* out[] = {&m.i_auroc, &m.i_ap, &m.i_f1max, &m.p_auroc, &m.p_ap, &m.p_f1max, &m.aupro};
  for (int k = 0; k < 7; ++k) {
    double s = 0;
    for (const auto& r : reports) s += r.fields()[k];
    *out[k] = s / static_cast<double>(reports.size());
  }
  return m;
}

}  // namespace minimax
