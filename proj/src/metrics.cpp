#include "minimax/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace minimax {
namespace {

struct ClassCounts {
  long pos = 0;
  long neg = 0;
};

ClassCounts count_classes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ContractError("scores and labels differ in length: " + std::to_string(scores.size()) +
                        " vs " + std::to_string(labels.size()));
  ClassCounts c;
  for (int l : labels) (l ? c.pos : c.neg)++;
  return c;
}

std::vector<std::size_t> order_descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

// Calls f(tp, fp) after each group of tied scores in descending order.
template <typename F>
void sweep(std::span<const double> scores, std::span<const int> labels, F&& f) {
  const auto idx = order_descending(scores);
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] ? tp : fp)++;
      ++j;
    }
    f(tp, fp);
    i = j;
  }
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  const auto c = count_classes(scores, labels);
  if (c.pos == 0 || c.neg == 0) throw UndefinedMetricError("AUROC needs both classes");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    long pos_in_group = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      pos_in_group += labels[idx[j]] != 0;
      ++j;
    }
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += mid_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double p = static_cast<double>(c.pos), n = static_cast<double>(c.neg);
  return (rank_sum - p * (p + 1) / 2) / (p * n);
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  const auto c = count_classes(scores, labels);
  if (c.pos == 0) throw UndefinedMetricError("average precision needs a positive label");
  double ap = 0, prev_recall = 0;
  const double p = static_cast<double>(c.pos);
  sweep(scores, labels, [&](long tp, long fp) {
    const double recall = static_cast<double>(tp) / p;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  });
  return ap;
}

double f1_max(std::span<const double> scores, std::span<const int> labels) {
  const auto c = count_classes(scores, labels);
  if (c.pos == 0) throw UndefinedMetricError("F1 needs a positive label");
  double best = 0;
  sweep(scores, labels, [&](long tp, long fp) {
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(tp + fp + c.pos);
    best = std::max(best, f1);
  });
  return best;
}

Eigen::ArrayXXi connected_components(const MaskMap& mask, Connectivity conn, int* count) {
  const Eigen::Index h = mask.rows(), w = mask.cols();
  Eigen::ArrayXXi label = Eigen::ArrayXXi::Constant(h, w, -1);
  int next = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
  for (Eigen::Index r = 0; r < h; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      if (!mask(r, c) || label(r, c) >= 0) continue;
      label(r, c) = next;
      stack.assign(1, {r, c});
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            if (conn == Connectivity::Four && dy != 0 && dx != 0) continue;
            const Eigen::Index ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
            if (mask(ny, nx) && label(ny, nx) < 0) {
              label(ny, nx) = next;
              stack.emplace_back(ny, nx);
            }
          }
        }
      }
      ++next;
    }
  }
  if (count) *count = next;
  return label;
}

double aupro(const std::vector<ScoreMap>& scores, const std::vector<MaskMap>& masks,
             const AuproOptions& opts) {
  if (scores.size() != masks.size()) throw ContractError("aupro: score/mask count mismatch");
  if (!(opts.fpr_cap > 0 && opts.fpr_cap <= 1)) throw ContractError("aupro: fpr_cap in (0,1]");

  std::vector<double> flat_scores;
  std::vector<int> region;  // global region id, -1 for normal pixels
  std::vector<long> region_size;
  long normals = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].rows() != masks[i].rows() || scores[i].cols() != masks[i].cols())
      throw ContractError("aupro: map " + std::to_string(i) + " does not match its mask");
    int n_regions = 0;
    const Eigen::ArrayXXi labels = connected_components(masks[i], opts.connectivity, &n_regions);
    const int base = static_cast<int>(region_size.size());
    region_size.resize(region_size.size() + n_regions, 0);
    for (Eigen::Index c = 0; c < labels.cols(); ++c) {
      for (Eigen::Index r = 0; r < labels.rows(); ++r) {
        flat_scores.push_back(scores[i](r, c));
        const int l = labels(r, c);
        if (l < 0) {
          region.push_back(-1);
          ++normals;
        } else {
          region.push_back(base + l);
          ++region_size[base + l];
        }
      }
    }
  }
  if (region_size.empty()) throw UndefinedMetricError("aupro: no anomalous regions");
  if (normals == 0) throw UndefinedMetricError("aupro: no normal pixels");

  const auto idx = order_descending(flat_scores);
  const double n_regions = static_cast<double>(region_size.size());
  const double cap = opts.fpr_cap;
  double area = 0, prev_fpr = 0, prev_pro = 0, pro_sum = 0;
  long fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && flat_scores[idx[j]] == flat_scores[idx[i]]) {
      const int r = region[idx[j]];
      if (r < 0) {
        ++fp;
      } else {
        pro_sum += 1.0 / static_cast<double>(region_size[r]);
      }
      ++j;
    }
    i = j;
    const double fpr = static_cast<double>(fp) / static_cast<double>(normals);
    const double pro = pro_sum / n_regions;
    if (fpr >= cap) {
      const double t = fpr > prev_fpr ? (cap - prev_fpr) / (fpr - prev_fpr) : 0.0;
      const double pro_at_cap = prev_pro + t * (pro - prev_pro);
      area += 0.5 * (cap - prev_fpr) * (prev_pro + pro_at_cap);
      return area / cap;
    }
    area += 0.5 * (fpr - prev_fpr) * (prev_pro + pro);
    prev_fpr = fpr;
    prev_pro = pro;
  }
  // Unreachable: the final threshold admits every pixel, so fpr reaches 1.
  return area / cap;
}

double mad(const MetricReport& report) {
  double sum = 0;
  for (double v : report.fields()) {
    if (std::isnan(v)) throw ContractError("mAD requires all seven metrics");
    sum += v;
  }
  return sum / 7.0;
}

MetricReport compute_metrics(const EvalSet& set, const AuproOptions& opts) {
  MetricReport r;
  r.i_auroc = auroc(set.image_scores, set.image_labels);
  r.i_ap = average_precision(set.image_scores, set.image_labels);
  r.i_f1max = f1_max(set.image_scores, set.image_labels);

  if (set.pixel_scores.size() != set.pixel_masks.size())
    throw ContractError("pixel score/mask count mismatch");
  std::vector<double> px;
  std::vector<int> pl;
  for (std::size_t i = 0; i < set.pixel_scores.size(); ++i) {
    const auto& s = set.pixel_scores[i];
    const auto& m = set.pixel_masks[i];
    if (s.rows() != m.rows() || s.cols() != m.cols())
      throw ContractError("pixel map " + std::to_string(i) + " does not match its mask");
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      px.push_back(s.data()[k]);
      pl.push_back(m.data()[k] != 0);
    }
  }
  r.p_auroc = auroc(px, pl);
  r.p_ap = average_precision(px, pl);
  r.p_f1max = f1_max(px, pl);
  r.aupro = aupro(set.pixel_scores, set.pixel_masks, opts);
  return r;
}

}  // namespace minimax
