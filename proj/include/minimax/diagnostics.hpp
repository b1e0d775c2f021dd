#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "minimax/model.hpp"

namespace minimax {

struct DiagnosticsConfig {
  int entropy_bins = 256;
  double entropy_epsilon = 1e-12;
  Index erf_input_size = 64;

  void validate() const {
    if (entropy_bins < 2) throw ConfigError("entropy_bins must be at least 2");
    if (!(entropy_epsilon > 0)) throw ConfigError("entropy_epsilon must be positive");
  }
};

namespace detail {

// Level values divided by the level's global L2 norm (eps-guarded).
template <typename Scalar>
std::vector<double> l2_normalized(const Tensor<Scalar>& t) {
  double sq = 0;
  for (Index i = 0; i < t.size(); ++i) sq += static_cast<double>(t[i]) * static_cast<double>(t[i]);
  const double norm = std::max(std::sqrt(sq), 1e-12);
  std::vector<double> out(static_cast<std::size_t>(t.size()));
  for (Index i = 0; i < t.size(); ++i) out[i] = static_cast<double>(t[i]) / norm;
  return out;
}

}  // namespace detail

// Population variance of the L2-normalized level, averaged over three levels.
template <typename Scalar>
double feature_variance(const FeaturePyramid<Scalar>& pyr) {
  double total = 0;
  for (const auto& level : pyr.levels) {
    const auto v = detail::l2_normalized(level.value());
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    total += var / static_cast<double>(v.size());
  }
  return total / 3.0;
}

// Shannon entropy (bits) of one array after fixed-width binning over [min, max].
inline double binned_entropy(const std::vector<double>& v, int bins, double eps) {
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  if (hi > lo) {
    const double width = (hi - lo) / bins;
    for (double x : v) {
      auto b = static_cast<long>((x - lo) / width);
      counts[static_cast<std::size_t>(std::clamp<long>(b, 0, bins - 1))]++;
    }
  } else {
    counts[0] = static_cast<long>(v.size());
  }
  const double n = static_cast<double>(v.size());
  double h = 0;
  for (long c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p + eps);
  }
  return h;
}

template <typename Scalar>
double feature_entropy(const FeaturePyramid<Scalar>& pyr, const DiagnosticsConfig& cfg = {}) {
  cfg.validate();
  double total = 0;
  for (const auto& level : pyr.levels)
    total += binned_entropy(detail::l2_normalized(level.value()), cfg.entropy_bins,
                            cfg.entropy_epsilon);
  return total / 3.0;
}

// Copy of a model whose parameters are gradient-free constants.
template <typename Scalar>
Model<Scalar> frozen_copy(const Model<Scalar>& model) {
  Model<Scalar> out = model;
  out.visit([](const std::string&, Var<Scalar>& v) { v = Var<Scalar>::constant(v.value()); });
  return out;
}

// Input-gradient footprint of the channel sum at the centre of the deepest
// encoder level: |d/dx| summed over input channels, scaled so the max is 1.
// image: (1, 3, H, W). Returns (1, 1, H, W).
template <typename Scalar>
Tensor<Scalar> erf_map(const Model<Scalar>& model, const Tensor<Scalar>& image) {
  if (image.shape().n != 1) throw InputError("erf_map takes a single image");
  const Model<Scalar> frozen = frozen_copy(model);
  Var<Scalar> x = Var<Scalar>::parameter(image);
  const auto pyr = encode(x, frozen);
  const Shape s3 = pyr[2].shape();
  Tensor<Scalar> seed(s3);
  for (Index c = 0; c < s3.c; ++c) seed(0, c, s3.h / 2, s3.w / 2) = Scalar(1);
  pyr[2].backward(seed);
  const Tensor<Scalar> g = x.grad();
  const Shape s = image.shape();
  Tensor<Scalar> out(Shape{1, 1, s.h, s.w});
  for (Index c = 0; c < s.c; ++c)
    for (Index p = 0; p < s.plane(); ++p) out[p] += std::abs(g.plane(0, c)[p]);
  const Scalar mx = out.array().maxCoeff();
  if (mx > Scalar(0)) out.array() /= mx;
  return out;
}

struct PixelRange {
  Index lo = 0;
  Index hi = 0;  // inclusive
};

struct ReceptiveField {
  PixelRange rows, cols;
  bool contains(Index r, Index c) const {
    return r >= rows.lo && r <= rows.hi && c >= cols.lo && c <= cols.hi;
  }
};

// Input-pixel bounding box that can influence encoder level-3 unit (row, col)
// through spatial operators. Block kernels count as 1x1 when
// `ignore_depthwise` is set. GRN with nonzero gamma couples all pixels and is
// not modelled.
inline ReceptiveField theoretical_receptive_field(const ModelConfig& cfg, Index row, Index col,
                                                  bool ignore_depthwise = false) {
  struct Layer {
    Index k, stride, pad, in_h, in_w;
  };
  std::vector<Layer> layers;
  Index h = cfg.input_h, w = cfg.input_w;
  auto push_conv = [&](Index k, Index stride) {
    layers.push_back({k, stride, k / 2, h, w});
    h = detail::conv_out(h, k, stride, k / 2);
    w = detail::conv_out(w, k, stride, k / 2);
  };
  auto push_stage = [&](std::size_t s) {
    for (const auto& b : cfg.stage_blocks(s)) {
      const Index k = ignore_depthwise ? 1 : b.kernel_size;
      layers.push_back({k, 1, k / 2, h, w});
    }
  };
  push_conv(3, 2);
  push_conv(3, 2);
  push_stage(0);
  push_conv(3, 2);
  push_stage(1);
  push_conv(3, 2);
  push_stage(2);

  PixelRange r{row, row}, c{col, col};
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    r = {std::max<Index>(0, r.lo * it->stride - it->pad),
         std::min<Index>(it->in_h - 1, r.hi * it->stride - it->pad + it->k - 1)};
    c = {std::max<Index>(0, c.lo * it->stride - it->pad),
         std::min<Index>(it->in_w - 1, c.hi * it->stride - it->pad + it->k - 1)};
  }
  return {r, c};
}

}  // namespace minimax
