#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "minimax/model.hpp"

namespace minimax {

// Per-level maps M^k (N,1,H_k,W_k) and their upsampled sum S (N,1,H0,W0).
template <typename Scalar>
struct AnomalyMap {
  std::array<Var<Scalar>, 3> per_level;
  Var<Scalar> aggregated;
  std::optional<Tensor<Scalar>> smoothed;
};

template <typename Scalar>
Var<Scalar> level_map(const Var<Scalar>& encoder_level, const Var<Scalar>& decoder_level) {
  return cosine_distance_map(encoder_level, decoder_level);
}

// S = sum_k bilinear_upsample(M^k) to (out_h, out_w).
template <typename Scalar>
Var<Scalar> aggregate(const std::array<Var<Scalar>, 3>& per_level, Index out_h, Index out_w) {
  Var<Scalar> s;
  for (const auto& m : per_level) {
    Var<Scalar> up = upsample_bilinear(m, out_h, out_w);
    s = s.defined() ? add(s, up) : up;
  }
  return s;
}

template <typename Scalar>
AnomalyMap<Scalar> anomaly_map(const FeaturePyramid<Scalar>& enc,
                               const FeaturePyramid<Scalar>& dec, Index out_h, Index out_w) {
  AnomalyMap<Scalar> out;
  for (std::size_t k = 0; k < 3; ++k) out.per_level[k] = level_map(enc[k], dec[k]);
  out.aggregated = aggregate(out.per_level, out_h, out_w);
  return out;
}

// Normalized 1-D Gaussian taps with radius round(4 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(4.0 * sigma + 0.5);
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Half-sample symmetric reflection: (d c b a | a b c d | d c b a).
inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

// Separable Gaussian smoothing of every plane with reflective borders.
// sigma <= 0 returns the input unchanged.
template <typename Scalar>
Tensor<Scalar> gaussian_smooth(const Tensor<Scalar>& maps, double sigma) {
  if (sigma <= 0) return maps;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const Shape s = maps.shape();
  Tensor<Scalar> out(s);
  std::vector<double> tmp(static_cast<std::size_t>(s.plane()));
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      const Scalar* in = maps.plane(n, c);
      for (Index h = 0; h < s.h; ++h)
        for (Index w = 0; w < s.w; ++w) {
          double acc = 0;
          for (int t = -r; t <= r; ++t) acc += k[t + r] * in[h * s.w + reflect_index(w + t, s.w)];
          tmp[h * s.w + w] = acc;
        }
      Scalar* o = out.plane(n, c);
      for (Index h = 0; h < s.h; ++h)
        for (Index w = 0; w < s.w; ++w) {
          double acc = 0;
          for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp[reflect_index(h + t, s.h) * s.w + w];
          o[h * s.w + w] = static_cast<Scalar>(acc);
        }
    }
  }
  return out;
}

// Per-image maximum of the smoothed map.
template <typename Scalar>
std::vector<double> image_score(const Tensor<Scalar>& s, double smoothing_sigma = 4.0) {
  const Tensor<Scalar> sm = gaussian_smooth(s, smoothing_sigma);
  std::vector<double> out(static_cast<std::size_t>(s.shape().n));
  for (Index n = 0; n < s.shape().n; ++n) {
    const auto img = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(
        sm.plane(n, 0), sm.shape().item());
    out[n] = static_cast<double>(img.maxCoeff());
  }
  return out;
}

}  // namespace minimax
