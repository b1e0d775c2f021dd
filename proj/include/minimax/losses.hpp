#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "minimax/model.hpp"

namespace minimax {

// Linear interpolation between the closest order statistics at zero-based
// position p * (n - 1). p = 1 returns the maximum.
inline double quantile(std::span<const double> values, double p) {
  if (values.empty()) throw ContractError("quantile of an empty array");
  if (!(p > 0.0 && p <= 1.0)) throw ContractError("quantile level must lie in (0, 1]");
  std::vector<double> v(values.begin(), values.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  std::nth_element(v.begin(), v.begin() + lo, v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + lo + 1, v.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

struct MiningConfig {
  double p_hard = 0.9999;
  double p_lim = 0.9995;
  // Sensitivity switch: take alpha as a quantile of S^2 rather than of S.
  bool alpha_on_squared = false;

  void validate() const {
    if (!(p_hard > 0.0 && p_hard <= 1.0)) throw ConfigError("p_hard must lie in (0, 1]");
    if (!(p_lim > 0.0 && p_lim <= 1.0)) throw ConfigError("p_lim must lie in (0, 1]");
  }
};

enum class AdcBranch { Alpha, Beta };

inline const char* to_string(AdcBranch b) { return b == AdcBranch::Alpha ? "alpha" : "beta"; }

struct AdcDiagnostics {
  double alpha = 0;   // p_hard-quantile of S
  double beta_q = 0;  // p_lim-quantile of S^2
  double sigma = 0;   // population std of S
  long count_a = 0;   // #{S^2 >= alpha - sigma^2}
  double count_b = 0; // N * (1 - p_lim)
  AdcBranch branch = AdcBranch::Alpha;
  double threshold = 0;
  double active_fraction = 0;
};

template <typename Scalar>
struct AdcResult {
  Var<Scalar> loss;
  AdcDiagnostics diagnostics;
};

namespace detail {

template <typename Scalar>
std::vector<double> as_doubles(const Tensor<Scalar>& t) {
  std::vector<double> v(static_cast<std::size_t>(t.size()));
  for (Index i = 0; i < t.size(); ++i) v[i] = static_cast<double>(t[i]);
  return v;
}

inline std::vector<double> squares(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * v[i];
  return out;
}

inline std::vector<unsigned char> at_least(const std::vector<double>& v, double thr,
                                           long* count) {
  std::vector<unsigned char> mask(v.size());
  long n = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    mask[i] = v[i] >= thr;
    n += mask[i];
  }
  if (count) *count = n;
  return mask;
}

}  // namespace detail

// Sum over levels of (1 - cos) between whole flattened feature maps, per batch
// item, averaged over the batch.
template <typename Scalar>
Var<Scalar> global_cosine_loss(const FeaturePyramid<Scalar>& enc,
                               const FeaturePyramid<Scalar>& dec) {
  Var<Scalar> total;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!(enc[k].shape() == dec[k].shape()))
      throw ContractError("global_cosine_loss: level " + std::to_string(k + 1) +
                          " shapes differ: " + to_string(enc[k].shape()) + " vs " +
                          to_string(dec[k].shape()));
    Var<Scalar> term = mean_all(flat_cosine_distance(enc[k], dec[k]));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

// Mean of S^2 over every pixel.
template <typename Scalar>
Var<Scalar> local_loss(const Var<Scalar>& s) {
  return masked_mean_square(s, std::vector<unsigned char>(s.value().size(), 1));
}

// Mean of S^2 over pixels with S^2 >= the p_lim-quantile of S^2 (batch-global).
template <typename Scalar>
Var<Scalar> hard_mined_loss(const Var<Scalar>& s, double p_lim) {
  const auto sq = detail::squares(detail::as_doubles(s.value()));
  const double beta = quantile(sq, p_lim);
  return masked_mean_square(s, detail::at_least(sq, beta, nullptr));
}

// Adaptive-contraction hard mining. Statistics are taken over the flattened
// batch and treated as constants for differentiation.
template <typename Scalar>
AdcResult<Scalar> adc_loss(const Var<Scalar>& s, const MiningConfig& cfg) {
  cfg.validate();
  const auto v = detail::as_doubles(s.value());
  const auto sq = detail::squares(v);
  const auto n = static_cast<double>(v.size());

  AdcDiagnostics diag;
  diag.alpha = cfg.alpha_on_squared ? quantile(sq, cfg.p_hard) : quantile(v, cfg.p_hard);
  diag.beta_q = quantile(sq, cfg.p_lim);
  double mean = 0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;
  diag.sigma = std::sqrt(var);

  const double alpha_thr = diag.alpha - diag.sigma * diag.sigma;
  auto mask = detail::at_least(sq, alpha_thr, &diag.count_a);
  diag.count_b = n * (1.0 - cfg.p_lim);
  long active = diag.count_a;
  if (static_cast<double>(diag.count_a) >= diag.count_b) {
    diag.branch = AdcBranch::Alpha;
    diag.threshold = alpha_thr;
  } else {
    diag.branch = AdcBranch::Beta;
    diag.threshold = diag.beta_q - diag.sigma * diag.sigma;
    mask = detail::at_least(sq, diag.threshold, &active);
  }
  diag.active_fraction = static_cast<double>(active) / n;
  return {masked_mean_square(s, mask), diag};
}

}  // namespace minimax
