#pragma once

// Brute-force reference implementations used by the unit tests and the
// acceptance binary. They trade speed for directness: full sorts, explicit
// pairwise comparisons, exhaustive threshold scans, breadth-first flood fill.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <vector>

namespace minimax::oracle {

// Linear interpolation at zero-based position p * (n - 1) of the fully sorted array.
inline double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct MaskedMean {
  double loss = 0;
  long active = 0;
};

inline MaskedMean mean_square_at_least(const std::vector<double>& s, double threshold) {
  MaskedMean r;
  double acc = 0;
  for (double x : s) {
    if (x * x >= threshold) {
      acc += x * x;
      ++r.active;
    }
  }
  r.loss = r.active ? acc / static_cast<double>(r.active) : 0.0;
  return r;
}

inline MaskedMean hard_mined(const std::vector<double>& s, double p_lim) {
  std::vector<double> sq;
  for (double x : s) sq.push_back(x * x);
  return mean_square_at_least(s, quantile(sq, p_lim));
}

struct Adc {
  double loss = 0;
  bool alpha_branch = true;
  double threshold = 0;
  long active = 0;
};

inline Adc adc(const std::vector<double>& s, double p_hard, double p_lim,
               bool alpha_on_squared = false) {
  const double n = static_cast<double>(s.size());
  std::vector<double> sq;
  for (double x : s) sq.push_back(x * x);
  const double alpha = quantile(alpha_on_squared ? sq : s, p_hard);
  const double beta = quantile(sq, p_lim);
  double mean = 0;
  for (double x : s) mean += x;
  mean /= n;
  double var = 0;
  for (double x : s) var += (x - mean) * (x - mean);
  var /= n;
  long count_a = 0;
  for (double q : sq) count_a += q >= alpha - var;
  Adc r;
  r.alpha_branch = static_cast<double>(count_a) >= n * (1.0 - p_lim);
  r.threshold = r.alpha_branch ? alpha - var : beta - var;
  const auto m = mean_square_at_least(s, r.threshold);
  r.loss = m.loss;
  r.active = m.active;
  return r;
}

// Fraction of (positive, negative) pairs ranked correctly, ties counting 1/2.
inline double auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return good / pairs;
}

struct Counts {
  long tp = 0, fp = 0;
};

inline Counts counts_at(const std::vector<double>& s, const std::vector<int>& y, double t) {
  Counts c;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] >= t) (y[i] ? c.tp : c.fp)++;
  return c;
}

inline std::vector<double> descending_unique(const std::vector<double>& s) {
  std::set<double> u(s.begin(), s.end());
  return {u.rbegin(), u.rend()};
}

inline double average_precision(const std::vector<double>& s, const std::vector<int>& y) {
  long pos = 0;
  for (int l : y) pos += l != 0;
  double ap = 0, prev_recall = 0;
  for (double t : descending_unique(s)) {
    const auto c = counts_at(s, y, t);
    const double recall = static_cast<double>(c.tp) / static_cast<double>(pos);
    ap += (recall - prev_recall) * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    prev_recall = recall;
  }
  return ap;
}

inline double f1_max(const std::vector<double>& s, const std::vector<int>& y) {
  long pos = 0;
  for (int l : y) pos += l != 0;
  double best = 0;
  for (double t : descending_unique(s)) {
    const auto c = counts_at(s, y, t);
    if (c.tp == 0) continue;
    const double p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double r = static_cast<double>(c.tp) / static_cast<double>(pos);
    best = std::max(best, 2 * p * r / (p + r));
  }
  return best;
}

// Row-major H x W grids.
struct Grid {
  int h = 0, w = 0;
  std::vector<double> score;
  std::vector<int> mask;
};

// Breadth-first 8-connected labelling; returns one pixel list per region.
inline std::vector<std::vector<int>> regions(const Grid& g) {
  std::vector<int> seen(g.mask.size(), 0);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < g.h * g.w; ++start) {
    if (!g.mask[start] || seen[start]) continue;
    std::vector<int> comp;
    std::deque<int> q{start};
    seen[start] = 1;
    while (!q.empty()) {
      const int p = q.front();
      q.pop_front();
      comp.push_back(p);
      const int r = p / g.w, c = p % g.w;
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const int nr = r + dr, nc = c + dc;
          if (nr < 0 || nc < 0 || nr >= g.h || nc >= g.w) continue;
          const int np = nr * g.w + nc;
          if (g.mask[np] && !seen[np]) {
            seen[np] = 1;
            q.push_back(np);
          }
        }
    }
    out.push_back(comp);
  }
  return out;
}

// Evaluates (FPR, PRO) at every distinct score, integrates the piecewise
// linear curve from (0, 0) and clips it at the cap.
inline double aupro(const std::vector<Grid>& grids, double cap) {
  std::vector<double> all;
  std::vector<std::vector<std::vector<int>>> regs;
  long normals = 0;
  long n_regions = 0;
  for (const auto& g : grids) {
    all.insert(all.end(), g.score.begin(), g.score.end());
    regs.push_back(regions(g));
    n_regions += static_cast<long>(regs.back().size());
    for (int m : g.mask) normals += m == 0;
  }
  std::vector<std::pair<double, double>> curve{{0.0, 0.0}};
  for (double t : descending_unique(all)) {
    long fp = 0;
    double pro = 0;
    for (std::size_t i = 0; i < grids.size(); ++i) {
      const auto& g = grids[i];
      for (std::size_t p = 0; p < g.score.size(); ++p) fp += !g.mask[p] && g.score[p] >= t;
      for (const auto& reg : regs[i]) {
        long hit = 0;
        for (int p : reg) hit += g.score[p] >= t;
        pro += static_cast<double>(hit) / static_cast<double>(reg.size());
      }
    }
    curve.emplace_back(static_cast<double>(fp) / static_cast<double>(normals),
                       pro / static_cast<double>(n_regions));
  }
  double area = 0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    const auto [x0, y0] = curve[k - 1];
    auto [x1, y1] = curve[k];
    if (x0 >= cap) break;
    if (x1 > cap) {
      y1 = y0 + (cap - x0) / (x1 - x0) * (y1 - y0);
      x1 = cap;
    }
    area += 0.5 * (x1 - x0) * (y0 + y1);
  }
  return area / cap;
}

// Plain 2-D Gaussian convolution with mirrored borders, no separability.
inline std::vector<double> gaussian_blur(const std::vector<double>& img, int h, int w,
                                         double sigma) {
  const int r = static_cast<int>(std::lround(4 * sigma));
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  double norm = 0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) norm += std::exp(-(i * i + j * j) / (2 * sigma * sigma));
  std::vector<double> out(img.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j)
          acc += std::exp(-(i * i + j * j) / (2 * sigma * sigma)) *
                 img[mirror(y + i, h) * w + mirror(x + j, w)];
      out[y * w + x] = acc / norm;
    }
  return out;
}

// Bilinear sample of an h x w plane at output pixel (oy, ox) of an oh x ow
// grid, pixel centres aligned (align_corners = false), edges clamped.
inline double bilinear(const std::vector<double>& src, int h, int w, int oh, int ow, int oy,
                       int ox) {
  const double sy = std::max(0.0, (oy + 0.5) * h / oh - 0.5);
  const double sx = std::max(0.0, (ox + 0.5) * w / ow - 0.5);
  const int y0 = std::min(static_cast<int>(sy), h - 1), x0 = std::min(static_cast<int>(sx), w - 1);
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1]) +
         fy * ((1 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
}

// Shannon entropy in bits of a 256-style fixed-width histogram, computed
// by scanning each bin's interval explicitly.
inline double histogram_entropy(const std::vector<double>& v, int bins) {
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());
  if (!(hi > lo)) return 0.0;
  const double width = (hi - lo) / bins;
  double h = 0;
  for (int b = 0; b < bins; ++b) {
    long c = 0;
    for (double x : v) {
      int idx = static_cast<int>((x - lo) / width);
      if (idx >= bins) idx = bins - 1;
      c += idx == b;
    }
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(v.size());
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace minimax::oracle
