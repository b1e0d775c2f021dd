#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "minimax/autograd.hpp"

namespace minimax {

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

// Output extent of a strided convolution.
inline Index conv_out(Index in, Index k, Index stride, Index pad, Index dilation = 1) {
  return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

template <typename Scalar>
void im2col(const Scalar* img, Index cin, Index h, Index w, Index k, Index stride, Index pad,
            Index ho, Index wo, ColMatrix<Scalar>& col) {
  col.setZero(ho * wo, cin * k * k);
  for (Index c = 0; c < cin; ++c) {
    const Scalar* src = img + c * h * w;
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        Scalar* dst = col.data() + ((c * k + ki) * k + kj) * ho * wo;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * stride + ki - pad;
          if (ih < 0 || ih >= h) continue;
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow * stride + kj - pad;
            if (iw >= 0 && iw < w) dst[oh * wo + ow] = src[ih * w + iw];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const ColMatrix<Scalar>& col, Index cin, Index h, Index w, Index k, Index stride,
            Index pad, Index ho, Index wo, Scalar* img) {
  for (Index c = 0; c < cin; ++c) {
    Scalar* dst = img + c * h * w;
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        const Scalar* src = col.data() + ((c * k + ki) * k + kj) * ho * wo;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * stride + ki - pad;
          if (ih < 0 || ih >= h) continue;
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow * stride + kj - pad;
            if (iw >= 0 && iw < w) dst[ih * w + iw] += src[oh * wo + ow];
          }
        }
      }
    }
  }
}

// Accumulates the stride-1 dilated depthwise correlation of one plane:
// out[oh,ow] += sum_{ki,kj} k[ki,kj] * in[oh + ki*d - pad, ow + kj*d - pad].
template <typename Scalar>
void depthwise_plane(const Scalar* in, const Scalar* kernel, Index k, Index dilation, Index pad,
                     Index h, Index w, Scalar* out) {
  for (Index ki = 0; ki < k; ++ki) {
    const Index dy = ki * dilation - pad;
    const Index oh0 = std::max<Index>(0, -dy);
    const Index oh1 = std::min<Index>(h, h - dy);
    for (Index kj = 0; kj < k; ++kj) {
      const Scalar kv = kernel[ki * k + kj];
      if (kv == Scalar(0)) continue;
      const Index dx = kj * dilation - pad;
      const Index ow0 = std::max<Index>(0, -dx);
      const Index ow1 = std::min<Index>(w, w - dx);
      for (Index oh = oh0; oh < oh1; ++oh) {
        const Scalar* src = in + (oh + dy) * w + dx;
        Scalar* dst = out + oh * w;
        for (Index ow = ow0; ow < ow1; ++ow) dst[ow] += kv * src[ow];
      }
    }
  }
}

template <typename Scalar>
void depthwise_plane_backward(const Scalar* in, const Scalar* kernel, const Scalar* gout, Index k,
                              Index dilation, Index pad, Index h, Index w, Scalar* gin,
                              Scalar* gkernel) {
  for (Index ki = 0; ki < k; ++ki) {
    const Index dy = ki * dilation - pad;
    const Index oh0 = std::max<Index>(0, -dy);
    const Index oh1 = std::min<Index>(h, h - dy);
    for (Index kj = 0; kj < k; ++kj) {
      const Scalar kv = kernel[ki * k + kj];
      const Index dx = kj * dilation - pad;
      const Index ow0 = std::max<Index>(0, -dx);
      const Index ow1 = std::min<Index>(w, w - dx);
      Scalar acc = 0;
      for (Index oh = oh0; oh < oh1; ++oh) {
        const Scalar* src = in + (oh + dy) * w + dx;
        const Scalar* g = gout + oh * w;
        Scalar* gi = gin ? gin + (oh + dy) * w + dx : nullptr;
        for (Index ow = ow0; ow < ow1; ++ow) {
          acc += g[ow] * src[ow];
          if (gi) gi[ow] += kv * g[ow];
        }
      }
      if (gkernel) gkernel[ki * k + kj] += acc;
    }
  }
}

template <typename Scalar>
Scalar gelu_value(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::numbers::sqrt2_v<Scalar>));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x / std::numbers::sqrt2_v<Scalar>));
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<Scalar> /
                     std::numbers::sqrt2_v<Scalar>;
  return cdf + x * pdf;
}

// Per-axis taps of bilinear resampling with half-pixel centers (align_corners off).
struct LinearTaps {
  std::vector<Index> i0, i1;
  std::vector<double> frac;
};

inline LinearTaps linear_taps(Index in, Index out) {
  LinearTaps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.frac.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    Index lo = static_cast<Index>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    t.i0[o] = lo;
    t.i1[o] = std::min<Index>(lo + 1, in - 1);
    t.frac[o] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  Tensor<Scalar> out = a.value() + b.value();
  return Var<Scalar>::make(std::move(out), {a, b}, [a, b](const Tensor<Scalar>& g) {
    a.accumulate_grad(g);
    b.accumulate_grad(g);
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  return Var<Scalar>::make(a.value() * s, {a},
                           [a, s](const Tensor<Scalar>& g) { a.accumulate_grad(g * s); });
}

// Sum of all elements as a 1x1x1x1 tensor.
template <typename Scalar>
Var<Scalar> sum_all(const Var<Scalar>& a) {
  return Var<Scalar>::make(Tensor<Scalar>::scalar(a.value().array().sum()), {a},
                           [a](const Tensor<Scalar>& g) {
                             a.accumulate_grad(Tensor<Scalar>::constant(a.shape(), g[0]));
                           });
}

template <typename Scalar>
Var<Scalar> mean_all(const Var<Scalar>& a) {
  return scale(sum_all(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.value().array().unaryExpr([](Scalar v) { return detail::gelu_value(v); });
  return Var<Scalar>::make(std::move(out), {x}, [x](const Tensor<Scalar>& g) {
    Tensor<Scalar> gx(x.shape());
    gx.array() =
        g.array() * x.value().array().unaryExpr([](Scalar v) { return detail::gelu_grad(v); });
    x.accumulate_grad(gx);
  });
}

// Dense 2-D convolution. weight: (Cout, Cin, k, k); bias: (1, Cout, 1, 1).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   Index stride, Index pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  detail::require(ws.c == xs.c && ws.h == ws.w, "conv2d: weight " + to_string(ws) +
                                                    " does not match input " + to_string(xs));
  detail::require(bias.value().size() == ws.n, "conv2d: bias length");
  const Index k = ws.h, cout = ws.n, kk = xs.c * k * k;
  const Index ho = detail::conv_out(xs.h, k, stride, pad);
  const Index wo = detail::conv_out(xs.w, k, stride, pad);
  detail::require(ho > 0 && wo > 0, "conv2d: empty output for input " + to_string(xs));

  using WMap = Eigen::Map<const RowMajorMatrix<Scalar>>;
  const WMap wm(weight.value().data(), cout, kk);
  const auto bvec = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(
      bias.value().data(), cout);
  Tensor<Scalar> out(Shape{xs.n, cout, ho, wo});
  ColMatrix<Scalar> col;
  for (Index n = 0; n < xs.n; ++n) {
    detail::im2col(x.value().plane(n, 0), xs.c, xs.h, xs.w, k, stride, pad, ho, wo, col);
    auto y = out.image(n);
    y.noalias() = col * wm.transpose();
    y.rowwise() += bvec;
  }
  return Var<Scalar>::make(
      std::move(out), {x, weight, bias},
      [x, weight, bias, stride, pad, k, cout, kk, ho, wo](const Tensor<Scalar>& g) {
        const Shape xs = x.shape();
        const WMap wm(weight.value().data(), cout, kk);
        Tensor<Scalar> gx(xs);
        RowMajorMatrix<Scalar> gw = RowMajorMatrix<Scalar>::Zero(cout, kk);
        Tensor<Scalar> gb = Tensor<Scalar>::vector(cout);
        auto gbm = Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(gb.data(), cout);
        ColMatrix<Scalar> col;
        for (Index n = 0; n < xs.n; ++n) {
          const auto gy = g.image(n);
          if (weight.requires_grad()) {
            detail::im2col(x.value().plane(n, 0), xs.c, xs.h, xs.w, k, stride, pad, ho, wo, col);
            gw.noalias() += gy.transpose() * col;
          }
          gbm += gy.colwise().sum();
          if (x.requires_grad()) {
            ColMatrix<Scalar> gcol = gy * wm;
            detail::col2im(gcol, xs.c, xs.h, xs.w, k, stride, pad, ho, wo, gx.plane(n, 0));
          }
        }
        x.accumulate_grad(gx);
        if (weight.requires_grad()) {
          Tensor<Scalar> gwt(weight.shape());
          Eigen::Map<RowMajorMatrix<Scalar>>(gwt.data(), cout, kk) = gw;
          weight.accumulate_grad(gwt);
        }
        bias.accumulate_grad(gb.reshaped(bias.shape()));
      });
}

// 1x1 convolution. weight: (Cout, Cin, 1, 1); bias: (1, Cout, 1, 1).
template <typename Scalar>
Var<Scalar> pointwise(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  const Shape xs = x.shape();
  const Index cout = weight.shape().n, cin = weight.shape().c;
  detail::require(cin == xs.c && weight.shape().h == 1,
                  "pointwise: weight " + to_string(weight.shape()) + " vs input " + to_string(xs));
  using WMap = Eigen::Map<const RowMajorMatrix<Scalar>>;
  const WMap wm(weight.value().data(), cout, cin);
  const auto bvec =
      Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(bias.value().data(), cout);
  Tensor<Scalar> out(Shape{xs.n, cout, xs.h, xs.w});
  for (Index n = 0; n < xs.n; ++n) {
    auto y = out.image(n);
    y.noalias() = x.value().image(n) * wm.transpose();
    y.rowwise() += bvec;
  }
  return Var<Scalar>::make(
      std::move(out), {x, weight, bias}, [x, weight, bias, cout, cin](const Tensor<Scalar>& g) {
        const Shape xs = x.shape();
        const WMap wm(weight.value().data(), cout, cin);
        Tensor<Scalar> gx(xs);
        Tensor<Scalar> gw(weight.shape());
        Tensor<Scalar> gb(bias.shape());
        auto gwm = Eigen::Map<RowMajorMatrix<Scalar>>(gw.data(), cout, cin);
        auto gbm = Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(gb.data(), cout);
        for (Index n = 0; n < xs.n; ++n) {
          const auto gy = g.image(n);
          if (x.requires_grad()) gx.image(n).noalias() = gy * wm;
          if (weight.requires_grad()) gwm.noalias() += gy.transpose() * x.value().image(n);
          gbm += gy.colwise().sum();
        }
        x.accumulate_grad(gx);
        weight.accumulate_grad(gw);
        bias.accumulate_grad(gb);
      });
}

// Stride-1 "same" depthwise convolution with dilation. weight: (C, 1, k, k) with k odd;
// bias: (1, C, 1, 1) or undefined.
template <typename Scalar>
Var<Scalar> depthwise_conv2d(const Var<Scalar>& x, const Var<Scalar>& weight,
                             const Var<Scalar>& bias, Index dilation = 1) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  detail::require(ws.n == xs.c && ws.c == 1 && ws.h == ws.w && ws.h % 2 == 1,
                  "depthwise_conv2d: weight " + to_string(ws) + " vs input " + to_string(xs));
  const Index k = ws.h;
  const Index pad = dilation * (k - 1) / 2;
  const bool has_bias = bias.defined();
  Tensor<Scalar> out(xs);
  for (Index n = 0; n < xs.n; ++n) {
    for (Index c = 0; c < xs.c; ++c) {
      Scalar* o = out.plane(n, c);
      if (has_bias) std::fill(o, o + xs.plane(), bias.value()[c]);
      detail::depthwise_plane(x.value().plane(n, c), weight.value().data() + c * k * k, k,
                              dilation, pad, xs.h, xs.w, o);
    }
  }
  std::vector<Var<Scalar>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Var<Scalar>::make(
      std::move(out), std::move(inputs),
      [x, weight, bias, has_bias, k, dilation, pad](const Tensor<Scalar>& g) {
        const Shape xs = x.shape();
        Tensor<Scalar> gx(xs);
        Tensor<Scalar> gw(weight.shape());
        const bool want_x = x.requires_grad();
        const bool want_w = weight.requires_grad();
        for (Index n = 0; n < xs.n; ++n) {
          for (Index c = 0; c < xs.c; ++c) {
            detail::depthwise_plane_backward(
                x.value().plane(n, c), weight.value().data() + c * k * k, g.plane(n, c), k,
                dilation, pad, xs.h, xs.w, want_x ? gx.plane(n, c) : nullptr,
                want_w ? gw.data() + c * k * k : nullptr);
          }
        }
        x.accumulate_grad(gx);
        weight.accumulate_grad(gw);
        if (has_bias && bias.requires_grad()) {
          Tensor<Scalar> gb(bias.shape());
          for (Index n = 0; n < xs.n; ++n)
            for (Index c = 0; c < xs.c; ++c)
              gb[c] += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(g.plane(n, c),
                                                                                 xs.plane())
                           .sum();
          bias.accumulate_grad(gb);
        }
      });
}

// LayerNorm across channels at every pixel independently. weight, bias: (1, C, 1, 1).
template <typename Scalar>
Var<Scalar> layer_norm_channels(const Var<Scalar>& x, const Var<Scalar>& weight,
                                const Var<Scalar>& bias, Scalar eps = Scalar(1e-6)) {
  const Shape xs = x.shape();
  detail::require(weight.value().size() == xs.c && bias.value().size() == xs.c,
                  "layer_norm_channels: parameter length vs " + to_string(xs));
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const auto gvec = Eigen::Map<const RowVec>(weight.value().data(), xs.c);
  const auto bvec = Eigen::Map<const RowVec>(bias.value().data(), xs.c);
  Tensor<Scalar> xhat(xs);
  Tensor<Scalar> inv_std(Shape{xs.n, 1, xs.h, xs.w});
  Tensor<Scalar> out(xs);
  for (Index n = 0; n < xs.n; ++n) {
    const auto xi = x.value().image(n);
    auto hi = xhat.image(n);
    auto is = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(inv_std.plane(n, 0), xs.plane());
    const auto mean = xi.rowwise().mean();
    hi = xi.colwise() - mean;
    const auto var = hi.rowwise().squaredNorm() / static_cast<Scalar>(xs.c);
    is = (var.array() + eps).rsqrt().matrix();
    hi = is.asDiagonal() * hi;
    auto yi = out.image(n);
    yi = hi * gvec.asDiagonal();
    yi.rowwise() += bvec;
  }
  return Var<Scalar>::make(
      std::move(out), {x, weight, bias},
      [x, weight, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const Tensor<Scalar>& g) {
        const Shape xs = x.shape();
        const auto gvec = Eigen::Map<const RowVec>(weight.value().data(), xs.c);
        Tensor<Scalar> gx(xs);
        Tensor<Scalar> gw(weight.shape());
        Tensor<Scalar> gb(bias.shape());
        auto gwm = Eigen::Map<RowVec>(gw.data(), xs.c);
        auto gbm = Eigen::Map<RowVec>(gb.data(), xs.c);
        const Scalar inv_c = Scalar(1) / static_cast<Scalar>(xs.c);
        for (Index n = 0; n < xs.n; ++n) {
          const auto gy = g.image(n);
          const auto hi = xhat.image(n);
          gwm += (gy.array() * hi.array()).colwise().sum().matrix();
          gbm += gy.colwise().sum();
          if (!x.requires_grad()) continue;
          const auto is = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(
              inv_std.plane(n, 0), xs.plane());
          ColMatrix<Scalar> gh = gy * gvec.asDiagonal();
          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m1 = gh.rowwise().sum() * inv_c;
          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m2 =
              (gh.array() * hi.array()).rowwise().sum().matrix() * inv_c;
          gh.colwise() -= m1;
          gh -= m2.asDiagonal() * hi;
          gx.image(n) = is.asDiagonal() * gh;
        }
        x.accumulate_grad(gx);
        weight.accumulate_grad(gw);
        bias.accumulate_grad(gb);
      });
}

// Global response normalization: y = gamma * (x * n) + beta + x with n_c = G_c / (mean(G) + eps),
// G_c the L2 norm of channel c over H x W, computed per batch item.
// gamma, beta: (1, C, 1, 1).
template <typename Scalar>
Var<Scalar> grn(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                Scalar eps = Scalar(1e-6)) {
  const Shape xs = x.shape();
  if (gamma.value().size() != xs.c || beta.value().size() != xs.c) {
    throw ConfigError("grn: " + std::to_string(xs.c) + " channels but parameters of length " +
                      std::to_string(gamma.value().size()) + "/" +
                      std::to_string(beta.value().size()));
  }
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Tensor<Scalar> norms(Shape{xs.n, xs.c, 1, 1});
  Tensor<Scalar> coeff(Shape{xs.n, xs.c, 1, 1});
  Tensor<Scalar> denom(Shape{xs.n, 1, 1, 1});
  Tensor<Scalar> out(xs);
  const auto gv = Eigen::Map<const Vec>(gamma.value().data(), xs.c);
  const auto bv = Eigen::Map<const Vec>(beta.value().data(), xs.c);
  for (Index n = 0; n < xs.n; ++n) {
    const auto xi = x.value().image(n);
    auto gn = Eigen::Map<Vec>(norms.data() + n * xs.c, xs.c);
    auto cn = Eigen::Map<Vec>(coeff.data() + n * xs.c, xs.c);
    gn = xi.colwise().norm().transpose();
    denom[n] = gn.mean() + eps;
    cn = gn / denom[n];
    auto yi = out.image(n);
    const Vec scale_c = (gv.array() * cn.array() + Scalar(1)).matrix();
    yi = xi * scale_c.asDiagonal();
    yi.rowwise() += bv.transpose();
  }
  return Var<Scalar>::make(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, norms = std::move(norms), coeff = std::move(coeff),
       denom = std::move(denom)](const Tensor<Scalar>& g) {
        const Shape xs = x.shape();
        const auto gv = Eigen::Map<const Vec>(gamma.value().data(), xs.c);
        Tensor<Scalar> gx(xs);
        Tensor<Scalar> gg(gamma.shape());
        Tensor<Scalar> gbeta(beta.shape());
        auto ggm = Eigen::Map<Vec>(gg.data(), xs.c);
        auto gbm = Eigen::Map<Vec>(gbeta.data(), xs.c);
        const Scalar inv_c = Scalar(1) / static_cast<Scalar>(xs.c);
        for (Index n = 0; n < xs.n; ++n) {
          const auto xi = x.value().image(n);
          const auto gy = g.image(n);
          const auto gn = Eigen::Map<const Vec>(norms.data() + n * xs.c, xs.c);
          const auto cn = Eigen::Map<const Vec>(coeff.data() + n * xs.c, xs.c);
          // s_c = sum_p dy * x per channel.
          const Vec s = (gy.array() * xi.array()).colwise().sum().transpose();
          ggm += (s.array() * cn.array()).matrix();
          gbm += gy.colwise().sum().transpose();
          if (!x.requires_grad()) continue;
          const Vec a = (gv.array() * s.array()).matrix();  // dL/dn_c
          const Scalar d = denom[n];
          const Scalar cross = (a.array() * gn.array()).sum() * inv_c / (d * d);
          Vec dg = a / d;
          dg.array() -= cross;  // dL/dG_c
          Vec per_channel(xs.c);
          for (Index c = 0; c < xs.c; ++c)
            per_channel[c] = gn[c] > Scalar(0) ? dg[c] / gn[c] : Scalar(0);
          const Vec direct = (gv.array() * cn.array() + Scalar(1)).matrix();
          gx.image(n) = gy * direct.asDiagonal() + xi * per_channel.asDiagonal();
        }
        x.accumulate_grad(gx);
        gamma.accumulate_grad(gg);
        beta.accumulate_grad(gbeta);
      });
}

// 2x2 stride-2 transposed convolution (exact 2x upsampling). weight: (Cin, Cout, 2, 2).
template <typename Scalar>
Var<Scalar> conv_transpose2x2(const Var<Scalar>& x, const Var<Scalar>& weight,
                              const Var<Scalar>& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  detail::require(ws.n == xs.c && ws.h == 2 && ws.w == 2,
                  "conv_transpose2x2: weight " + to_string(ws) + " vs input " + to_string(xs));
  const Index cin = ws.n, cout = ws.c;
  using WMap = Eigen::Map<const RowMajorMatrix<Scalar>>;
  const WMap wm(weight.value().data(), cin, cout * 4);
  Tensor<Scalar> out(Shape{xs.n, cout, xs.h * 2, xs.w * 2});
  const Index wo = xs.w * 2;
  for (Index n = 0; n < xs.n; ++n) {
    const ColMatrix<Scalar> y = x.value().image(n) * wm;  // (HW) x (Cout*4)
    for (Index co = 0; co < cout; ++co) {
      Scalar* o = out.plane(n, co);
      const Scalar b = bias.value()[co];
      for (Index t = 0; t < 4; ++t) {
        const Index i = t / 2, j = t % 2;
        const Scalar* src = y.data() + (co * 4 + t) * xs.plane();
        for (Index h = 0; h < xs.h; ++h)
          for (Index w = 0; w < xs.w; ++w) o[(2 * h + i) * wo + 2 * w + j] = src[h * xs.w + w] + b;
      }
    }
  }
  return Var<Scalar>::make(
      std::move(out), {x, weight, bias}, [x, weight, bias, cin, cout](const Tensor<Scalar>& g) {
        const Shape xs = x.shape();
        const WMap wm(weight.value().data(), cin, cout * 4);
        const Index wo = xs.w * 2;
        Tensor<Scalar> gx(xs);
        RowMajorMatrix<Scalar> gw = RowMajorMatrix<Scalar>::Zero(cin, cout * 4);
        Tensor<Scalar> gb(bias.shape());
        ColMatrix<Scalar> gy(xs.plane(), cout * 4);
        for (Index n = 0; n < xs.n; ++n) {
          for (Index co = 0; co < cout; ++co) {
            const Scalar* gp = g.plane(n, co);
            for (Index t = 0; t < 4; ++t) {
              const Index i = t / 2, j = t % 2;
              Scalar* dst = gy.data() + (co * 4 + t) * xs.plane();
              for (Index h = 0; h < xs.h; ++h)
                for (Index w = 0; w < xs.w; ++w) {
                  const Scalar v = gp[(2 * h + i) * wo + 2 * w + j];
                  dst[h * xs.w + w] = v;
                  gb[co] += v;
                }
            }
          }
          if (x.requires_grad()) gx.image(n).noalias() = gy * wm.transpose();
          if (weight.requires_grad()) gw.noalias() += x.value().image(n).transpose() * gy;
        }
        x.accumulate_grad(gx);
        if (weight.requires_grad()) {
          Tensor<Scalar> gwt(weight.shape());
          Eigen::Map<RowMajorMatrix<Scalar>>(gwt.data(), cin, cout * 4) = gw;
          weight.accumulate_grad(gwt);
        }
        bias.accumulate_grad(gb);
      });
}

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts) {
  detail::require(!parts.empty(), "concat_channels: no inputs");
  Shape s = parts.front().shape();
  Index total = 0;
  for (const auto& p : parts) {
    detail::require(p.shape().n == s.n && p.shape().h == s.h && p.shape().w == s.w,
                    "concat_channels: spatial/batch mismatch");
    total += p.shape().c;
  }
  Tensor<Scalar> out(Shape{s.n, total, s.h, s.w});
  for (Index n = 0; n < s.n; ++n) {
    Index off = 0;
    for (const auto& p : parts) {
      std::copy_n(p.value().plane(n, 0), p.shape().item(), out.plane(n, off));
      off += p.shape().c;
    }
  }
  return Var<Scalar>::make(std::move(out), parts, [parts](const Tensor<Scalar>& g) {
    const Index n_items = g.shape().n;
    Index off = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) {
        Tensor<Scalar> gp(p.shape());
        for (Index n = 0; n < n_items; ++n)
          std::copy_n(g.plane(n, off), p.shape().item(), gp.plane(n, 0));
        p.accumulate_grad(gp);
      }
      off += p.shape().c;
    }
  });
}

// Per-pixel cosine distance 1 - cos(e(:,h,w), d(:,h,w)) -> (N, 1, H, W), clamped to [0, 2].
// Norms below eps are replaced by eps.
template <typename Scalar>
Var<Scalar> cosine_distance_map(const Var<Scalar>& e, const Var<Scalar>& d,
                                Scalar eps = Scalar(1e-8)) {
  e.value().require_same_shape(d.value(), "cosine_distance_map");
  const Shape s = e.shape();
  Tensor<Scalar> out(Shape{s.n, 1, s.h, s.w});
  for (Index n = 0; n < s.n; ++n) {
    const auto ei = e.value().image(n);
    const auto di = d.value().image(n);
    const auto dot = (ei.array() * di.array()).rowwise().sum();
    const auto ne = ei.rowwise().norm().array().max(eps);
    const auto nd = di.rowwise().norm().array().max(eps);
    auto o = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(out.plane(n, 0), s.plane());
    o = Scalar(1) - (dot / (ne * nd)).max(Scalar(-1)).min(Scalar(1));
  }
  return Var<Scalar>::make(std::move(out), {e, d}, [e, d, eps](const Tensor<Scalar>& g) {
    const Shape s = e.shape();
    Tensor<Scalar> ge(s), gd(s);
    for (Index n = 0; n < s.n; ++n) {
      const auto ei = e.value().image(n);
      const auto di = d.value().image(n);
      for (Index p = 0; p < s.plane(); ++p) {
        const Scalar go = g.plane(n, 0)[p];
        if (go == Scalar(0)) continue;
        const Scalar re = ei.row(p).norm(), rd = di.row(p).norm();
        const Scalar a = std::max(re, eps), b = std::max(rd, eps);
        const Scalar dot = ei.row(p).dot(di.row(p));
        const Scalar c = dot / (a * b);
        // dM/de = -(d/(ab) - c e / |e|^2) when |e| > eps.
        const Scalar ke = re > eps ? c / (re * re) : Scalar(0);
        const Scalar kd = rd > eps ? c / (rd * rd) : Scalar(0);
        for (Index ch = 0; ch < s.c; ++ch) {
          const Scalar ev = ei(p, ch), dv = di(p, ch);
          ge.plane(n, ch)[p] += -go * (dv / (a * b) - ke * ev);
          gd.plane(n, ch)[p] += -go * (ev / (a * b) - kd * dv);
        }
      }
    }
    e.accumulate_grad(ge);
    d.accumulate_grad(gd);
  });
}

// Cosine distance between whole flattened items -> (N, 1, 1, 1).
template <typename Scalar>
Var<Scalar> flat_cosine_distance(const Var<Scalar>& e, const Var<Scalar>& d,
                                 Scalar eps = Scalar(1e-8)) {
  e.value().require_same_shape(d.value(), "flat_cosine_distance");
  const Shape s = e.shape();
  const Index m = s.item();
  using ArrMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  Tensor<Scalar> out(Shape{s.n, 1, 1, 1});
  for (Index n = 0; n < s.n; ++n) {
    const ArrMap ei(e.value().plane(n, 0), m), di(d.value().plane(n, 0), m);
    const Scalar a = std::max(std::sqrt((ei * ei).sum()), eps);
    const Scalar b = std::max(std::sqrt((di * di).sum()), eps);
    const Scalar c = std::clamp((ei * di).sum() / (a * b), Scalar(-1), Scalar(1));
    out[n] = Scalar(1) - c;
  }
  return Var<Scalar>::make(std::move(out), {e, d}, [e, d, eps, m](const Tensor<Scalar>& g) {
    const Shape s = e.shape();
    Tensor<Scalar> ge(s), gd(s);
    for (Index n = 0; n < s.n; ++n) {
      const ArrMap ei(e.value().plane(n, 0), m), di(d.value().plane(n, 0), m);
      const Scalar re = std::sqrt((ei * ei).sum()), rd = std::sqrt((di * di).sum());
      const Scalar a = std::max(re, eps), b = std::max(rd, eps);
      const Scalar c = (ei * di).sum() / (a * b);
      const Scalar ke = re > eps ? c / (re * re) : Scalar(0);
      const Scalar kd = rd > eps ? c / (rd * rd) : Scalar(0);
      auto gem = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(ge.plane(n, 0), m);
      auto gdm = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(gd.plane(n, 0), m);
      gem = -g[n] * (di / (a * b) - ke * ei);
      gdm = -g[n] * (ei / (a * b) - kd * di);
    }
    e.accumulate_grad(ge);
    d.accumulate_grad(gd);
  });
}

// Bilinear resampling to (out_h, out_w), half-pixel centers, edge clamped.
template <typename Scalar>
Var<Scalar> upsample_bilinear(const Var<Scalar>& x, Index out_h, Index out_w) {
  const Shape xs = x.shape();
  const auto ty = detail::linear_taps(xs.h, out_h);
  const auto tx = detail::linear_taps(xs.w, out_w);
  Tensor<Scalar> out(Shape{xs.n, xs.c, out_h, out_w});
  for (Index n = 0; n < xs.n; ++n) {
    for (Index c = 0; c < xs.c; ++c) {
      const Scalar* in = x.value().plane(n, c);
      Scalar* o = out.plane(n, c);
      for (Index oh = 0; oh < out_h; ++oh) {
        const Scalar fy = static_cast<Scalar>(ty.frac[oh]);
        const Scalar* r0 = in + ty.i0[oh] * xs.w;
        const Scalar* r1 = in + ty.i1[oh] * xs.w;
        for (Index ow = 0; ow < out_w; ++ow) {
          const Scalar fx = static_cast<Scalar>(tx.frac[ow]);
          const Index a = tx.i0[ow], b = tx.i1[ow];
          const Scalar top = r0[a] + fx * (r0[b] - r0[a]);
          const Scalar bot = r1[a] + fx * (r1[b] - r1[a]);
          o[oh * out_w + ow] = top + fy * (bot - top);
        }
      }
    }
  }
  return Var<Scalar>::make(std::move(out), {x}, [x, ty, tx, out_h, out_w](const Tensor<Scalar>& g) {
    const Shape xs = x.shape();
    Tensor<Scalar> gx(xs);
    for (Index n = 0; n < xs.n; ++n) {
      for (Index c = 0; c < xs.c; ++c) {
        const Scalar* go = g.plane(n, c);
        Scalar* gi = gx.plane(n, c);
        for (Index oh = 0; oh < out_h; ++oh) {
          const Scalar fy = static_cast<Scalar>(ty.frac[oh]);
          Scalar* r0 = gi + ty.i0[oh] * xs.w;
          Scalar* r1 = gi + ty.i1[oh] * xs.w;
          for (Index ow = 0; ow < out_w; ++ow) {
            const Scalar fx = static_cast<Scalar>(tx.frac[ow]);
            const Index a = tx.i0[ow], b = tx.i1[ow];
            const Scalar v = go[oh * out_w + ow];
            r0[a] += v * (1 - fy) * (1 - fx);
            r0[b] += v * (1 - fy) * fx;
            r1[a] += v * fy * (1 - fx);
            r1[b] += v * fy * fx;
          }
        }
      }
    }
    x.accumulate_grad(gx);
  });
}

// Mean of x^2 over elements where mask != 0; masked elements get no gradient.
// Returns 0 (with no gradient) when the mask is empty.
template <typename Scalar>
Var<Scalar> masked_mean_square(const Var<Scalar>& x, const std::vector<unsigned char>& mask) {
  detail::require(static_cast<Index>(mask.size()) == x.value().size(),
                  "masked_mean_square: mask size");
  const auto& v = x.value();
  double acc = 0;
  Index count = 0;
  for (Index i = 0; i < v.size(); ++i) {
    if (mask[i]) {
      acc += static_cast<double>(v[i]) * static_cast<double>(v[i]);
      ++count;
    }
  }
  const Scalar loss = count ? static_cast<Scalar>(acc / static_cast<double>(count)) : Scalar(0);
  return Var<Scalar>::make(Tensor<Scalar>::scalar(loss), {x},
                           [x, mask, count](const Tensor<Scalar>& g) {
                             if (count == 0) return;
                             Tensor<Scalar> gx(x.shape());
                             const Scalar k = g[0] * Scalar(2) / static_cast<Scalar>(count);
                             for (Index i = 0; i < gx.size(); ++i)
                               if (mask[i]) gx[i] = k * x.value()[i];
                             x.accumulate_grad(gx);
                           });
}

}  // namespace minimax
