#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "minimax/ops.hpp"

namespace minimax {

enum class BlockKind { LarK, SmaK };

inline const char* to_string(BlockKind k) { return k == BlockKind::LarK ? "LarK" : "SmaK"; }

struct DilatedBranch {
  Index kernel = 3;
  Index dilation = 1;
  // Side length of the dense kernel this branch is equivalent to.
  Index extent() const { return dilation * (kernel - 1) + 1; }
};

// Geometry of one inverted-bottleneck block. `dilated_branches` lists every
// parallel depthwise branch, including the undilated full-size one.
struct BlockSpec {
  BlockKind kind = BlockKind::SmaK;
  Index kernel_size = 3;
  std::vector<DilatedBranch> dilated_branches{{3, 1}};
  Index channels = 0;
  Index expansion = 4;

  void validate() const {
    if (kernel_size <= 0 || kernel_size % 2 == 0)
      throw ConfigError("kernel_size must be odd, got " + std::to_string(kernel_size));
    if (dilated_branches.empty()) throw ConfigError("block needs at least one branch");
    for (const auto& b : dilated_branches) {
      if (b.kernel <= 0 || b.kernel % 2 == 0 || b.dilation <= 0)
        throw ConfigError("branch kernel must be odd and dilation positive");
      if (b.extent() > kernel_size)
        throw ConfigError("branch " + std::to_string(b.kernel) + "x" + std::to_string(b.kernel) +
                          " dilation " + std::to_string(b.dilation) + " exceeds kernel " +
                          std::to_string(kernel_size));
    }
    if (channels <= 0) throw ConfigError("block channels must be positive");
  }

  // Dilated re-parameterization layout of the large-kernel family.
  static BlockSpec lark(Index channels, Index kernel = 13) {
    BlockSpec s;
    s.kind = BlockKind::LarK;
    s.kernel_size = kernel;
    s.channels = channels;
    s.dilated_branches = {{kernel, 1}};
    std::vector<Index> ks, ds;
    switch (kernel) {
      case 13: ks = {5, 7, 3, 3, 3}; ds = {1, 2, 3, 4, 5}; break;
      case 11: ks = {5, 5, 3, 3, 3}; ds = {1, 2, 3, 4, 5}; break;
      case 9: ks = {5, 5, 3, 3}; ds = {1, 2, 3, 4}; break;
      case 7: ks = {5, 3, 3}; ds = {1, 2, 3}; break;
      case 5: ks = {3, 3}; ds = {1, 2}; break;
      default: break;
    }
    for (std::size_t i = 0; i < ks.size(); ++i) s.dilated_branches.push_back({ks[i], ds[i]});
    return s;
  }

  static BlockSpec smak(Index channels) {
    BlockSpec s;
    s.kind = BlockKind::SmaK;
    s.kernel_size = 3;
    s.channels = channels;
    s.dilated_branches = {{3, 1}};
    return s;
  }
};

// Per-stage block counts; "8+0" is {lark = 8, smak = 0}.
struct StageDepth {
  int lark = 0;
  int smak = 0;
  int total() const { return lark + smak; }
};

struct ModelConfig {
  std::vector<StageDepth> stage_depths{{0, 1}, {1, 0}, {2, 0}};
  std::vector<Index> stage_channels{32, 64, 128};
  int bottleneck_depth = 2;
  Index input_h = 64;
  Index input_w = 64;
  Index lark_kernel = 13;
  Index expansion = 4;

  // Reduced configuration used for tests and the synthetic end-to-end run.
  static ModelConfig desk() { return {}; }

  // UniRepLKNet-N layout [2, 2, 8+0] at 256x256.
  static ModelConfig unireplknet_n() {
    ModelConfig c;
    c.stage_depths = {{0, 2}, {2, 0}, {8, 0}};
    c.stage_channels = {80, 160, 320};
    c.input_h = 256;
    c.input_w = 256;
    return c;
  }

  void validate() const {
    if (stage_depths.size() != 3 || stage_channels.size() != 3)
      throw ConfigError("exactly three stages are required");
    for (std::size_t i = 0; i < 3; ++i) {
      if (stage_depths[i].lark < 0 || stage_depths[i].smak < 0)
        throw ConfigError("negative stage depth");
      if (stage_channels[i] <= 0) throw ConfigError("stage channels must be positive");
      if (i > 0 && stage_channels[i] <= stage_channels[i - 1])
        throw ConfigError("stage channels must strictly increase");
    }
    if (stage_channels[0] % 2 != 0) throw ConfigError("stage 1 channels must be even (stem)");
    if (bottleneck_depth < 0) throw ConfigError("negative bottleneck depth");
    if (input_h <= 0 || input_w <= 0 || input_h % 32 != 0 || input_w % 32 != 0)
      throw ConfigError("input resolution must be a positive multiple of 32");
    if (lark_kernel % 2 == 0) throw ConfigError("lark_kernel must be odd");
  }

  // Blocks of stage `s` in execution order: LarK blocks first, then SmaK blocks.
  std::vector<BlockSpec> stage_blocks(std::size_t s) const {
    std::vector<BlockSpec> out;
    for (int i = 0; i < stage_depths[s].lark; ++i)
      out.push_back(BlockSpec::lark(stage_channels[s], lark_kernel));
    for (int i = 0; i < stage_depths[s].smak; ++i)
      out.push_back(BlockSpec::smak(stage_channels[s]));
    for (auto& b : out) b.expansion = expansion;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Parameter initialization

class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  // Uniform in [-bound, bound), built from raw 64-bit draws so the stream is
  // identical on every standard library.
  double uniform(double bound) {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return (2.0 * u - 1.0) * bound;
  }

  template <typename Scalar>
  Var<Scalar> uniform_param(Shape s, Index fan_in) {
    Tensor<Scalar> t(s);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(uniform(bound));
    return Var<Scalar>::parameter(std::move(t));
  }

  template <typename Scalar>
  static Var<Scalar> constant_param(Shape s, Scalar v) {
    return Var<Scalar>::parameter(Tensor<Scalar>::constant(s, v));
  }

 private:
  std::mt19937_64 rng_;
};

template <typename Scalar>
using ParamVisitor = std::function<void(const std::string&, Var<Scalar>&)>;

template <typename Scalar>
struct GRNParams {
  Var<Scalar> gamma;
  Var<Scalar> beta;

  static GRNParams zeros(Index channels) {
    return {ParamInit::constant_param<Scalar>({1, channels, 1, 1}, Scalar(0)),
            ParamInit::constant_param<Scalar>({1, channels, 1, 1}, Scalar(0))};
  }
};

template <typename Scalar>
Var<Scalar> grn(const Var<Scalar>& x, const GRNParams<Scalar>& p) {
  return grn(x, p.gamma, p.beta);
}

// ---------------------------------------------------------------------------
// Structural re-parameterization

// Folds parallel dilated depthwise kernels (each (C,1,k,k)) into one dense
// (C,1,K,K) kernel by scattering dilated taps onto the dense grid.
template <typename Scalar>
Tensor<Scalar> merge_dilated_branches(const BlockSpec& spec,
                                      const std::vector<Tensor<Scalar>>& branches) {
  spec.validate();
  if (branches.size() != spec.dilated_branches.size())
    throw ConfigError("expected " + std::to_string(spec.dilated_branches.size()) +
                      " branch kernels, got " + std::to_string(branches.size()));
  const Index big = spec.kernel_size;
  const Index channels = branches.front().shape().n;
  Tensor<Scalar> dense(Shape{channels, 1, big, big});
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const auto& br = spec.dilated_branches[b];
    const Shape s = branches[b].shape();
    if (s.n != channels || s.c != 1 || s.h != br.kernel || s.w != br.kernel)
      throw ConfigError("branch kernel shape " + to_string(s) + " does not match spec");
    const Index off = (big - br.extent()) / 2;
    for (Index c = 0; c < channels; ++c)
      for (Index i = 0; i < br.kernel; ++i)
        for (Index j = 0; j < br.kernel; ++j)
          dense(c, 0, off + i * br.dilation, off + j * br.dilation) += branches[b](c, 0, i, j);
  }
  return dense;
}

template <typename Scalar>
Var<Scalar> merge_dilated_branches(const BlockSpec& spec,
                                   const std::vector<Var<Scalar>>& branches) {
  if (branches.size() == 1 && spec.dilated_branches.size() == 1 &&
      spec.dilated_branches[0].kernel == spec.kernel_size &&
      spec.dilated_branches[0].dilation == 1 && branches[0].shape().h == spec.kernel_size) {
    return branches[0];
  }
  std::vector<Tensor<Scalar>> values;
  values.reserve(branches.size());
  for (const auto& b : branches) values.push_back(b.value());
  Tensor<Scalar> dense = merge_dilated_branches(spec, values);
  return Var<Scalar>::make(std::move(dense), branches, [spec, branches](const Tensor<Scalar>& g) {
    const Index big = spec.kernel_size;
    for (std::size_t b = 0; b < branches.size(); ++b) {
      if (!branches[b].requires_grad()) continue;
      const auto& br = spec.dilated_branches[b];
      const Index off = (big - br.extent()) / 2;
      Tensor<Scalar> gb(branches[b].shape());
      for (Index c = 0; c < gb.shape().n; ++c)
        for (Index i = 0; i < br.kernel; ++i)
          for (Index j = 0; j < br.kernel; ++j)
            gb(c, 0, i, j) = g(c, 0, off + i * br.dilation, off + j * br.dilation);
      branches[b].accumulate_grad(gb);
    }
  });
}

// ---------------------------------------------------------------------------
// Blocks

template <typename Scalar>
struct BlockParams {
  std::vector<Var<Scalar>> branch_kernels;  // one (C,1,k,k) per dilated branch
  Var<Scalar> dw_bias;
  Var<Scalar> norm_weight, norm_bias;
  Var<Scalar> pw1_weight, pw1_bias;  // C -> expansion*C
  GRNParams<Scalar> grn;
  Var<Scalar> pw2_weight, pw2_bias;  // expansion*C -> C

  static BlockParams init(const BlockSpec& spec, ParamInit& init) {
    spec.validate();
    const Index c = spec.channels, hidden = spec.expansion * spec.channels;
    BlockParams p;
    for (const auto& br : spec.dilated_branches)
      p.branch_kernels.push_back(
          init.uniform_param<Scalar>({c, 1, br.kernel, br.kernel}, br.kernel * br.kernel));
    p.dw_bias = init.uniform_param<Scalar>({1, c, 1, 1}, spec.kernel_size * spec.kernel_size);
    p.norm_weight = ParamInit::constant_param<Scalar>({1, c, 1, 1}, Scalar(1));
    p.norm_bias = ParamInit::constant_param<Scalar>({1, c, 1, 1}, Scalar(0));
    p.pw1_weight = init.uniform_param<Scalar>({hidden, c, 1, 1}, c);
    p.pw1_bias = init.uniform_param<Scalar>({1, hidden, 1, 1}, c);
    p.grn = GRNParams<Scalar>::zeros(hidden);
    p.pw2_weight = init.uniform_param<Scalar>({c, hidden, 1, 1}, hidden);
    p.pw2_bias = init.uniform_param<Scalar>({1, c, 1, 1}, hidden);
    return p;
  }

  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
    for (std::size_t i = 0; i < branch_kernels.size(); ++i)
      f(prefix + ".dw.branch" + std::to_string(i), branch_kernels[i]);
    f(prefix + ".dw.bias", dw_bias);
    f(prefix + ".norm.weight", norm_weight);
    f(prefix + ".norm.bias", norm_bias);
    f(prefix + ".pw1.weight", pw1_weight);
    f(prefix + ".pw1.bias", pw1_bias);
    f(prefix + ".grn.gamma", grn.gamma);
    f(prefix + ".grn.beta", grn.beta);
    f(prefix + ".pw2.weight", pw2_weight);
    f(prefix + ".pw2.bias", pw2_bias);
  }
};

// Sum of every branch convolved separately (the training-time form).
template <typename Scalar>
Var<Scalar> depthwise_branches(const Var<Scalar>& x, const BlockSpec& spec,
                               const std::vector<Var<Scalar>>& branches,
                               const Var<Scalar>& bias) {
  Var<Scalar> acc = depthwise_conv2d(x, branches[0], bias, spec.dilated_branches[0].dilation);
  for (std::size_t b = 1; b < branches.size(); ++b)
    acc = add(acc, depthwise_conv2d(x, branches[b], Var<Scalar>(),
                                    spec.dilated_branches[b].dilation));
  return acc;
}

// Depthwise conv -> channel LayerNorm -> 1x1 expand -> GELU -> GRN -> 1x1 project -> residual.
// The depthwise stage runs on the merged dense kernel; gradients reach each branch.
template <typename Scalar>
Var<Scalar> block_forward(const Var<Scalar>& x, const BlockSpec& spec,
                          const BlockParams<Scalar>& p) {
  if (x.shape().c != spec.channels)
    throw ConfigError("block expects " + std::to_string(spec.channels) + " channels, got " +
                      std::to_string(x.shape().c));
  Var<Scalar> kernel = merge_dilated_branches(spec, p.branch_kernels);
  Var<Scalar> y = depthwise_conv2d(x, kernel, p.dw_bias);
  y = layer_norm_channels(y, p.norm_weight, p.norm_bias);
  y = pointwise(y, p.pw1_weight, p.pw1_bias);
  y = gelu(y);
  y = grn(y, p.grn);
  y = pointwise(y, p.pw2_weight, p.pw2_bias);
  return add(x, y);
}

template <typename Scalar>
Var<Scalar> lark_block_forward(const Var<Scalar>& x, const BlockSpec& spec,
                               const BlockParams<Scalar>& p) {
  if (spec.kind != BlockKind::LarK) throw ConfigError("lark_block_forward on a SmaK spec");
  return block_forward(x, spec, p);
}

template <typename Scalar>
Var<Scalar> smak_block_forward(const Var<Scalar>& x, const BlockSpec& spec,
                               const BlockParams<Scalar>& p) {
  if (spec.kind != BlockKind::SmaK) throw ConfigError("smak_block_forward on a LarK spec");
  return block_forward(x, spec, p);
}

// ---------------------------------------------------------------------------
// Encoder / bottleneck / decoder

// Dense conv followed by channel LayerNorm.
template <typename Scalar>
struct ConvNorm {
  Var<Scalar> weight, bias, norm_weight, norm_bias;
  Index stride = 1;
  Index pad = 0;

  static ConvNorm init(Index cin, Index cout, Index k, Index stride, ParamInit& init) {
    ConvNorm m;
    m.weight = init.uniform_param<Scalar>({cout, cin, k, k}, cin * k * k);
    m.bias = init.uniform_param<Scalar>({1, cout, 1, 1}, cin * k * k);
    m.norm_weight = ParamInit::constant_param<Scalar>({1, cout, 1, 1}, Scalar(1));
    m.norm_bias = ParamInit::constant_param<Scalar>({1, cout, 1, 1}, Scalar(0));
    m.stride = stride;
    m.pad = k / 2;
    return m;
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return layer_norm_channels(conv2d(x, weight, bias, stride, pad), norm_weight, norm_bias);
  }

  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
    f(prefix + ".conv.weight", weight);
    f(prefix + ".conv.bias", bias);
    f(prefix + ".norm.weight", norm_weight);
    f(prefix + ".norm.bias", norm_bias);
  }
};

// 2x transposed-conv upsampling followed by channel LayerNorm.
template <typename Scalar>
struct UpNorm {
  Var<Scalar> weight, bias, norm_weight, norm_bias;

  static UpNorm init(Index cin, Index cout, ParamInit& init) {
    UpNorm m;
    m.weight = init.uniform_param<Scalar>({cin, cout, 2, 2}, cin * 4);
    m.bias = init.uniform_param<Scalar>({1, cout, 1, 1}, cin * 4);
    m.norm_weight = ParamInit::constant_param<Scalar>({1, cout, 1, 1}, Scalar(1));
    m.norm_bias = ParamInit::constant_param<Scalar>({1, cout, 1, 1}, Scalar(0));
    return m;
  }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return layer_norm_channels(conv_transpose2x2(x, weight, bias), norm_weight, norm_bias);
  }

  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
    f(prefix + ".deconv.weight", weight);
    f(prefix + ".deconv.bias", bias);
    f(prefix + ".norm.weight", norm_weight);
    f(prefix + ".norm.bias", norm_bias);
  }
};

template <typename Scalar>
struct Stage {
  std::vector<BlockSpec> specs;
  std::vector<BlockParams<Scalar>> blocks;

  static Stage init(std::vector<BlockSpec> specs, ParamInit& init) {
    Stage s;
    s.specs = std::move(specs);
    for (const auto& spec : s.specs) s.blocks.push_back(BlockParams<Scalar>::init(spec, init));
    return s;
  }

  Var<Scalar> operator()(Var<Scalar> x) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) x = block_forward(x, specs[i], blocks[i]);
    return x;
  }

  void visit(const std::string& prefix, const ParamVisitor<Scalar>& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].visit(prefix + ".block" + std::to_string(i), f);
  }
};

template <typename Scalar>
struct EncoderParams {
  ConvNorm<Scalar> stem1, stem2;
  std::array<ConvNorm<Scalar>, 2> downsample;  // before stages 2 and 3
  std::array<Stage<Scalar>, 3> stages;

  void visit(const ParamVisitor<Scalar>& f) {
    stem1.visit("encoder.stem1", f);
    stem2.visit("encoder.stem2", f);
    for (std::size_t s = 0; s < 3; ++s) {
      if (s > 0) downsample[s - 1].visit("encoder.down" + std::to_string(s + 1), f);
      stages[s].visit("encoder.stage" + std::to_string(s + 1), f);
    }
  }
};

template <typename Scalar>
struct BottleneckParams {
  ConvNorm<Scalar> reduce1a, reduce1b, reduce2;
  Var<Scalar> fuse_weight, fuse_bias, fuse_norm_weight, fuse_norm_bias;
  ConvNorm<Scalar> down;
  Stage<Scalar> blocks;

  void visit(const ParamVisitor<Scalar>& f) {
    reduce1a.visit("bottleneck.reduce1a", f);
    reduce1b.visit("bottleneck.reduce1b", f);
    reduce2.visit("bottleneck.reduce2", f);
    f("bottleneck.fuse.weight", fuse_weight);
    f("bottleneck.fuse.bias", fuse_bias);
    f("bottleneck.fuse.norm.weight", fuse_norm_weight);
    f("bottleneck.fuse.norm.bias", fuse_norm_bias);
    down.visit("bottleneck.down", f);
    blocks.visit("bottleneck", f);
  }
};

template <typename Scalar>
struct DecoderParams {
  std::array<UpNorm<Scalar>, 3> up;         // index k-1 produces level k
  std::array<Stage<Scalar>, 3> stages;      // index k-1 produces level k

  void visit(const ParamVisitor<Scalar>& f) {
    for (int k = 3; k >= 1; --k) {
      up[k - 1].visit("decoder.up" + std::to_string(k), f);
      stages[k - 1].visit("decoder.stage" + std::to_string(k), f);
    }
  }
};

enum class PyramidOrigin { Encoder, Decoder };

template <typename Scalar>
struct FeaturePyramid {
  std::array<Var<Scalar>, 3> levels;
  PyramidOrigin origin = PyramidOrigin::Encoder;

  const Var<Scalar>& operator[](std::size_t k) const { return levels[k]; }
  Var<Scalar>& operator[](std::size_t k) { return levels[k]; }

  FeaturePyramid detach() const {
    FeaturePyramid out = *this;
    for (auto& l : out.levels) l = l.detach();
    return out;
  }
};

template <typename Scalar>
class Model {
 public:
  ModelConfig config;
  EncoderParams<Scalar> encoder;
  BottleneckParams<Scalar> bottleneck;
  DecoderParams<Scalar> decoder;

  static Model init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamInit init(seed);
    Model m;
    m.config = cfg;
    const auto& ch = cfg.stage_channels;
    auto& e = m.encoder;
    e.stem1 = ConvNorm<Scalar>::init(3, ch[0] / 2, 3, 2, init);
    e.stem2 = ConvNorm<Scalar>::init(ch[0] / 2, ch[0], 3, 2, init);
    e.downsample[0] = ConvNorm<Scalar>::init(ch[0], ch[1], 3, 2, init);
    e.downsample[1] = ConvNorm<Scalar>::init(ch[1], ch[2], 3, 2, init);
    for (std::size_t s = 0; s < 3; ++s) e.stages[s] = Stage<Scalar>::init(cfg.stage_blocks(s), init);

    auto& b = m.bottleneck;
    b.reduce1a = ConvNorm<Scalar>::init(ch[0], ch[1], 3, 2, init);
    b.reduce1b = ConvNorm<Scalar>::init(ch[1], ch[2], 3, 2, init);
    b.reduce2 = ConvNorm<Scalar>::init(ch[1], ch[2], 3, 2, init);
    b.fuse_weight = init.uniform_param<Scalar>({ch[2], 3 * ch[2], 1, 1}, 3 * ch[2]);
    b.fuse_bias = init.uniform_param<Scalar>({1, ch[2], 1, 1}, 3 * ch[2]);
    b.fuse_norm_weight = ParamInit::constant_param<Scalar>({1, ch[2], 1, 1}, Scalar(1));
    b.fuse_norm_bias = ParamInit::constant_param<Scalar>({1, ch[2], 1, 1}, Scalar(0));
    b.down = ConvNorm<Scalar>::init(ch[2], m.embedding_channels(), 3, 2, init);
    std::vector<BlockSpec> bspecs;
    for (int i = 0; i < cfg.bottleneck_depth; ++i) {
      bspecs.push_back(BlockSpec::smak(m.embedding_channels()));
      bspecs.back().expansion = cfg.expansion;
    }
    b.blocks = Stage<Scalar>::init(bspecs, init);

    auto& d = m.decoder;
    d.up[2] = UpNorm<Scalar>::init(m.embedding_channels(), ch[2], init);
    d.stages[2] = Stage<Scalar>::init(cfg.stage_blocks(2), init);
    d.up[1] = UpNorm<Scalar>::init(ch[2], ch[1], init);
    d.stages[1] = Stage<Scalar>::init(cfg.stage_blocks(1), init);
    d.up[0] = UpNorm<Scalar>::init(ch[1], ch[0], init);
    d.stages[0] = Stage<Scalar>::init(cfg.stage_blocks(0), init);
    return m;
  }

  Index embedding_channels() const { return config.stage_channels[2]; }

  // Every parameter in a fixed order with a stable dotted name.
  void visit(const ParamVisitor<Scalar>& f) {
    encoder.visit(f);
    bottleneck.visit(f);
    decoder.visit(f);
  }

  void visit_trainable(const ParamVisitor<Scalar>& f) {
    bottleneck.visit(f);
    decoder.visit(f);
  }

  std::vector<Var<Scalar>> trainable_parameters() {
    std::vector<Var<Scalar>> out;
    visit_trainable([&](const std::string&, Var<Scalar>& v) { out.push_back(v); });
    return out;
  }

  void set_encoder_frozen(bool frozen) {
    encoder.visit([&](const std::string&, Var<Scalar>& v) { v.set_requires_grad(!frozen); });
  }

  Index parameter_count() {
    Index n = 0;
    visit([&](const std::string&, Var<Scalar>& v) { n += v.value().size(); });
    return n;
  }
};

inline void validate_images(const Shape& s, const ModelConfig& cfg) {
  if (s.n < 1) throw InputError("image batch is empty");
  if (s.c != 3) throw InputError("images must have 3 channels, got " + std::to_string(s.c));
  if (s.h % 32 != 0 || s.w % 32 != 0)
    throw InputError("image size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " is not divisible by 32");
  if (s.h != cfg.input_h || s.w != cfg.input_w)
    throw InputError("image size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " does not match configured " + std::to_string(cfg.input_h) + "x" +
                     std::to_string(cfg.input_w));
}

// Level k has stride 2^(k+1): 4, 8, 16.
template <typename Scalar>
FeaturePyramid<Scalar> encode(const Var<Scalar>& images, const Model<Scalar>& model) {
  validate_images(images.shape(), model.config);
  const auto& e = model.encoder;
  FeaturePyramid<Scalar> pyr;
  pyr.origin = PyramidOrigin::Encoder;
  Var<Scalar> x = e.stem2(gelu(e.stem1(images)));
  x = e.stages[0](x);
  pyr[0] = x;
  x = e.stages[1](e.downsample[0](x));
  pyr[1] = x;
  x = e.stages[2](e.downsample[1](x));
  pyr[2] = x;
  return pyr;
}

// Reduce levels 1-2 to level 3's grid, concatenate, compress with a 1x1 conv,
// downsample once more, then run the SmaK bottleneck blocks.
template <typename Scalar>
Var<Scalar> bottleneck(const FeaturePyramid<Scalar>& pyr, const Model<Scalar>& model) {
  const auto& b = model.bottleneck;
  const Var<Scalar> l1 = b.reduce1b(gelu(b.reduce1a(pyr[0])));
  const Var<Scalar> l2 = b.reduce2(pyr[1]);
  if (!(l1.shape() == pyr[2].shape()) || !(l2.shape() == pyr[2].shape()))
    throw ContractError("bottleneck: level shapes do not align");
  Var<Scalar> x = concat_channels<Scalar>({l1, l2, pyr[2]});
  x = layer_norm_channels(pointwise(x, b.fuse_weight, b.fuse_bias), b.fuse_norm_weight,
                          b.fuse_norm_bias);
  x = b.down(gelu(x));
  return b.blocks(x);
}

template <typename Scalar>
FeaturePyramid<Scalar> decode(const Var<Scalar>& embedding, const Model<Scalar>& model) {
  const auto& d = model.decoder;
  if (embedding.shape().c != model.embedding_channels())
    throw ContractError("decode: embedding has " + std::to_string(embedding.shape().c) +
                        " channels");
  FeaturePyramid<Scalar> pyr;
  pyr.origin = PyramidOrigin::Decoder;
  Var<Scalar> x = d.stages[2](d.up[2](embedding));
  pyr[2] = x;
  x = d.stages[1](d.up[1](x));
  pyr[1] = x;
  x = d.stages[0](d.up[0](x));
  pyr[0] = x;
  return pyr;
}

}  // namespace minimax
