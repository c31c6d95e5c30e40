#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sinet/ops.hpp"

namespace sinet {

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <class T>
struct NamedBuffer {
  std::string name;
  std::vector<T>* data;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;
template <class T>
using BufferList = std::vector<NamedBuffer<T>>;

template <class T>
Tensor<T> kaiming_uniform(Shape s, long fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return Tensor<T>::rand_uniform(s, rng, -bound, bound).set_requires_grad(true);
}

template <class T>
struct Conv2dLayer {
  ConvSpec spec;
  Tensor<T> weight;
  std::optional<Tensor<T>> bias;

  Conv2dLayer() = default;
  Conv2dLayer(const ConvSpec& sp, Rng& rng) : spec(sp) {
    spec.validate();
    const long icg = sp.in_channels / sp.groups;
    weight = kaiming_uniform<T>({sp.out_channels, icg, sp.kh, sp.kw},
                                icg * sp.kh * sp.kw, rng);
    if (sp.has_bias) {
      bias = Tensor<T>::zeros({1, sp.out_channels, 1, 1});
      bias->set_requires_grad(true);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, spec); }

  void collect_params(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + ".weight", weight});
    if (bias) out.push_back({prefix + ".bias", *bias});
  }
  void collect_buffers(const std::string&, BufferList<T>&) {}

  long macs(long h, long w) const {
    auto [oh, ow] = spec.out_hw(h, w);
    return oh * ow * spec.out_channels * (spec.in_channels / spec.groups) * spec.kh *
           spec.kw;
  }
};

template <class T>
struct BatchNorm2d {
  long channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  Tensor<T> gamma, beta;
  std::vector<T> running_mean, running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(long c)
      : channels(c),
        gamma(Tensor<T>::full({1, c, 1, 1}, T(1))),
        beta(Tensor<T>::zeros({1, c, 1, 1})),
        running_mean(static_cast<size_t>(c), T(0)),
        running_var(static_cast<size_t>(c), T(1)) {
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return batch_norm(x, gamma, beta, &running_mean, &running_var, training, momentum, eps);
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
  void collect_buffers(const std::string& prefix, BufferList<T>& out) {
    out.push_back({prefix + ".running_mean", &running_mean});
    out.push_back({prefix + ".running_var", &running_var});
  }
};

template <class T>
struct PReLULayer {
  Tensor<T> slope;

  PReLULayer() = default;
  explicit PReLULayer(long channels)
      : slope(Tensor<T>::full({1, channels, 1, 1}, T(0.25))) {
    slope.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return prelu(x, slope); }

  void collect_params(const std::string& prefix, ParamList<T>& out) {
    out.push_back({prefix + ".slope", slope});
  }
  void collect_buffers(const std::string&, BufferList<T>&) {}
};

// Conv + BN + PReLU. Stride-2 3x3 for downsampling rows, 1x1 for projections.
template <class T>
struct CbrBlock {
  Conv2dLayer<T> conv;
  BatchNorm2d<T> bn;
  PReLULayer<T> act;

  CbrBlock() = default;
  CbrBlock(int in_c, int out_c, int kernel, int stride, Rng& rng)
      : conv(ConvSpec{.in_channels = in_c,
                      .out_channels = out_c,
                      .kh = kernel,
                      .kw = kernel,
                      .sh = stride,
                      .sw = stride,
                      .ph = (kernel - 1) / 2,
                      .pw = (kernel - 1) / 2},
             rng),
        bn(out_c),
        act(out_c) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return act.forward(bn.forward(conv.forward(x), training));
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) {
    conv.collect_params(prefix + ".conv", out);
    bn.collect_params(prefix + ".bn", out);
    act.collect_params(prefix + ".act", out);
  }
  void collect_buffers(const std::string& prefix, BufferList<T>& out) {
    bn.collect_buffers(prefix + ".bn", out);
  }

  long macs(long h, long w) const { return conv.macs(h, w); }
};

// Global pool -> bottleneck FC pair (as 1x1 convs) -> sigmoid gate.
template <class T>
struct SqueezeExcite {
  long channels = 0;
  Conv2dLayer<T> reduce;
  PReLULayer<T> reduce_act;
  Conv2dLayer<T> expand;

  SqueezeExcite() = default;
  SqueezeExcite(long c, int ratio, Rng& rng) : channels(c) {
    const int hidden = std::max(1, static_cast<int>(c) / ratio);
    reduce = Conv2dLayer<T>(ConvSpec{.in_channels = static_cast<int>(c),
                                     .out_channels = hidden,
                                     .has_bias = true},
                            rng);
    reduce_act = PReLULayer<T>(hidden);
    expand = Conv2dLayer<T>(ConvSpec{.in_channels = hidden,
                                     .out_channels = static_cast<int>(c),
                                     .has_bias = true},
                            rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> s = global_avg_pool(x);
    s = reduce.forward(s);
    s = reduce_act.forward(s);
    s = expand.forward(s);
    return mul(x, sigmoid(s));
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) {
    reduce.collect_params(prefix + ".reduce", out);
    reduce_act.collect_params(prefix + ".reduce_act", out);
    expand.collect_params(prefix + ".expand", out);
  }
  void collect_buffers(const std::string&, BufferList<T>&) {}

  long macs(long, long) const {
    return reduce.macs(1, 1) + expand.macs(1, 1);
  }
};

// Stride-2 depthwise separable conv with a squeeze-and-excitation gate on the
// pointwise output.
template <class T>
struct DsConvSe {
  Conv2dLayer<T> dw, pw;
  BatchNorm2d<T> bn1, bn2;
  PReLULayer<T> act1, act2;
  SqueezeExcite<T> se;

  DsConvSe() = default;
  DsConvSe(int in_c, int out_c, Rng& rng, int se_ratio = 4)
      : dw(ConvSpec{.in_channels = in_c,
                    .out_channels = in_c,
                    .kh = 3,
                    .kw = 3,
                    .sh = 2,
                    .sw = 2,
                    .ph = 1,
                    .pw = 1,
                    .groups = in_c},
           rng),
        pw(ConvSpec{.in_channels = in_c, .out_channels = out_c}, rng),
        bn1(in_c),
        bn2(out_c),
        act1(in_c),
        act2(out_c),
        se(out_c, se_ratio, rng) {}

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    Tensor<T> r = act1.forward(bn1.forward(dw.forward(x), training));
    r = bn2.forward(pw.forward(r), training);
    r = se.forward(r);
    return act2.forward(r);
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) {
    dw.collect_params(prefix + ".dw", out);
    bn1.collect_params(prefix + ".bn1", out);
    act1.collect_params(prefix + ".act1", out);
    pw.collect_params(prefix + ".pw", out);
    bn2.collect_params(prefix + ".bn2", out);
    se.collect_params(prefix + ".se", out);
    act2.collect_params(prefix + ".act2", out);
  }
  void collect_buffers(const std::string& prefix, BufferList<T>& out) {
    bn1.collect_buffers(prefix + ".bn1", out);
    bn2.collect_buffers(prefix + ".bn2", out);
  }

  long macs(long h, long w) const {
    auto [oh, ow] = dw.spec.out_hw(h, w);
    return dw.macs(h, w) + pw.macs(oh, ow) + se.macs(oh, ow);
  }
};

struct S2BlockConfig {
  int channels = 0;
  int conv_kernel = 3;   // 3 or 5
  int pool_kernel = 1;   // 0 = plain ds-conv, 1 = identity pooling, 2/4/8 = squeeze
  bool factorized = false;

  void validate() const {
    if (conv_kernel != 3 && conv_kernel != 5) {
      throw ConfigError("s2_block: conv kernel must be 3 or 5, got " +
                        std::to_string(conv_kernel));
    }
    if (pool_kernel != 0 && pool_kernel != 1 && pool_kernel != 2 && pool_kernel != 4 &&
        pool_kernel != 8) {
      throw ConfigError("s2_block: pool kernel must be one of {0,1,2,4,8}, got " +
                        std::to_string(pool_kernel));
    }
  }
};

// One path of an S2-module: average-pool squeeze, depthwise conv, pointwise
// conv, bilinear recovery of the input resolution. pool_kernel 0 drops both
// the squeeze and the recovery (and always uses the plain k x k depthwise
// conv, never the factorized pair).
template <class T>
struct S2Block {
  S2BlockConfig cfg;
  int in_channels = 0, out_channels = 0;
  bool use_factorized = false;
  Conv2dLayer<T> dw, dw_v, dw_h;
  BatchNorm2d<T> bn1, bn2;
  PReLULayer<T> act;
  Conv2dLayer<T> pw;

  S2Block() = default;
  S2Block(int in_c, int out_c, const S2BlockConfig& config, Rng& rng)
      : cfg(config), in_channels(in_c), out_channels(out_c) {
    cfg.validate();
    const int k = cfg.conv_kernel;
    const int pad = (k - 1) / 2;
    use_factorized = cfg.factorized && cfg.pool_kernel != 0;
    if (use_factorized) {
      dw_v = Conv2dLayer<T>(ConvSpec{.in_channels = in_c,
                                     .out_channels = in_c,
                                     .kh = k,
                                     .kw = 1,
                                     .ph = pad,
                                     .pw = 0,
                                     .groups = in_c},
                            rng);
      dw_h = Conv2dLayer<T>(ConvSpec{.in_channels = in_c,
                                     .out_channels = in_c,
                                     .kh = 1,
                                     .kw = k,
                                     .ph = 0,
                                     .pw = pad,
                                     .groups = in_c},
                            rng);
    } else {
      dw = Conv2dLayer<T>(ConvSpec{.in_channels = in_c,
                                   .out_channels = in_c,
                                   .kh = k,
                                   .kw = k,
                                   .ph = pad,
                                   .pw = pad,
                                   .groups = in_c},
                          rng);
    }
    bn1 = BatchNorm2d<T>(in_c);
    act = PReLULayer<T>(in_c);
    pw = Conv2dLayer<T>(ConvSpec{.in_channels = in_c, .out_channels = out_c}, rng);
    bn2 = BatchNorm2d<T>(out_c);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    const long h = x.shape().h, w = x.shape().w;
    Tensor<T> r = x;
    if (cfg.pool_kernel >= 1) r = avg_pool2d(r, cfg.pool_kernel);
    if (use_factorized) {
      r = add(dw_v.forward(r), dw_h.forward(r));
    } else {
      r = dw.forward(r);
    }
    r = act.forward(bn1.forward(r, training));
    r = pw.forward(r);
    if (cfg.pool_kernel >= 1) r = bilinear_upsample(r, h, w);
    return bn2.forward(r, training);
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) {
    if (use_factorized) {
      dw_v.collect_params(prefix + ".dw_v", out);
      dw_h.collect_params(prefix + ".dw_h", out);
    } else {
      dw.collect_params(prefix + ".dw", out);
    }
    bn1.collect_params(prefix + ".bn1", out);
    act.collect_params(prefix + ".act", out);
    pw.collect_params(prefix + ".pw", out);
    bn2.collect_params(prefix + ".bn2", out);
  }
  void collect_buffers(const std::string& prefix, BufferList<T>& out) {
    bn1.collect_buffers(prefix + ".bn1", out);
    bn2.collect_buffers(prefix + ".bn2", out);
  }

  long macs(long h, long w) const {
    long ph = h, pw_ = w;
    if (cfg.pool_kernel >= 1) {
      ph = h / cfg.pool_kernel;
      pw_ = w / cfg.pool_kernel;
    }
    long m = use_factorized ? dw_v.macs(ph, pw_) + dw_h.macs(ph, pw_) : dw.macs(ph, pw_);
    return m + pw.macs(ph, pw_);
  }
};

struct S2ModuleConfig {
  int in_channels = 0, out_channels = 0;
  S2BlockConfig block_a, block_b;
  int groups = 2;
  bool residual = false;
};

// Split-transform-merge bottleneck: grouped pointwise reduction with channel
// shuffle, two S2-blocks over the same reduced map, concat, optional residual,
// BN + PReLU.
template <class T>
struct S2Module {
  S2ModuleConfig cfg;
  Conv2dLayer<T> c1;
  S2Block<T> block_a, block_b;
  BatchNorm2d<T> bn;
  PReLULayer<T> act;

  S2Module() = default;
  S2Module(const S2ModuleConfig& config, Rng& rng) : cfg(config) {
    if (cfg.out_channels % 2 != 0) {
      throw ConfigError("s2_module: out_channels must be even, got " +
                        std::to_string(cfg.out_channels));
    }
    if (cfg.residual && cfg.in_channels != cfg.out_channels) {
      throw ConfigError("s2_module: residual requires matching channel counts (" +
                        std::to_string(cfg.in_channels) + " vs " +
                        std::to_string(cfg.out_channels) + ")");
    }
    const int half = cfg.out_channels / 2;
    c1 = Conv2dLayer<T>(ConvSpec{.in_channels = cfg.in_channels,
                                 .out_channels = half,
                                 .groups = cfg.groups},
                        rng);
    block_a = S2Block<T>(half, half, cfg.block_a, rng);
    block_b = S2Block<T>(half, half, cfg.block_b, rng);
    bn = BatchNorm2d<T>(cfg.out_channels);
    act = PReLULayer<T>(cfg.out_channels);
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    Tensor<T> r = channel_shuffle(c1.forward(x), cfg.groups);
    Tensor<T> merged = concat_channels<T>({block_a.forward(r, training),
                                           block_b.forward(r, training)});
    if (cfg.residual) merged = add(x, merged);
    return act.forward(bn.forward(merged, training));
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) {
    c1.collect_params(prefix + ".c1", out);
    block_a.collect_params(prefix + ".block_a", out);
    block_b.collect_params(prefix + ".block_b", out);
    bn.collect_params(prefix + ".bn", out);
    act.collect_params(prefix + ".act", out);
  }
  void collect_buffers(const std::string& prefix, BufferList<T>& out) {
    block_a.collect_buffers(prefix + ".block_a", out);
    block_b.collect_buffers(prefix + ".block_b", out);
    bn.collect_buffers(prefix + ".bn", out);
  }

  long macs(long h, long w) const {
    return c1.macs(h, w) + block_a.macs(h, w) + block_b.macs(h, w);
  }
};

enum class DecoderKind { IB, ReverseIB, RemoveIB, GAU };

inline std::string decoder_kind_name(DecoderKind k) {
  switch (k) {
    case DecoderKind::IB: return "IB";
    case DecoderKind::ReverseIB: return "ReverseIB";
    case DecoderKind::RemoveIB: return "RemoveIB";
    case DecoderKind::GAU: return "GAU";
  }
  return "?";
}

inline DecoderKind decoder_kind_from_name(const std::string& s) {
  if (s == "IB") return DecoderKind::IB;
  if (s == "ReverseIB") return DecoderKind::ReverseIB;
  if (s == "RemoveIB") return DecoderKind::RemoveIB;
  if (s == "GAU") return DecoderKind::GAU;
  throw ConfigError("unknown decoder kind '" + s + "'");
}

template <class T>
struct ConfidenceMaps {
  Tensor<T> probs;       // softmax over classes
  Tensor<T> confidence;  // per-site max class probability
  Tensor<T> blocking;    // 1 - confidence
};

template <class T>
ConfidenceMaps<T> make_confidence_maps(const Tensor<T>& logits) {
  ConfidenceMaps<T> m;
  m.probs = softmax_channels(logits);
  m.confidence = channel_max(m.probs);
  m.blocking = affine(m.confidence, T(-1), T(1));
  return m;
}

// Fuses upsampled low-resolution logits with a projected high-resolution
// feature map. The kind selects the gate applied to the projection.
template <class T>
struct DecoderStage {
  DecoderKind kind = DecoderKind::IB;
  int num_class = 0;
  CbrBlock<T> proj;
  Conv2dLayer<T> gate_conv;  // GAU only
  BatchNorm2d<T> gate_bn;    // GAU only

  DecoderStage() = default;
  DecoderStage(DecoderKind k, int high_channels, int classes, Rng& rng)
      : kind(k), num_class(classes), proj(high_channels, classes, 1, 1, rng) {
    if (kind == DecoderKind::GAU) {
      gate_conv = Conv2dLayer<T>(ConvSpec{.in_channels = classes, .out_channels = classes},
                                 rng);
      gate_bn = BatchNorm2d<T>(classes);
    }
  }

  Tensor<T> forward(const Tensor<T>& low_logits, const Tensor<T>& high_feat,
                    bool training) {
    const Shape& lo = low_logits.shape();
    const Shape& hi = high_feat.shape();
    if (hi.h != 2 * lo.h || hi.w != 2 * lo.w) {
      throw ConfigError("decode: high-res feature " + hi.str() +
                        " must be exactly 2x the low-res logits " + lo.str());
    }
    Tensor<T> up = bilinear_upsample(low_logits, hi.h, hi.w);
    Tensor<T> projected = proj.forward(high_feat, training);
    switch (kind) {
      case DecoderKind::IB: {
        ConfidenceMaps<T> maps = make_confidence_maps(up);
        return add(up, mul(projected, maps.blocking));
      }
      case DecoderKind::ReverseIB: {
        ConfidenceMaps<T> maps = make_confidence_maps(up);
        return add(up, mul(projected, maps.confidence));
      }
      case DecoderKind::RemoveIB:
        return add(up, projected);
      case DecoderKind::GAU: {
        Tensor<T> gate = global_avg_pool(low_logits);
        gate = sigmoid(gate_bn.forward(gate_conv.forward(gate), training));
        return add(up, mul(projected, gate));
      }
    }
    throw ConfigError("decode: unknown kind");
  }

  void collect_params(const std::string& prefix, ParamList<T>& out) {
    proj.collect_params(prefix + ".proj", out);
    if (kind == DecoderKind::GAU) {
      gate_conv.collect_params(prefix + ".gate_conv", out);
      gate_bn.collect_params(prefix + ".gate_bn", out);
    }
  }
  void collect_buffers(const std::string& prefix, BufferList<T>& out) {
    proj.collect_buffers(prefix + ".proj", out);
    if (kind == DecoderKind::GAU) gate_bn.collect_buffers(prefix + ".gate_bn", out);
  }

  long macs(long high_h, long high_w) const {
    long m = proj.macs(high_h, high_w);
    if (kind == DecoderKind::GAU) m += gate_conv.macs(1, 1);
    return m;
  }
};

}  // namespace sinet
