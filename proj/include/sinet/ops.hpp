#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "sinet/tensor.hpp"

namespace sinet {

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int ph = 0, pw = 0;
  int dh = 1, dw = 1;
  int groups = 1;
  bool has_bias = false;

  void validate() const {
    if (in_channels <= 0 || out_channels <= 0) {
      throw ConfigError("conv: channel counts must be positive");
    }
    if (groups <= 0 || in_channels % groups != 0 || out_channels % groups != 0) {
      throw ConfigError("conv: groups=" + std::to_string(groups) +
                        " must divide in_channels=" + std::to_string(in_channels) +
                        " and out_channels=" + std::to_string(out_channels));
    }
    if (kh < 1 || kw < 1 || sh < 1 || sw < 1 || dh < 1 || dw < 1 || ph < 0 || pw < 0) {
      throw ConfigError("conv: kernel/stride/dilation must be >= 1, padding >= 0");
    }
  }

  std::pair<long, long> out_hw(long h, long w) const {
    long oh = (h + 2L * ph - static_cast<long>(dh) * (kh - 1) - 1) / sh + 1;
    long ow = (w + 2L * pw - static_cast<long>(dw) * (kw - 1) - 1) / sw + 1;
    if (oh < 1 || ow < 1) {
      throw ConfigError("conv: zero-size output for input " + std::to_string(h) + "x" +
                        std::to_string(w) + " with kernel " + std::to_string(kh) + "x" +
                        std::to_string(kw));
    }
    return {oh, ow};
  }
};

namespace detail {

constexpr long kPwTile = 256;

template <class T>
void conv2d_forward_kernel(const T* x, const T* w, const T* bias, T* y, long N, long C,
                           long H, long W, long OC, long OH, long OW, const ConvSpec& s) {
  const long G = s.groups;
  const long ICG = C / G;
  const long OCG = OC / G;
  const long KHW = static_cast<long>(s.kh) * s.kw;
  const bool pointwise = s.kh == 1 && s.kw == 1 && s.sh == 1 && s.sw == 1 && s.ph == 0 &&
                         s.pw == 0 && s.dh == 1 && s.dw == 1;
  if (pointwise) {
    const long plane = H * W;
    double tile[kPwTile];
    for (long n = 0; n < N; ++n) {
      for (long g = 0; g < G; ++g) {
        for (long ocl = 0; ocl < OCG; ++ocl) {
          const long oc = g * OCG + ocl;
          const T* wrow = w + oc * ICG;
          T* yp = y + (n * OC + oc) * plane;
          const double b = bias ? static_cast<double>(bias[oc]) : 0.0;
          for (long off = 0; off < plane; off += kPwTile) {
            const long len = std::min(kPwTile, plane - off);
            for (long i = 0; i < len; ++i) tile[i] = b;
            for (long icl = 0; icl < ICG; ++icl) {
              const double wv = static_cast<double>(wrow[icl]);
              const T* xp = x + (n * C + g * ICG + icl) * plane + off;
              for (long i = 0; i < len; ++i) tile[i] += wv * static_cast<double>(xp[i]);
            }
            for (long i = 0; i < len; ++i) yp[off + i] = static_cast<T>(tile[i]);
          }
        }
      }
    }
    return;
  }
  for (long n = 0; n < N; ++n) {
    for (long g = 0; g < G; ++g) {
      for (long ocl = 0; ocl < OCG; ++ocl) {
        const long oc = g * OCG + ocl;
        const T* wbase = w + oc * ICG * KHW;
        T* yp = y + (n * OC + oc) * OH * OW;
        const double b = bias ? static_cast<double>(bias[oc]) : 0.0;
        for (long oy = 0; oy < OH; ++oy) {
          const long iy0 = oy * s.sh - s.ph;
          for (long ox = 0; ox < OW; ++ox) {
            const long ix0 = ox * s.sw - s.pw;
            double acc = b;
            for (long icl = 0; icl < ICG; ++icl) {
              const T* xplane = x + (n * C + g * ICG + icl) * H * W;
              const T* wrow = wbase + icl * KHW;
              for (long ky = 0; ky < s.kh; ++ky) {
                const long iy = iy0 + ky * s.dh;
                if (iy < 0 || iy >= H) continue;
                for (long kx = 0; kx < s.kw; ++kx) {
                  const long ix = ix0 + kx * s.dw;
                  if (ix < 0 || ix >= W) continue;
                  acc += static_cast<double>(xplane[iy * W + ix]) *
                         static_cast<double>(wrow[ky * s.kw + kx]);
                }
              }
            }
            yp[oy * OW + ox] = static_cast<T>(acc);
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_kernel(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db,
                            long N, long C, long H, long W, long OC, long OH, long OW,
                            const ConvSpec& s) {
  const long G = s.groups;
  const long ICG = C / G;
  const long OCG = OC / G;
  const long KHW = static_cast<long>(s.kh) * s.kw;
  const long plane = H * W;
  const long oplane = OH * OW;
  if (db) {
    for (long oc = 0; oc < OC; ++oc) {
      double acc = 0.0;
      for (long n = 0; n < N; ++n) {
        const T* dyp = dy + (n * OC + oc) * oplane;
        for (long i = 0; i < oplane; ++i) acc += static_cast<double>(dyp[i]);
      }
      db[oc] += static_cast<T>(acc);
    }
  }
  const bool pointwise = s.kh == 1 && s.kw == 1 && s.sh == 1 && s.sw == 1 && s.ph == 0 &&
                         s.pw == 0 && s.dh == 1 && s.dw == 1;
  if (pointwise) {
    if (dw) {
      for (long g = 0; g < G; ++g) {
        for (long ocl = 0; ocl < OCG; ++ocl) {
          const long oc = g * OCG + ocl;
          for (long icl = 0; icl < ICG; ++icl) {
            const long ic = g * ICG + icl;
            double acc = 0.0;
            for (long n = 0; n < N; ++n) {
              const T* dyp = dy + (n * OC + oc) * plane;
              const T* xp = x + (n * C + ic) * plane;
              for (long i = 0; i < plane; ++i) {
                acc += static_cast<double>(dyp[i]) * static_cast<double>(xp[i]);
              }
            }
            dw[oc * ICG + icl] += static_cast<T>(acc);
          }
        }
      }
    }
    if (dx) {
      for (long n = 0; n < N; ++n) {
        for (long g = 0; g < G; ++g) {
          for (long ocl = 0; ocl < OCG; ++ocl) {
            const long oc = g * OCG + ocl;
            const T* dyp = dy + (n * OC + oc) * plane;
            for (long icl = 0; icl < ICG; ++icl) {
              const T wv = w[oc * ICG + icl];
              T* dxp = dx + (n * C + g * ICG + icl) * plane;
              for (long i = 0; i < plane; ++i) dxp[i] += wv * dyp[i];
            }
          }
        }
      }
    }
    return;
  }
  if (dw) {
    for (long g = 0; g < G; ++g) {
      for (long ocl = 0; ocl < OCG; ++ocl) {
        const long oc = g * OCG + ocl;
        for (long icl = 0; icl < ICG; ++icl) {
          const long ic = g * ICG + icl;
          for (long ky = 0; ky < s.kh; ++ky) {
            for (long kx = 0; kx < s.kw; ++kx) {
              double acc = 0.0;
              for (long n = 0; n < N; ++n) {
                const T* dyp = dy + (n * OC + oc) * oplane;
                const T* xplane = x + (n * C + ic) * plane;
                for (long oy = 0; oy < OH; ++oy) {
                  const long iy = oy * s.sh - s.ph + ky * s.dh;
                  if (iy < 0 || iy >= H) continue;
                  for (long ox = 0; ox < OW; ++ox) {
                    const long ix = ox * s.sw - s.pw + kx * s.dw;
                    if (ix < 0 || ix >= W) continue;
                    acc += static_cast<double>(dyp[oy * OW + ox]) *
                           static_cast<double>(xplane[iy * W + ix]);
                  }
                }
              }
              dw[(oc * ICG + icl) * KHW + ky * s.kw + kx] += static_cast<T>(acc);
            }
          }
        }
      }
    }
  }
  if (dx) {
    for (long n = 0; n < N; ++n) {
      for (long g = 0; g < G; ++g) {
        for (long ocl = 0; ocl < OCG; ++ocl) {
          const long oc = g * OCG + ocl;
          const T* dyp = dy + (n * OC + oc) * oplane;
          const T* wbase = w + oc * ICG * KHW;
          for (long oy = 0; oy < OH; ++oy) {
            const long iy0 = oy * s.sh - s.ph;
            for (long ox = 0; ox < OW; ++ox) {
              const T gv = dyp[oy * OW + ox];
              if (gv == T(0)) continue;
              const long ix0 = ox * s.sw - s.pw;
              for (long icl = 0; icl < ICG; ++icl) {
                T* dxplane = dx + (n * C + g * ICG + icl) * plane;
                const T* wrow = wbase + icl * KHW;
                for (long ky = 0; ky < s.kh; ++ky) {
                  const long iy = iy0 + ky * s.dh;
                  if (iy < 0 || iy >= H) continue;
                  for (long kx = 0; kx < s.kw; ++kx) {
                    const long ix = ix0 + kx * s.dw;
                    if (ix < 0 || ix >= W) continue;
                    dxplane[iy * W + ix] += gv * wrow[ky * s.kw + kx];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias, const ConvSpec& spec) {
  spec.validate();
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.c != spec.in_channels) {
    throw DimensionError("conv2d: input channel axis is " + std::to_string(xs.c) +
                         ", spec expects " + std::to_string(spec.in_channels));
  }
  const long icg = spec.in_channels / spec.groups;
  if (ws.n != spec.out_channels || ws.c != icg || ws.h != spec.kh || ws.w != spec.kw) {
    throw DimensionError(
        "conv2d: weight shape " + ws.str() + " does not match expected (" +
        std::to_string(spec.out_channels) + "," + std::to_string(icg) + "," +
        std::to_string(spec.kh) + "," + std::to_string(spec.kw) + ")");
  }
  if (spec.has_bias) {
    if (!bias) throw DimensionError("conv2d: spec declares bias but none was given");
    if (bias->numel() != spec.out_channels) {
      throw DimensionError("conv2d: bias axis has " + std::to_string(bias->numel()) +
                           " entries, expected " + std::to_string(spec.out_channels));
    }
  } else if (bias) {
    throw ConfigError("conv2d: bias given but spec.has_bias is false");
  }
  auto [oh, ow] = spec.out_hw(xs.h, xs.w);
  Tensor<T> out = Tensor<T>::zeros({xs.n, spec.out_channels, oh, ow});
  detail::conv2d_forward_kernel(x.data().data(), weight.data().data(),
                                bias ? bias->data().data() : nullptr, out.mut_data().data(),
                                xs.n, xs.c, xs.h, xs.w, spec.out_channels, oh, ow, spec);
  SINET_DCHECK_FINITE(out, "conv2d");

  std::vector<Tensor<T>> inputs = {x, weight};
  if (bias) inputs.push_back(*bias);
  ConvSpec s = spec;
  Shape in_shape = xs;
  detail::attach_backward(out, inputs, [s, in_shape, oh = oh, ow = ow](auto& node) {
    auto& xp = node.parents[0];
    auto& wp = node.parents[1];
    T* dx = detail::grad_dst<T>(xp);
    T* dw = detail::grad_dst<T>(wp);
    T* db = node.parents.size() > 2 ? detail::grad_dst<T>(node.parents[2]) : nullptr;
    detail::conv2d_backward_kernel(xp->value.data(), wp->value.data(), node.grad.data(),
                                   dx, dw, db, in_shape.n, in_shape.c, in_shape.h,
                                   in_shape.w, s.out_channels, oh, ow, s);
  });
  return out;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const ConvSpec& spec) {
  return conv2d(x, weight, std::optional<Tensor<T>>{}, spec);
}

template <class T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int kernel, int stride = 0) {
  if (stride == 0) stride = kernel;
  const Shape& s = x.shape();
  if (kernel < 1 || stride < 1) throw ConfigError("avg_pool2d: kernel/stride must be >= 1");
  if (kernel > s.h || kernel > s.w) {
    throw ConfigError("avg_pool2d: kernel " + std::to_string(kernel) +
                      " exceeds spatial extent " + std::to_string(s.h) + "x" +
                      std::to_string(s.w));
  }
  const long oh = (s.h - kernel) / stride + 1;
  const long ow = (s.w - kernel) / stride + 1;
  Tensor<T> out = Tensor<T>::zeros({s.n, s.c, oh, ow});
  const T* xp = x.data().data();
  T* yp = out.mut_data().data();
  const double inv = 1.0 / (static_cast<double>(kernel) * kernel);
  for (long nc = 0; nc < s.n * s.c; ++nc) {
    const T* xplane = xp + nc * s.h * s.w;
    T* yplane = yp + nc * oh * ow;
    for (long oy = 0; oy < oh; ++oy) {
      for (long ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (long ky = 0; ky < kernel; ++ky) {
          const T* row = xplane + (oy * stride + ky) * s.w + ox * stride;
          for (long kx = 0; kx < kernel; ++kx) acc += static_cast<double>(row[kx]);
        }
        yplane[oy * ow + ox] = static_cast<T>(acc * inv);
      }
    }
  }
  detail::attach_backward(out, {x}, [kernel, stride, s, oh, ow](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    if (!dx) return;
    const T* dyp = node.grad.data();
    const T inv = static_cast<T>(1.0 / (static_cast<double>(kernel) * kernel));
    for (long nc = 0; nc < s.n * s.c; ++nc) {
      const T* dyplane = dyp + nc * oh * ow;
      T* dxplane = dx + nc * s.h * s.w;
      for (long oy = 0; oy < oh; ++oy) {
        for (long ox = 0; ox < ow; ++ox) {
          const T g = dyplane[oy * ow + ox] * inv;
          for (long ky = 0; ky < kernel; ++ky) {
            T* row = dxplane + (oy * stride + ky) * s.w + ox * stride;
            for (long kx = 0; kx < kernel; ++kx) row[kx] += g;
          }
        }
      }
    }
  });
  return out;
}

namespace detail {

// Half-pixel source coordinates: src = (dst + 0.5) * in/out - 0.5, clamped.
struct LerpIndex {
  long i0, i1;
  double frac;
};

inline std::vector<LerpIndex> lerp_axis(long in, long out) {
  std::vector<LerpIndex> v(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (long d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    long i0 = std::min(static_cast<long>(src), in - 1);
    long i1 = std::min(i0 + 1, in - 1);
    v[static_cast<size_t>(d)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return v;
}

}  // namespace detail

template <class T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, long out_h, long out_w) {
  const Shape& s = x.shape();
  if (out_h < 1 || out_w < 1) throw ConfigError("bilinear_upsample: output dims must be >= 1");
  auto ys = detail::lerp_axis(s.h, out_h);
  auto xs = detail::lerp_axis(s.w, out_w);
  Tensor<T> out = Tensor<T>::zeros({s.n, s.c, out_h, out_w});
  const T* xp = x.data().data();
  T* yp = out.mut_data().data();
  for (long nc = 0; nc < s.n * s.c; ++nc) {
    const T* plane = xp + nc * s.h * s.w;
    T* oplane = yp + nc * out_h * out_w;
    for (long oy = 0; oy < out_h; ++oy) {
      const auto& ay = ys[static_cast<size_t>(oy)];
      const T* top = plane + ay.i0 * s.w;
      const T* bot = plane + ay.i1 * s.w;
      for (long ox = 0; ox < out_w; ++ox) {
        const auto& ax = xs[static_cast<size_t>(ox)];
        // Lerp as v0 + f*(v1-v0) so constant inputs reproduce exactly.
        const double t = static_cast<double>(top[ax.i0]) +
                         ax.frac * (static_cast<double>(top[ax.i1]) -
                                    static_cast<double>(top[ax.i0]));
        const double b = static_cast<double>(bot[ax.i0]) +
                         ax.frac * (static_cast<double>(bot[ax.i1]) -
                                    static_cast<double>(bot[ax.i0]));
        oplane[oy * out_w + ox] = static_cast<T>(t + ay.frac * (b - t));
      }
    }
  }
  detail::attach_backward(out, {x}, [ys, xs, s, out_h, out_w](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    if (!dx) return;
    const T* dyp = node.grad.data();
    for (long nc = 0; nc < s.n * s.c; ++nc) {
      const T* dyplane = dyp + nc * out_h * out_w;
      T* dxplane = dx + nc * s.h * s.w;
      for (long oy = 0; oy < out_h; ++oy) {
        const auto& ay = ys[static_cast<size_t>(oy)];
        for (long ox = 0; ox < out_w; ++ox) {
          const auto& ax = xs[static_cast<size_t>(ox)];
          const double g = static_cast<double>(dyplane[oy * out_w + ox]);
          const double fy = ay.frac, fx = ax.frac;
          dxplane[ay.i0 * s.w + ax.i0] += static_cast<T>(g * (1.0 - fy) * (1.0 - fx));
          dxplane[ay.i0 * s.w + ax.i1] += static_cast<T>(g * (1.0 - fy) * fx);
          dxplane[ay.i1 * s.w + ax.i0] += static_cast<T>(g * fy * (1.0 - fx));
          dxplane[ay.i1 * s.w + ax.i1] += static_cast<T>(g * fy * fx);
        }
      }
    }
  });
  return out;
}

// Batch normalization over (n, h, w) per channel. gamma/beta are (1,C,1,1)
// tensors; running statistics live outside the autograd graph and are only
// touched in training mode (pass nullptr to skip tracking).
template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::vector<T>* running_mean, std::vector<T>* running_var,
                     bool training, double momentum, double eps) {
  const Shape& s = x.shape();
  if (eps < 0.0) throw ConfigError("batch_norm: eps must be >= 0");
  if (gamma.numel() != s.c || beta.numel() != s.c) {
    throw DimensionError("batch_norm: gamma/beta length must equal channel axis (" +
                         std::to_string(s.c) + ")");
  }
  if (!training) {
    if (!running_mean || !running_var) {
      throw ConfigError("batch_norm: eval mode requires running statistics");
    }
    if (static_cast<long>(running_mean->size()) != s.c ||
        static_cast<long>(running_var->size()) != s.c) {
      throw DimensionError("batch_norm: running stats length must equal channel axis");
    }
  }
  const long plane = s.h * s.w;
  const long per_channel = s.n * plane;
  Tensor<T> out = Tensor<T>::zeros(s);
  const T* xp = x.data().data();
  T* yp = out.mut_data().data();
  std::vector<double> mean(static_cast<size_t>(s.c)), var(static_cast<size_t>(s.c));
  if (training) {
    for (long c = 0; c < s.c; ++c) {
      double m = 0.0;
      for (long n = 0; n < s.n; ++n) {
        const T* p = xp + (n * s.c + c) * plane;
        for (long i = 0; i < plane; ++i) m += static_cast<double>(p[i]);
      }
      m /= static_cast<double>(per_channel);
      double v = 0.0;
      for (long n = 0; n < s.n; ++n) {
        const T* p = xp + (n * s.c + c) * plane;
        for (long i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(per_channel);
      mean[static_cast<size_t>(c)] = m;
      var[static_cast<size_t>(c)] = v;
      if (running_mean && running_var) {
        (*running_mean)[static_cast<size_t>(c)] = static_cast<T>(
            (1.0 - momentum) * static_cast<double>((*running_mean)[static_cast<size_t>(c)]) +
            momentum * m);
        (*running_var)[static_cast<size_t>(c)] = static_cast<T>(
            (1.0 - momentum) * static_cast<double>((*running_var)[static_cast<size_t>(c)]) +
            momentum * v);
      }
    }
  } else {
    for (long c = 0; c < s.c; ++c) {
      mean[static_cast<size_t>(c)] = static_cast<double>((*running_mean)[static_cast<size_t>(c)]);
      var[static_cast<size_t>(c)] = static_cast<double>((*running_var)[static_cast<size_t>(c)]);
    }
  }
  const T* gp = gamma.data().data();
  const T* bp = beta.data().data();
  for (long n = 0; n < s.n; ++n) {
    for (long c = 0; c < s.c; ++c) {
      const double inv_std = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
      const double g = static_cast<double>(gp[c]);
      const double b = static_cast<double>(bp[c]);
      const double m = mean[static_cast<size_t>(c)];
      const T* src = xp + (n * s.c + c) * plane;
      T* dst = yp + (n * s.c + c) * plane;
      for (long i = 0; i < plane; ++i) {
        dst[i] = static_cast<T>(g * ((static_cast<double>(src[i]) - m) * inv_std) + b);
      }
    }
  }
  SINET_DCHECK_FINITE(out, "batch_norm");
  detail::attach_backward(out, {x, gamma, beta},
                          [s, mean, var, eps, training, plane, per_channel](auto& node) {
    auto& xpnode = node.parents[0];
    T* dx = detail::grad_dst<T>(xpnode);
    T* dg = detail::grad_dst<T>(node.parents[1]);
    T* db = detail::grad_dst<T>(node.parents[2]);
    const T* xp = xpnode->value.data();
    const T* gp = node.parents[1]->value.data();
    const T* dyp = node.grad.data();
    for (long c = 0; c < s.c; ++c) {
      const double m = mean[static_cast<size_t>(c)];
      const double inv_std = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (long n = 0; n < s.n; ++n) {
        const T* xr = xp + (n * s.c + c) * plane;
        const T* dyr = dyp + (n * s.c + c) * plane;
        for (long i = 0; i < plane; ++i) {
          const double xhat = (static_cast<double>(xr[i]) - m) * inv_std;
          sum_dy += static_cast<double>(dyr[i]);
          sum_dy_xhat += static_cast<double>(dyr[i]) * xhat;
        }
      }
      if (dg) dg[c] += static_cast<T>(sum_dy_xhat);
      if (db) db[c] += static_cast<T>(sum_dy);
      if (dx) {
        const double g = static_cast<double>(gp[c]);
        const double mean_dy = sum_dy / static_cast<double>(per_channel);
        const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(per_channel);
        for (long n = 0; n < s.n; ++n) {
          const T* xr = xp + (n * s.c + c) * plane;
          const T* dyr = dyp + (n * s.c + c) * plane;
          T* dxr = dx + (n * s.c + c) * plane;
          for (long i = 0; i < plane; ++i) {
            const double xhat = (static_cast<double>(xr[i]) - m) * inv_std;
            double v = training
                           ? (static_cast<double>(dyr[i]) - mean_dy - xhat * mean_dy_xhat)
                           : static_cast<double>(dyr[i]);
            dxr[i] += static_cast<T>(g * inv_std * v);
          }
        }
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope) {
  const Shape& s = x.shape();
  if (slope.numel() != s.c) {
    throw DimensionError("prelu: slope length " + std::to_string(slope.numel()) +
                         " must equal channel axis " + std::to_string(s.c));
  }
  Tensor<T> out = Tensor<T>::zeros(s);
  const T* xp = x.data().data();
  const T* ap = slope.data().data();
  T* yp = out.mut_data().data();
  const long plane = s.h * s.w;
  for (long n = 0; n < s.n; ++n) {
    for (long c = 0; c < s.c; ++c) {
      const T a = ap[c];
      const T* src = xp + (n * s.c + c) * plane;
      T* dst = yp + (n * s.c + c) * plane;
      for (long i = 0; i < plane; ++i) dst[i] = src[i] >= T(0) ? src[i] : a * src[i];
    }
  }
  detail::attach_backward(out, {x, slope}, [s, plane](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    T* da = detail::grad_dst<T>(node.parents[1]);
    const T* xp = node.parents[0]->value.data();
    const T* ap = node.parents[1]->value.data();
    const T* dyp = node.grad.data();
    for (long n = 0; n < s.n; ++n) {
      for (long c = 0; c < s.c; ++c) {
        const T a = ap[c];
        const T* xr = xp + (n * s.c + c) * plane;
        const T* dyr = dyp + (n * s.c + c) * plane;
        T* dxr = dx ? dx + (n * s.c + c) * plane : nullptr;
        double acc = 0.0;
        for (long i = 0; i < plane; ++i) {
          if (xr[i] >= T(0)) {
            if (dxr) dxr[i] += dyr[i];
          } else {
            if (dxr) dxr[i] += a * dyr[i];
            acc += static_cast<double>(dyr[i]) * static_cast<double>(xr[i]);
          }
        }
        if (da) da[c] += static_cast<T>(acc);
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xp = x.data().data();
  T* yp = out.mut_data().data();
  const long n = x.numel();
  for (long i = 0; i < n; ++i) {
    yp[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(xp[i]))));
  }
  detail::attach_backward(out, {x}, [n](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    if (!dx) return;
    const T* y = node.value.data();
    const T* dy = node.grad.data();
    for (long i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
  });
  return out;
}

// Softmax across the channel axis, independently at every (n, h, w) site.
template <class T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> out = Tensor<T>::zeros(s);
  const T* xp = x.data().data();
  T* yp = out.mut_data().data();
  const long plane = s.h * s.w;
  for (long n = 0; n < s.n; ++n) {
    const T* base = xp + n * s.c * plane;
    T* obase = yp + n * s.c * plane;
    for (long i = 0; i < plane; ++i) {
      double mx = -1e300;
      for (long c = 0; c < s.c; ++c) {
        mx = std::max(mx, static_cast<double>(base[c * plane + i]));
      }
      double sum = 0.0;
      for (long c = 0; c < s.c; ++c) {
        const double e = std::exp(static_cast<double>(base[c * plane + i]) - mx);
        obase[c * plane + i] = static_cast<T>(e);
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (long c = 0; c < s.c; ++c) {
        obase[c * plane + i] = static_cast<T>(static_cast<double>(obase[c * plane + i]) * inv);
      }
    }
  }
  detail::attach_backward(out, {x}, [s, plane](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    if (!dx) return;
    const T* y = node.value.data();
    const T* dy = node.grad.data();
    for (long n = 0; n < s.n; ++n) {
      const T* ybase = y + n * s.c * plane;
      const T* dybase = dy + n * s.c * plane;
      T* dxbase = dx + n * s.c * plane;
      for (long i = 0; i < plane; ++i) {
        double dot = 0.0;
        for (long c = 0; c < s.c; ++c) {
          dot += static_cast<double>(dybase[c * plane + i]) *
                 static_cast<double>(ybase[c * plane + i]);
        }
        for (long c = 0; c < s.c; ++c) {
          dxbase[c * plane + i] += static_cast<T>(
              static_cast<double>(ybase[c * plane + i]) *
              (static_cast<double>(dybase[c * plane + i]) - dot));
        }
      }
    }
  });
  return out;
}

// Interleaves channel groups: input channel g*(C/G)+i lands at i*G+g.
template <class T>
Tensor<T> channel_shuffle(const Tensor<T>& x, int groups) {
  const Shape& s = x.shape();
  if (groups < 1 || s.c % groups != 0) {
    throw ConfigError("channel_shuffle: channels " + std::to_string(s.c) +
                      " not divisible by groups " + std::to_string(groups));
  }
  Tensor<T> out = Tensor<T>::zeros(s);
  const long cpg = s.c / groups;
  const long plane = s.h * s.w;
  const T* xp = x.data().data();
  T* yp = out.mut_data().data();
  for (long n = 0; n < s.n; ++n) {
    for (long g = 0; g < groups; ++g) {
      for (long i = 0; i < cpg; ++i) {
        const long src = g * cpg + i;
        const long dst = i * groups + g;
        std::copy_n(xp + (n * s.c + src) * plane, plane, yp + (n * s.c + dst) * plane);
      }
    }
  }
  detail::attach_backward(out, {x}, [s, groups, cpg, plane](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    if (!dx) return;
    const T* dy = node.grad.data();
    for (long n = 0; n < s.n; ++n) {
      for (long g = 0; g < groups; ++g) {
        for (long i = 0; i < cpg; ++i) {
          const long src = g * cpg + i;
          const long dst = i * groups + g;
          const T* dyr = dy + (n * s.c + dst) * plane;
          T* dxr = dx + (n * s.c + src) * plane;
          for (long k = 0; k < plane; ++k) dxr[k] += dyr[k];
        }
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> out = Tensor<T>::zeros({s.n, s.c, 1, 1});
  const long plane = s.h * s.w;
  const T* xp = x.data().data();
  T* yp = out.mut_data().data();
  for (long nc = 0; nc < s.n * s.c; ++nc) {
    double acc = 0.0;
    const T* p = xp + nc * plane;
    for (long i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
    yp[nc] = static_cast<T>(acc / static_cast<double>(plane));
  }
  detail::attach_backward(out, {x}, [s, plane](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    if (!dx) return;
    const T* dy = node.grad.data();
    for (long nc = 0; nc < s.n * s.c; ++nc) {
      const T g = static_cast<T>(static_cast<double>(dy[nc]) / static_cast<double>(plane));
      T* p = dx + nc * plane;
      for (long i = 0; i < plane; ++i) p[i] += g;
    }
  });
  return out;
}

// Per-site maximum over channels, (n,c,h,w) -> (n,1,h,w). The gradient is
// routed to the argmax channel.
template <class T>
Tensor<T> channel_max(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> out = Tensor<T>::zeros({s.n, 1, s.h, s.w});
  const long plane = s.h * s.w;
  const T* xp = x.data().data();
  T* yp = out.mut_data().data();
  std::vector<int> argmax(static_cast<size_t>(s.n * plane), 0);
  for (long n = 0; n < s.n; ++n) {
    const T* base = xp + n * s.c * plane;
    T* obase = yp + n * plane;
    for (long i = 0; i < plane; ++i) {
      T best = base[i];
      int bc = 0;
      for (long c = 1; c < s.c; ++c) {
        const T v = base[c * plane + i];
        if (v > best) {
          best = v;
          bc = static_cast<int>(c);
        }
      }
      obase[i] = best;
      argmax[static_cast<size_t>(n * plane + i)] = bc;
    }
  }
  detail::attach_backward(out, {x}, [s, plane, argmax = std::move(argmax)](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    if (!dx) return;
    const T* dy = node.grad.data();
    for (long n = 0; n < s.n; ++n) {
      for (long i = 0; i < plane; ++i) {
        const int c = argmax[static_cast<size_t>(n * plane + i)];
        dx[(n * s.c + c) * plane + i] += dy[n * plane + i];
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  T* yp = out.mut_data().data();
  const long n = a.numel();
  for (long i = 0; i < n; ++i) yp[i] = ap[i] + bp[i];
  detail::attach_backward(out, {a, b}, [n](auto& node) {
    const T* dy = node.grad.data();
    if (T* da = detail::grad_dst<T>(node.parents[0])) {
      for (long i = 0; i < n; ++i) da[i] += dy[i];
    }
    if (T* db = detail::grad_dst<T>(node.parents[1])) {
      for (long i = 0; i < n; ++i) db[i] += dy[i];
    }
  });
  return out;
}

namespace detail {

inline long bcast_index(const Shape& s, long n, long c, long h, long w) {
  const long nn = s.n == 1 ? 0 : n;
  const long cc = s.c == 1 ? 0 : c;
  const long hh = s.h == 1 ? 0 : h;
  const long ww = s.w == 1 ? 0 : w;
  return ((nn * s.c + cc) * s.h + hh) * s.w + ww;
}

inline bool bcast_compatible(const Shape& big, const Shape& small) {
  auto ok = [](long a, long b) { return a == b || b == 1; };
  return ok(big.n, small.n) && ok(big.c, small.c) && ok(big.h, small.h) && ok(big.w, small.w);
}

}  // namespace detail

// Elementwise product; `b` may have size-1 axes that broadcast against `a`
// (per-channel gates (n,c,1,1), per-site maps (n,1,h,w)).
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (!detail::bcast_compatible(sa, sb)) {
    throw DimensionError("mul: shape " + sb.str() + " does not broadcast to " + sa.str());
  }
  Tensor<T> out = Tensor<T>::zeros(sa);
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  T* yp = out.mut_data().data();
  for (long n = 0; n < sa.n; ++n) {
    for (long c = 0; c < sa.c; ++c) {
      for (long h = 0; h < sa.h; ++h) {
        for (long w = 0; w < sa.w; ++w) {
          const long ia = ((n * sa.c + c) * sa.h + h) * sa.w + w;
          yp[ia] = ap[ia] * bp[detail::bcast_index(sb, n, c, h, w)];
        }
      }
    }
  }
  detail::attach_backward(out, {a, b}, [sa, sb](auto& node) {
    T* da = detail::grad_dst<T>(node.parents[0]);
    T* db = detail::grad_dst<T>(node.parents[1]);
    const T* av = node.parents[0]->value.data();
    const T* bv = node.parents[1]->value.data();
    const T* dy = node.grad.data();
    for (long n = 0; n < sa.n; ++n) {
      for (long c = 0; c < sa.c; ++c) {
        for (long h = 0; h < sa.h; ++h) {
          for (long w = 0; w < sa.w; ++w) {
            const long ia = ((n * sa.c + c) * sa.h + h) * sa.w + w;
            const long ib = detail::bcast_index(sb, n, c, h, w);
            if (da) da[ia] += dy[ia] * bv[ib];
            if (db) db[ib] += dy[ia] * av[ia];
          }
        }
      }
    }
  });
  return out;
}

// y = scale * x + shift.
template <class T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xp = x.data().data();
  T* yp = out.mut_data().data();
  const long n = x.numel();
  for (long i = 0; i < n; ++i) yp[i] = scale * xp[i] + shift;
  detail::attach_backward(out, {x}, [n, scale](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    if (!dx) return;
    const T* dy = node.grad.data();
    for (long i = 0; i < n; ++i) dx[i] += scale * dy[i];
  });
  return out;
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ConfigError("concat_channels: empty input list");
  const Shape& s0 = xs.front().shape();
  long total_c = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw DimensionError("concat_channels: spatial/batch mismatch " + s.str() + " vs " +
                           s0.str());
    }
    total_c += s.c;
  }
  Tensor<T> out = Tensor<T>::zeros({s0.n, total_c, s0.h, s0.w});
  const long plane = s0.h * s0.w;
  T* yp = out.mut_data().data();
  std::vector<long> offsets;
  long coff = 0;
  for (const auto& t : xs) {
    offsets.push_back(coff);
    const T* xp = t.data().data();
    const long tc = t.shape().c;
    for (long n = 0; n < s0.n; ++n) {
      std::copy_n(xp + n * tc * plane, tc * plane, yp + (n * total_c + coff) * plane);
    }
    coff += tc;
  }
  detail::attach_backward(out, xs, [s0, total_c, plane, offsets](auto& node) {
    const T* dy = node.grad.data();
    for (size_t pi = 0; pi < node.parents.size(); ++pi) {
      T* dx = detail::grad_dst<T>(node.parents[pi]);
      if (!dx) continue;
      const long tc = node.parents[pi]->shape.c;
      const long coff = offsets[pi];
      for (long n = 0; n < s0.n; ++n) {
        const T* src = dy + (n * total_c + coff) * plane;
        T* dst = dx + n * tc * plane;
        for (long i = 0; i < tc * plane; ++i) dst[i] += src[i];
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros({1, 1, 1, 1});
  double acc = 0.0;
  for (T v : x.data()) acc += static_cast<double>(v);
  out.mut_data()[0] = static_cast<T>(acc);
  const long n = x.numel();
  detail::attach_backward(out, {x}, [n](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    if (!dx) return;
    const T g = node.grad[0];
    for (long i = 0; i < n; ++i) dx[i] += g;
  });
  return out;
}

}  // namespace sinet
