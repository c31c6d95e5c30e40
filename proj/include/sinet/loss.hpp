#pragma once

#include <cstdint>
#include <vector>

#include "sinet/ops.hpp"

namespace sinet {

// Strictly binary (h, w) mask.
struct BinaryMask {
  long h = 0, w = 0;
  std::vector<uint8_t> v;

  static BinaryMask zeros(long h, long w) {
    return {h, w, std::vector<uint8_t>(static_cast<size_t>(h * w), 0)};
  }
  static BinaryMask from_values(long h, long w, std::vector<uint8_t> values) {
    if (static_cast<long>(values.size()) != h * w) {
      throw DimensionError("mask data length does not match " + std::to_string(h) + "x" +
                           std::to_string(w));
    }
    for (uint8_t x : values) {
      if (x > 1) throw ConfigError("mask is not binary (found value " + std::to_string(x) + ")");
    }
    return {h, w, std::move(values)};
  }

  uint8_t at(long y, long x) const { return v[static_cast<size_t>(y * w + x)]; }
  void set(long y, long x, uint8_t val) { v[static_cast<size_t>(y * w + x)] = val; }
  long count() const {
    long c = 0;
    for (uint8_t x : v) c += x;
    return c;
  }
};

// Square all-ones structuring element; pixels outside the image count as
// background (0) for both operators.
BinaryMask morph_dilate(const BinaryMask& mask, int size);
BinaryMask morph_erode(const BinaryMask& mask, int size);

// dilate(mask) AND NOT erode(mask).
BinaryMask boundary_band(const BinaryMask& mask, int size);

struct LossConfig {
  double lambda = 0.5;
  int structuring_size = 15;

  void validate() const {
    if (structuring_size < 1 || structuring_size % 2 == 0) {
      throw ConfigError("loss: structuring element size must be odd and >= 1, got " +
                        std::to_string(structuring_size));
    }
    if (lambda < 0.0) throw ConfigError("loss: lambda must be >= 0");
  }
};

// Cross-entropy over all pixels plus lambda times cross-entropy restricted to
// the boundary band of each ground-truth mask. Both terms are means over
// their own pixel set (the band term vanishes when every band is empty).
// `bands`, when given, must hold precomputed boundary_band(mask, size) for
// each mask and skips the per-call morphology.
template <class T>
Tensor<T> boundary_weighted_ce(const Tensor<T>& logits, const std::vector<BinaryMask>& gt,
                               const LossConfig& cfg,
                               const std::vector<BinaryMask>* bands = nullptr) {
  cfg.validate();
  const Shape& s = logits.shape();
  if (static_cast<long>(gt.size()) != s.n) {
    throw DimensionError("loss: batch axis is " + std::to_string(s.n) + " but " +
                         std::to_string(gt.size()) + " masks were given");
  }
  if (s.c < 2) throw DimensionError("loss: logits need at least 2 class channels");
  const long plane = s.h * s.w;
  for (const auto& m : gt) {
    if (m.h != s.h || m.w != s.w) {
      throw DimensionError("loss: mask size " + std::to_string(m.h) + "x" +
                           std::to_string(m.w) + " does not match logits " +
                           std::to_string(s.h) + "x" + std::to_string(s.w));
    }
  }
  std::vector<BinaryMask> local_bands;
  const std::vector<BinaryMask>* band_ptr = bands;
  if (!band_ptr) {
    local_bands.reserve(gt.size());
    for (const auto& m : gt) local_bands.push_back(boundary_band(m, cfg.structuring_size));
    band_ptr = &local_bands;
  }
  if (band_ptr->size() != gt.size()) {
    throw DimensionError("loss: band count does not match mask count");
  }

  const T* xp = logits.data().data();
  const long total_px = s.n * plane;
  long band_px = 0;
  for (const auto& b : *band_ptr) band_px += b.count();

  // Per-pixel log-softmax terms, accumulated for both pixel sets.
  double sum_all = 0.0, sum_band = 0.0;
  std::vector<double> logp(static_cast<size_t>(s.c));
  for (long n = 0; n < s.n; ++n) {
    const T* base = xp + n * s.c * plane;
    const BinaryMask& mask = gt[static_cast<size_t>(n)];
    const BinaryMask& band = (*band_ptr)[static_cast<size_t>(n)];
    for (long i = 0; i < plane; ++i) {
      double mx = -1e300;
      for (long c = 0; c < s.c; ++c) {
        mx = std::max(mx, static_cast<double>(base[c * plane + i]));
      }
      double z = 0.0;
      for (long c = 0; c < s.c; ++c) {
        z += std::exp(static_cast<double>(base[c * plane + i]) - mx);
      }
      const double logz = std::log(z) + mx;
      const long y = mask.v[static_cast<size_t>(i)];
      const double nll = logz - static_cast<double>(base[y * plane + i]);
      sum_all += nll;
      if (band.v[static_cast<size_t>(i)]) sum_band += nll;
    }
  }
  double value = sum_all / static_cast<double>(total_px);
  if (band_px > 0) value += cfg.lambda * sum_band / static_cast<double>(band_px);

  Tensor<T> out = Tensor<T>::from_data({1, 1, 1, 1}, {static_cast<T>(value)});
  std::vector<BinaryMask> gt_copy = gt;
  std::vector<BinaryMask> band_copy = *band_ptr;
  detail::attach_backward(out, {logits},
                          [s, plane, total_px, band_px, lambda = cfg.lambda,
                           gt_copy = std::move(gt_copy),
                           band_copy = std::move(band_copy)](auto& node) {
    T* dx = detail::grad_dst<T>(node.parents[0]);
    if (!dx) return;
    const T g = node.grad[0];
    const T* xp = node.parents[0]->value.data();
    const double wa = 1.0 / static_cast<double>(total_px);
    const double wb = band_px > 0 ? lambda / static_cast<double>(band_px) : 0.0;
    std::vector<double> prob(static_cast<size_t>(s.c));
    for (long n = 0; n < s.n; ++n) {
      const T* base = xp + n * s.c * plane;
      T* dbase = dx + n * s.c * plane;
      const BinaryMask& mask = gt_copy[static_cast<size_t>(n)];
      const BinaryMask& band = band_copy[static_cast<size_t>(n)];
      for (long i = 0; i < plane; ++i) {
        double mx = -1e300;
        for (long c = 0; c < s.c; ++c) {
          mx = std::max(mx, static_cast<double>(base[c * plane + i]));
        }
        double z = 0.0;
        for (long c = 0; c < s.c; ++c) {
          prob[static_cast<size_t>(c)] = std::exp(static_cast<double>(base[c * plane + i]) - mx);
          z += prob[static_cast<size_t>(c)];
        }
        const long y = mask.v[static_cast<size_t>(i)];
        const double w = wa + (band.v[static_cast<size_t>(i)] ? wb : 0.0);
        for (long c = 0; c < s.c; ++c) {
          const double p = prob[static_cast<size_t>(c)] / z;
          const double delta = c == y ? 1.0 : 0.0;
          dbase[c * plane + i] += static_cast<T>(g * static_cast<T>((p - delta) * w));
        }
      }
    }
  });
  return out;
}

}  // namespace sinet
