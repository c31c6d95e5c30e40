#include "sinet/metrics.hpp"

namespace sinet {

ConfusionMatrix::ConfusionMatrix(int num_class)
    : num_class_(num_class),
      mat_(static_cast<size_t>(num_class) * static_cast<size_t>(num_class), 0) {
  if (num_class < 2) throw ConfigError("confusion matrix needs at least 2 classes");
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt) {
  if (pred.h != gt.h || pred.w != gt.w) {
    throw DimensionError("confusion matrix: label maps disagree on size");
  }
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const int p = pred.v[i];
    const int g = gt.v[i];
    if (p < 0 || p >= num_class_ || g < 0 || g >= num_class_) {
      throw ConfigError("confusion matrix: label out of range");
    }
    ++mat_[static_cast<size_t>(g) * num_class_ + p];
  }
}

long ConfusionMatrix::at(int gt, int pred) const {
  return mat_[static_cast<size_t>(gt) * num_class_ + pred];
}

long ConfusionMatrix::tp(int c) const { return at(c, c); }

long ConfusionMatrix::fp(int c) const {
  long s = 0;
  for (int g = 0; g < num_class_; ++g) {
    if (g != c) s += at(g, c);
  }
  return s;
}

long ConfusionMatrix::fn(int c) const {
  long s = 0;
  for (int p = 0; p < num_class_; ++p) {
    if (p != c) s += at(c, p);
  }
  return s;
}

long ConfusionMatrix::total() const {
  long s = 0;
  for (long v : mat_) s += v;
  return s;
}

double ConfusionMatrix::miou() const {
  double acc = 0.0;
  for (int c = 0; c < num_class_; ++c) {
    const long denom = tp(c) + fp(c) + fn(c);
    acc += denom == 0 ? 1.0 : static_cast<double>(tp(c)) / static_cast<double>(denom);
  }
  return acc / static_cast<double>(num_class_);
}

double miou(const LabelMap& pred, const LabelMap& gt, int num_class) {
  ConfusionMatrix cm(num_class);
  cm.add(pred, gt);
  return cm.miou();
}

double boundary_f1(const LabelMap& pred, const LabelMap& gt, int size) {
  BinaryMask band = boundary_band(labels_to_mask(gt), size);
  long tp = 0, fp = 0, fn = 0;
  for (long y = 0; y < gt.h; ++y) {
    for (long x = 0; x < gt.w; ++x) {
      if (!band.at(y, x)) continue;
      const bool p = pred.at(y, x) != 0;
      const bool g = gt.at(y, x) != 0;
      if (p && g) ++tp;
      else if (p && !g) ++fp;
      else if (!p && g) ++fn;
    }
  }
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::vector<LabelMap> argmax_labels(const TensorF& logits) {
  const Shape& s = logits.shape();
  const long plane = s.h * s.w;
  const float* xp = logits.data().data();
  std::vector<LabelMap> out;
  out.reserve(static_cast<size_t>(s.n));
  for (long n = 0; n < s.n; ++n) {
    LabelMap m = LabelMap::zeros(s.h, s.w);
    const float* base = xp + n * s.c * plane;
    for (long i = 0; i < plane; ++i) {
      float best = base[i];
      int bc = 0;
      for (long c = 1; c < s.c; ++c) {
        if (base[c * plane + i] > best) {
          best = base[c * plane + i];
          bc = static_cast<int>(c);
        }
      }
      m.v[static_cast<size_t>(i)] = bc;
    }
    out.push_back(std::move(m));
  }
  return out;
}

LabelMap mask_to_labels(const BinaryMask& mask) {
  LabelMap m = LabelMap::zeros(mask.h, mask.w);
  for (size_t i = 0; i < mask.v.size(); ++i) m.v[i] = mask.v[i];
  return m;
}

BinaryMask labels_to_mask(const LabelMap& labels) {
  BinaryMask m = BinaryMask::zeros(labels.h, labels.w);
  for (size_t i = 0; i < labels.v.size(); ++i) {
    m.v[i] = static_cast<uint8_t>(labels.v[i] != 0 ? 1 : 0);
  }
  return m;
}

}  // namespace sinet
