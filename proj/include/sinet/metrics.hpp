#pragma once

#include <vector>

#include "sinet/loss.hpp"
#include "sinet/tensor.hpp"

namespace sinet {

struct LabelMap {
  long h = 0, w = 0;
  std::vector<int> v;

  static LabelMap zeros(long h, long w) {
    return {h, w, std::vector<int>(static_cast<size_t>(h * w), 0)};
  }
  int at(long y, long x) const { return v[static_cast<size_t>(y * w + x)]; }
};

// Row-major class-by-class counts: mat[gt * num_class + pred].
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_class);

  void add(const LabelMap& pred, const LabelMap& gt);
  long at(int gt, int pred) const;
  long tp(int c) const;
  long fp(int c) const;
  long fn(int c) const;
  long total() const;
  int num_class() const { return num_class_; }

  // Mean IoU; classes absent from both prediction and ground truth count as
  // IoU = 1.
  double miou() const;

 private:
  int num_class_;
  std::vector<long> mat_;
};

double miou(const LabelMap& pred, const LabelMap& gt, int num_class);

// F1 of the foreground class restricted to boundary_band(gt, size); empty
// denominators count as a perfect score.
double boundary_f1(const LabelMap& pred, const LabelMap& gt, int size = 15);

// Per-sample argmax over the channel axis.
std::vector<LabelMap> argmax_labels(const TensorF& logits);

LabelMap mask_to_labels(const BinaryMask& mask);
BinaryMask labels_to_mask(const LabelMap& labels);

}  // namespace sinet
