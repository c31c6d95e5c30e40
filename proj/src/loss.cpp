#include "sinet/loss.hpp"

namespace sinet {

namespace {

void check_size(int size) {
  if (size < 1 || size % 2 == 0) {
    throw ConfigError("morphology: structuring element size must be odd and >= 1, got " +
                      std::to_string(size));
  }
}

}  // namespace

BinaryMask morph_dilate(const BinaryMask& mask, int size) {
  check_size(size);
  const int half = size / 2;
  BinaryMask out = BinaryMask::zeros(mask.h, mask.w);
  for (long y = 0; y < mask.h; ++y) {
    for (long x = 0; x < mask.w; ++x) {
      uint8_t v = 0;
      for (long dy = -half; dy <= half && !v; ++dy) {
        const long yy = y + dy;
        if (yy < 0 || yy >= mask.h) continue;
        for (long dx = -half; dx <= half; ++dx) {
          const long xx = x + dx;
          if (xx < 0 || xx >= mask.w) continue;
          if (mask.at(yy, xx)) {
            v = 1;
            break;
          }
        }
      }
      out.set(y, x, v);
    }
  }
  return out;
}

BinaryMask morph_erode(const BinaryMask& mask, int size) {
  check_size(size);
  const int half = size / 2;
  BinaryMask out = BinaryMask::zeros(mask.h, mask.w);
  for (long y = 0; y < mask.h; ++y) {
    for (long x = 0; x < mask.w; ++x) {
      uint8_t v = 1;
      for (long dy = -half; dy <= half && v; ++dy) {
        const long yy = y + dy;
        for (long dx = -half; dx <= half; ++dx) {
          const long xx = x + dx;
          // Outside the image counts as background.
          if (yy < 0 || yy >= mask.h || xx < 0 || xx >= mask.w || !mask.at(yy, xx)) {
            v = 0;
            break;
          }
        }
      }
      out.set(y, x, v);
    }
  }
  return out;
}

BinaryMask boundary_band(const BinaryMask& mask, int size) {
  BinaryMask d = morph_dilate(mask, size);
  BinaryMask e = morph_erode(mask, size);
  BinaryMask out = BinaryMask::zeros(mask.h, mask.w);
  for (size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = static_cast<uint8_t>(d.v[i] && !e.v[i]);
  }
  return out;
}

}  // namespace sinet
