#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sinet/loss.hpp"
#include "sinet/tensor.hpp"

namespace sinet {

// 8-bit raster, interleaved rows; channels is 1 (grayscale) or 3 (RGB).
struct Image8 {
  long h = 0, w = 0;
  int channels = 1;
  std::vector<uint8_t> data;

  uint8_t at(long y, long x, int c) const {
    return data[static_cast<size_t>((y * w + x) * channels + c)];
  }
};

// Binary PGM (P5) / PPM (P6), maxval 255.
Image8 read_pnm(const std::string& path);
void write_pnm(const std::string& path, const Image8& image);

// (1, 3, h, w) tensor in [0, 1]; grayscale inputs are replicated to RGB.
TensorF image_to_tensor(const Image8& image);
Image8 tensor_to_image(const TensorF& tensor);

// Masks are stored as 0/255 grayscale; any non-zero pixel reads back as 1.
Image8 mask_to_image(const BinaryMask& mask);
BinaryMask image_to_mask(const Image8& image);

}  // namespace sinet
