#include "sinet/image_io.hpp"

#include <algorithm>
#include <fstream>

namespace sinet {

namespace {

// Reads one PNM header token, skipping whitespace and # comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) continue;
    tok.push_back(static_cast<char>(ch));
    while ((ch = in.peek()) != EOF && !std::isspace(ch)) {
      tok.push_back(static_cast<char>(in.get()));
    }
    return tok;
  }
  return tok;
}

}  // namespace

Image8 read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image '" + path + "'");
  const std::string magic = next_token(in);
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw FormatError("image '" + path + "': unsupported magic '" + magic + "'");
  const long w = std::stol(next_token(in));
  const long h = std::stol(next_token(in));
  const long maxval = std::stol(next_token(in));
  if (w < 1 || h < 1) throw FormatError("image '" + path + "': bad dimensions");
  if (maxval != 255) throw FormatError("image '" + path + "': only maxval 255 is supported");
  in.get();  // single whitespace byte before the raster
  Image8 img{h, w, channels, std::vector<uint8_t>(static_cast<size_t>(h * w * channels))};
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) {
    throw FormatError("image '" + path + "': truncated raster");
  }
  return img;
}

void write_pnm(const std::string& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ConfigError("write_pnm: channels must be 1 or 3");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << (image.channels == 1 ? "P5" : "P6") << "\n"
      << image.w << " " << image.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()),
            static_cast<std::streamsize>(image.data.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

TensorF image_to_tensor(const Image8& image) {
  TensorF t = TensorF::zeros({1, 3, image.h, image.w});
  for (long y = 0; y < image.h; ++y) {
    for (long x = 0; x < image.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int src = image.channels == 3 ? c : 0;
        t.at_mut(0, c, y, x) = static_cast<float>(image.at(y, x, src)) / 255.0f;
      }
    }
  }
  return t;
}

Image8 tensor_to_image(const TensorF& tensor) {
  const Shape& s = tensor.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) {
    throw ConfigError("tensor_to_image: expected (1,1,h,w) or (1,3,h,w), got " + s.str());
  }
  Image8 img{s.h, s.w, static_cast<int>(s.c),
             std::vector<uint8_t>(static_cast<size_t>(s.h * s.w * s.c))};
  for (long y = 0; y < s.h; ++y) {
    for (long x = 0; x < s.w; ++x) {
      for (long c = 0; c < s.c; ++c) {
        const float v = std::clamp(tensor.at(0, c, y, x), 0.0f, 1.0f);
        img.data[static_cast<size_t>((y * s.w + x) * s.c + c)] =
            static_cast<uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return img;
}

Image8 mask_to_image(const BinaryMask& mask) {
  Image8 img{mask.h, mask.w, 1, std::vector<uint8_t>(mask.v.size())};
  for (size_t i = 0; i < mask.v.size(); ++i) img.data[i] = mask.v[i] ? 255 : 0;
  return img;
}

BinaryMask image_to_mask(const Image8& image) {
  if (image.channels != 1) throw ConfigError("image_to_mask: mask images must be grayscale");
  BinaryMask m = BinaryMask::zeros(image.h, image.w);
  for (size_t i = 0; i < image.data.size(); ++i) {
    m.v[i] = image.data[i] ? 1 : 0;
  }
  return m;
}

}  // namespace sinet
