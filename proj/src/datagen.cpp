#include "sinet/datagen.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace sinet {

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

CropRect parse_rect(const std::string& field, const std::string& where) {
  auto parts = split_on(field, ',');
  if (parts.size() != 4) throw FormatError(where + ": rect must be x,y,w,h");
  try {
    return {std::stol(parts[0]), std::stol(parts[1]), std::stol(parts[2]),
            std::stol(parts[3])};
  } catch (...) {
    throw FormatError(where + ": bad rect '" + field + "'");
  }
}

}  // namespace

CropRect expand_face_box(const FaceBox& box, long image_w, long image_h,
                         const CropSpec& spec) {
  spec.validate();
  if (box.w <= 0 || box.h <= 0) throw ConfigError("face box: width/height must be positive");
  if (box.x < 0 || box.y < 0 || box.x + box.w > image_w || box.y + box.h > image_h) {
    throw ConfigError("face box: box exceeds image bounds");
  }
  const double cx = static_cast<double>(box.x) + static_cast<double>(box.w) / 2.0;
  const double cy = static_cast<double>(box.y) + static_cast<double>(box.h) / 2.0 +
                    spec.down_shift * static_cast<double>(box.h);
  const double half_w = spec.scale_w * static_cast<double>(box.w) / 2.0;
  const double half_h = spec.scale_h * static_cast<double>(box.h) / 2.0;
  long x0 = std::lround(cx - half_w);
  long y0 = std::lround(cy - half_h);
  long x1 = std::lround(cx + half_w);
  long y1 = std::lround(cy + half_h);
  x0 = std::max(0L, x0);
  y0 = std::max(0L, y0);
  x1 = std::min(image_w, x1);
  y1 = std::min(image_h, y1);
  if (x1 <= x0 || y1 <= y0) throw ConfigError("face box: expansion degenerated to zero area");
  return {x0, y0, x1 - x0, y1 - y0};
}

std::pair<TensorF, BinaryMask> crop_pair(const TensorF& image, const BinaryMask& mask,
                                         const CropRect& rect) {
  const Shape& s = image.shape();
  if (s.h != mask.h || s.w != mask.w) {
    throw DimensionError("crop: image and mask sizes disagree");
  }
  if (rect.w < 1 || rect.h < 1 || rect.x < 0 || rect.y < 0 || rect.x + rect.w > s.w ||
      rect.y + rect.h > s.h) {
    throw ConfigError("crop: rect outside image bounds");
  }
  TensorF out_img = TensorF::zeros({s.n, s.c, rect.h, rect.w});
  BinaryMask out_mask = BinaryMask::zeros(rect.h, rect.w);
  for (long n = 0; n < s.n; ++n) {
    for (long c = 0; c < s.c; ++c) {
      for (long y = 0; y < rect.h; ++y) {
        for (long x = 0; x < rect.w; ++x) {
          out_img.at_mut(n, c, y, x) = image.at(n, c, rect.y + y, rect.x + x);
        }
      }
    }
  }
  for (long y = 0; y < rect.h; ++y) {
    for (long x = 0; x < rect.w; ++x) {
      out_mask.set(y, x, mask.at(rect.y + y, rect.x + x));
    }
  }
  return {out_img, out_mask};
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest '" + path + "'");
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_on(line, '\t');
    if (fields.size() != 5) {
      throw FormatError("manifest line " + std::to_string(line_no) +
                        ": expected 5 tab-separated fields");
    }
    ManifestEntry e;
    e.id = fields[0];
    e.image_path = fields[1];
    e.mask_path = fields[2];
    e.rect = parse_rect(fields[3], "manifest line " + std::to_string(line_no));
    e.decision = fields[4];
    if (e.decision != "accept" && e.decision != "reject" && e.decision != "pending") {
      throw FormatError("manifest line " + std::to_string(line_no) + ": bad decision '" +
                        e.decision + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  for (const auto& e : entries) {
    out << e.id << "\t" << e.image_path << "\t" << e.mask_path << "\t" << e.rect.x << ","
        << e.rect.y << "," << e.rect.w << "," << e.rect.h << "\t" << e.decision << "\n";
  }
}

std::map<std::string, Decision> read_decisions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open decisions file '" + path + "'");
  std::map<std::string, Decision> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_on(line, ',');
    if (fields.size() != 2) {
      throw FormatError("decisions line " + std::to_string(line_no) + ": expected id,decision");
    }
    if (fields[1] == "accept") out[fields[0]] = Decision::Accept;
    else if (fields[1] == "reject") out[fields[0]] = Decision::Reject;
    else {
      throw FormatError("decisions line " + std::to_string(line_no) + ": bad decision '" +
                        fields[1] + "'");
    }
  }
  return out;
}

ReviewResult review_manifest(const std::vector<ManifestEntry>& entries,
                             const std::map<std::string, Decision>& decisions) {
  ReviewResult result;
  for (const auto& e : entries) {
    auto it = decisions.find(e.id);
    if (it == decisions.end()) {
      ManifestEntry pending = e;
      pending.decision = "pending";
      result.pending.push_back(std::move(pending));
      continue;
    }
    ManifestEntry decided = e;
    if (it->second == Decision::Accept) {
      decided.decision = "accept";
      result.accepted.push_back(std::move(decided));
    } else {
      decided.decision = "reject";
      result.rejected.push_back(std::move(decided));
    }
  }
  return result;
}

std::vector<std::pair<std::string, FaceBox>> read_boxes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open boxes file '" + path + "'");
  std::vector<std::pair<std::string, FaceBox>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_on(line, ',');
    if (fields.size() != 5) {
      throw FormatError("boxes line " + std::to_string(line_no) + ": expected id,x,y,w,h");
    }
    try {
      out.emplace_back(fields[0], FaceBox{std::stol(fields[1]), std::stol(fields[2]),
                                          std::stol(fields[3]), std::stol(fields[4])});
    } catch (const FormatError&) {
      throw;
    } catch (...) {
      throw FormatError("boxes line " + std::to_string(line_no) + ": bad number");
    }
  }
  return out;
}

}  // namespace sinet
