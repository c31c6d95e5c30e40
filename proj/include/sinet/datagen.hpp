#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sinet/image_io.hpp"

namespace sinet {

struct FaceBox {
  long x = 0, y = 0, w = 0, h = 0;
};

struct CropRect {
  long x = 0, y = 0, w = 0, h = 0;
  bool operator==(const CropRect&) const = default;
};

struct CropSpec {
  double scale_w = 2.5;
  double scale_h = 2.5;
  double down_shift = 0.3;  // fraction of the face height

  void validate() const {
    if (scale_w < 1.0 || scale_h < 1.0) throw ConfigError("crop spec: scales must be >= 1");
  }
};

// Expands a face detection around its centre, shifts it down by
// down_shift * h to cover the upper body and clamps to the image.
CropRect expand_face_box(const FaceBox& box, long image_w, long image_h,
                         const CropSpec& spec);

// Pixel-exact crops of an image tensor and its mask.
std::pair<TensorF, BinaryMask> crop_pair(const TensorF& image, const BinaryMask& mask,
                                         const CropRect& rect);

struct ManifestEntry {
  std::string id;
  std::string image_path;
  std::string mask_path;
  CropRect rect;
  std::string decision;  // "accept", "reject" or "pending"
};

// Tab-separated, one record per line: id, image path, mask path, "x,y,w,h",
// decision. Round trips losslessly (paths must not contain tabs).
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

enum class Decision { Accept, Reject };

// CSV decisions file: id,accept|reject per line.
std::map<std::string, Decision> read_decisions(const std::string& path);

struct ReviewResult {
  std::vector<ManifestEntry> accepted;  // input order preserved
  std::vector<ManifestEntry> rejected;
  std::vector<ManifestEntry> pending;  // entries with no decision
};

ReviewResult review_manifest(const std::vector<ManifestEntry>& entries,
                             const std::map<std::string, Decision>& decisions);

// CSV boxes file: id,x,y,w,h per line.
std::vector<std::pair<std::string, FaceBox>> read_boxes(const std::string& path);

}  // namespace sinet
