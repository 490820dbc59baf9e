#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bgaug/image.hpp"

namespace bgaug {

// One labeled sample with its ground-truth mask and precomputed
// background-only (foreground filled in) companion image.
struct Sample {
  Image image;
  Mask mask;
  Image tiled_bg;
  int fg_class = 0;
  int bg_class = 0;
  std::int64_t id = 0;
};

struct Dataset {
  int n_fg_classes = 0;
  int n_bg_classes = 0;
  std::vector<std::string> fg_class_names;
  std::vector<std::string> bg_class_names;
  std::vector<Sample> samples;
};

// On-disk layout of one dataset directory:
//   manifest.json  image/mask/tiled byte offsets per sample, labels, shapes
//   images.bin     float32 little-endian, H*W*C per sample
//   masks.bin      one byte per pixel, 0/1
//   tiled.bin      float32 little-endian, H*W*C per sample
// config_json (any JSON object, "{}" if none) is embedded verbatim so a
// generated dataset records how it was made.
void save_dataset(const Dataset& ds, const std::string& dir,
                  const std::string& config_json);

// Loads a dataset directory. Missing tiled.bin is tolerated (tiled
// backgrounds are recomputed from image+mask); any structural or value
// inconsistency raises IntegrityError. If config_json_out is non-null it
// receives the embedded config object as a compact JSON string.
Dataset load_dataset(const std::string& dir,
                     std::string* config_json_out = nullptr);

}  // namespace bgaug
