#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bgaug/rng.hpp"

namespace bgaug {

// Row-major, channel-interleaved float image with values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  std::size_t size() const { return data.size(); }
};

// Binary foreground mask; 1 marks foreground.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) {
    return bits[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int y, int x) const {
    return bits[static_cast<std::size_t>(y) * width + x];
  }
  long foreground_count() const {
    long n = 0;
    for (auto b : bits) n += (b != 0);
    return n;
  }

  struct Box {
    int top = 0, left = 0, height = 0, width = 0;
    bool empty() const { return height == 0 || width == 0; }
  };
  Box bounding_box() const;
};

// Source-window plus output-size description of a crop-and-resize.
struct CropParams {
  int top = 0, left = 0;
  int crop_h = 0, crop_w = 0;
  int out_h = 0, out_w = 0;
};

// Ranges for the mask corruption model. Angles in degrees; translation is a
// fraction of the foreground bounding-box extent.
struct MaskCorruption {
  double max_rotation_deg = 0.0;
  double max_shear_deg = 0.0;
  double max_translation = 0.0;
  double hflip_prob = 0.0;
};

// One concrete perturbation drawn from a MaskCorruption.
struct MaskTransform {
  double rotation_deg = 0.0;
  double shear_x_deg = 0.0;
  double shear_y_deg = 0.0;
  double translate_x = 0.0;  // pixels
  double translate_y = 0.0;  // pixels
  bool hflip = false;
  bool identity() const {
    return rotation_deg == 0.0 && shear_x_deg == 0.0 && shear_y_deg == 0.0 &&
           translate_x == 0.0 && translate_y == 0.0 && !hflip;
  }
};

// Result of the foreground-aware random-resized-crop sampler.
struct RrcResult {
  CropParams crop;
  int rejections = 0;    // failed attempts before acceptance or fallback
  bool fallback = false; // true when the centered square fallback was used
};

// fg where mask is set, bg elsewhere. Shapes must match.
Image composite(const Image& fg, const Mask& mask, const Image& bg);

// Replace the background with a constant grayscale intensity.
Image fill_grayscale(const Image& img, const Mask& mask, float intensity);

// Fill the masked (foreground) region by repeatedly averaging already-valid
// 8-neighbours, peeling inward one ring per pass. The result is a plausible
// background-only image. If the mask covers everything, the output is a
// mid-gray canvas and *degenerate is set when provided.
Image tiled_background(const Image& img, const Mask& mask,
                       bool* degenerate = nullptr);

// Apply hflip, then rotation about the image center, then shear about the
// center, then translation. Nearest-neighbour resampling via the inverse map;
// pixels that land outside the canvas read as background.
Mask transform_mask(const Mask& mask, const MaskTransform& t);

// Draw a concrete perturbation. Translation is scaled by the foreground
// extent (fg_w, fg_h) so small objects move proportionally less.
// Draw order: rotation, shear x, shear y, translate x, translate y, hflip.
MaskTransform sample_mask_corruption(Rng& rng, const MaskCorruption& c,
                                     int fg_w, int fg_h);

// Fraction of the mask's foreground pixels that lie inside the crop window.
// An empty mask counts as all-foreground so that downstream acceptance
// thresholds never reject on a maskless sample.
double foreground_fraction(const Mask& mask, const CropParams& crop);

// Random resized crop with a minimum-foreground constraint. Candidates whose
// foreground fraction is below fg_min are rejected; after max_tries failures
// the result is the largest centered square. fg_min <= 0 disables the
// constraint and consumes exactly the same RNG draws as the unconstrained
// sampler.
RrcResult sample_rrc(Rng& rng, int src_h, int src_w,
                     std::pair<double, double> scale,
                     std::pair<double, double> ratio, const Mask* mask,
                     double fg_min, int max_tries, int out_h, int out_w);

// Crop-and-resize. Images use bilinear interpolation (corner-aligned, exact
// at grid nodes); masks use nearest-neighbour.
Image apply_crop(const Image& img, const CropParams& crop);
Mask apply_crop_mask(const Mask& mask, const CropParams& crop);

}  // namespace bgaug
