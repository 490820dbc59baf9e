#include "bgaug/image.hpp"

#include <algorithm>
#include <cmath>

#include "bgaug/errors.hpp"

namespace bgaug {

Mask::Box Mask::bounding_box() const {
  int y0 = height, y1 = -1, x0 = width, x1 = -1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (at(y, x)) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
    }
  }
  if (y1 < 0) return {};
  return {y0, x0, y1 - y0 + 1, x1 - x0 + 1};
}

static void check_same_dims(const Image& a, const Mask& m, const Image& b,
                            const char* op) {
  if (!a.same_shape(b) || a.height != m.height || a.width != m.width) {
    throw ConfigError(std::string(op) + ": dimension mismatch");
  }
}

Image composite(const Image& fg, const Mask& mask, const Image& bg) {
  check_same_dims(fg, mask, bg, "composite");
  Image out = bg;
  const int c = fg.channels;
  for (int y = 0; y < fg.height; ++y) {
    for (int x = 0; x < fg.width; ++x) {
      if (mask.at(y, x)) {
        for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = fg.at(y, x, ch);
      }
    }
  }
  return out;
}

Image fill_grayscale(const Image& img, const Mask& mask, float intensity) {
  if (intensity < 0.f || intensity > 1.f) {
    throw ConfigError("fill_grayscale: intensity outside [0,1]");
  }
  if (img.height != mask.height || img.width != mask.width) {
    throw ConfigError("fill_grayscale: dimension mismatch");
  }
  Image out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (!mask.at(y, x)) {
        for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = intensity;
      }
    }
  }
  return out;
}

Image tiled_background(const Image& img, const Mask& mask, bool* degenerate) {
  if (img.height != mask.height || img.width != mask.width) {
    throw ConfigError("tiled_background: dimension mismatch");
  }
  if (degenerate) *degenerate = false;
  const int h = img.height, w = img.width, c = img.channels;

  std::vector<std::uint8_t> valid(static_cast<std::size_t>(h) * w);
  long unfilled = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool bgpix = mask.at(y, x) == 0;
      valid[static_cast<std::size_t>(y) * w + x] = bgpix;
      unfilled += !bgpix;
    }
  }
  if (unfilled == static_cast<long>(h) * w) {
    if (degenerate) *degenerate = true;
    return Image(h, w, c, 0.5f);
  }

  Image out = img;
  // Synchronous peel: each pass averages only neighbours that were valid at
  // the start of the pass, so fill order within a pass cannot matter.
  std::vector<std::pair<int, int>> ring;
  std::vector<float> ring_vals;
  while (unfilled > 0) {
    ring.clear();
    ring_vals.clear();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (valid[static_cast<std::size_t>(y) * w + x]) continue;
        double acc[3] = {0, 0, 0};
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            if (!valid[static_cast<std::size_t>(ny) * w + nx]) continue;
            for (int ch = 0; ch < c; ++ch) acc[ch] += out.at(ny, nx, ch);
            ++n;
          }
        }
        if (n == 0) continue;
        ring.emplace_back(y, x);
        for (int ch = 0; ch < c; ++ch) {
          ring_vals.push_back(static_cast<float>(
              std::clamp(acc[ch] / n, 0.0, 1.0)));
        }
      }
    }
    std::size_t k = 0;
    for (auto [y, x] : ring) {
      for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = ring_vals[k++];
      valid[static_cast<std::size_t>(y) * w + x] = 1;
      --unfilled;
    }
  }
  return out;
}

namespace {

// 2x3 affine row-major: dest = A * src + t
struct Affine {
  double a = 1, b = 0, tx = 0;
  double c = 0, d = 1, ty = 0;
};

Affine compose(const Affine& m, const Affine& n) {  // m after n
  Affine r;
  r.a = m.a * n.a + m.b * n.c;
  r.b = m.a * n.b + m.b * n.d;
  r.tx = m.a * n.tx + m.b * n.ty + m.tx;
  r.c = m.c * n.a + m.d * n.c;
  r.d = m.c * n.b + m.d * n.d;
  r.ty = m.c * n.tx + m.d * n.ty + m.ty;
  return r;
}

Affine invert(const Affine& m) {
  const double det = m.a * m.d - m.b * m.c;
  Affine r;
  r.a = m.d / det;
  r.b = -m.b / det;
  r.c = -m.c / det;
  r.d = m.a / det;
  r.tx = -(r.a * m.tx + r.b * m.ty);
  r.ty = -(r.c * m.tx + r.d * m.ty);
  return r;
}

Affine about_center(const Affine& m, double cx, double cy) {
  Affine shift_in{1, 0, -cx, 0, 1, -cy};
  Affine shift_out{1, 0, cx, 0, 1, cy};
  return compose(shift_out, compose(m, shift_in));
}

constexpr double kDegToRad = 0.017453292519943295;

}  // namespace

Mask transform_mask(const Mask& mask, const MaskTransform& t) {
  if (t.identity()) return mask;
  const int h = mask.height, w = mask.width;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;

  // forward map in application order: hflip, rotate, shear, translate
  Affine fwd{1, 0, 0, 0, 1, 0};
  if (t.hflip) {
    fwd = compose(Affine{-1, 0, w - 1.0, 0, 1, 0}, fwd);
  }
  if (t.rotation_deg != 0.0) {
    const double th = t.rotation_deg * kDegToRad;
    Affine rot{std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0};
    fwd = compose(about_center(rot, cx, cy), fwd);
  }
  if (t.shear_x_deg != 0.0 || t.shear_y_deg != 0.0) {
    Affine sh{1, std::tan(t.shear_x_deg * kDegToRad), 0,
              std::tan(t.shear_y_deg * kDegToRad), 1, 0};
    fwd = compose(about_center(sh, cx, cy), fwd);
  }
  fwd = compose(Affine{1, 0, t.translate_x, 0, 1, t.translate_y}, fwd);

  const Affine inv = invert(fwd);
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = inv.a * x + inv.b * y + inv.tx;
      const double sy = inv.c * x + inv.d * y + inv.ty;
      const long ix = std::lround(sx), iy = std::lround(sy);
      if (ix < 0 || ix >= w || iy < 0 || iy >= h) continue;
      out.at(y, x) = mask.at(static_cast<int>(iy), static_cast<int>(ix));
    }
  }
  return out;
}

MaskTransform sample_mask_corruption(Rng& rng, const MaskCorruption& c,
                                     int fg_w, int fg_h) {
  MaskTransform t;
  if (c.max_rotation_deg > 0) {
    t.rotation_deg = rng.uniform(-c.max_rotation_deg, c.max_rotation_deg);
  }
  if (c.max_shear_deg > 0) {
    t.shear_x_deg = rng.uniform(-c.max_shear_deg, c.max_shear_deg);
    t.shear_y_deg = rng.uniform(-c.max_shear_deg, c.max_shear_deg);
  }
  if (c.max_translation > 0) {
    t.translate_x = rng.uniform(-c.max_translation, c.max_translation) * fg_w;
    t.translate_y = rng.uniform(-c.max_translation, c.max_translation) * fg_h;
  }
  if (c.hflip_prob > 0) t.hflip = rng.bernoulli(c.hflip_prob);
  return t;
}

double foreground_fraction(const Mask& mask, const CropParams& crop) {
  long total = 0, inside = 0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      ++total;
      if (y >= crop.top && y < crop.top + crop.crop_h && x >= crop.left &&
          x < crop.left + crop.crop_w) {
        ++inside;
      }
    }
  }
  if (total == 0) return 1.0;
  return static_cast<double>(inside) / static_cast<double>(total);
}

RrcResult sample_rrc(Rng& rng, int src_h, int src_w,
                     std::pair<double, double> scale,
                     std::pair<double, double> ratio, const Mask* mask,
                     double fg_min, int max_tries, int out_h, int out_w) {
  if (scale.first <= 0 || scale.first > scale.second || scale.second > 1.0 ||
      ratio.first > ratio.second || max_tries < 1) {
    throw ConfigError("sample_rrc: invalid scale/ratio/max_tries");
  }
  const double area = static_cast<double>(src_h) * src_w;
  const double log_lo = std::log(ratio.first), log_hi = std::log(ratio.second);

  RrcResult res;
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    const double target_area = area * rng.uniform(scale.first, scale.second);
    const double ar = std::exp(rng.uniform(log_lo, log_hi));
    const int cw = static_cast<int>(std::lround(std::sqrt(target_area * ar)));
    const int ch = static_cast<int>(std::lround(std::sqrt(target_area / ar)));
    if (cw < 1 || cw > src_w || ch < 1 || ch > src_h) {
      ++res.rejections;  // geometry does not fit; counts as a try
      continue;
    }
    CropParams c;
    c.crop_h = ch;
    c.crop_w = cw;
    c.top = static_cast<int>(rng.uniform_index(src_h - ch + 1));
    c.left = static_cast<int>(rng.uniform_index(src_w - cw + 1));
    c.out_h = out_h;
    c.out_w = out_w;
    if (mask != nullptr && fg_min > 0.0 &&
        foreground_fraction(*mask, c) < fg_min) {
      ++res.rejections;
      continue;
    }
    res.crop = c;
    return res;
  }
  // centered square fallback, largest side that fits
  const int side = std::min(src_h, src_w);
  res.crop.top = (src_h - side) / 2;
  res.crop.left = (src_w - side) / 2;
  res.crop.crop_h = side;
  res.crop.crop_w = side;
  res.crop.out_h = out_h;
  res.crop.out_w = out_w;
  res.fallback = true;
  return res;
}

static void check_crop(int src_h, int src_w, const CropParams& c,
                       const char* op) {
  if (c.crop_h < 1 || c.crop_w < 1 || c.out_h < 1 || c.out_w < 1 ||
      c.top < 0 || c.left < 0 || c.top + c.crop_h > src_h ||
      c.left + c.crop_w > src_w) {
    throw ConfigError(std::string(op) + ": crop outside source image");
  }
}

Image apply_crop(const Image& img, const CropParams& c) {
  check_crop(img.height, img.width, c, "apply_crop");
  Image out(c.out_h, c.out_w, img.channels);
  // corner-aligned bilinear: output corners sample source window corners
  // exactly, and an identity crop reproduces the input bit-for-bit
  const double sy_step =
      c.out_h > 1 ? static_cast<double>(c.crop_h - 1) / (c.out_h - 1) : 0.0;
  const double sx_step =
      c.out_w > 1 ? static_cast<double>(c.crop_w - 1) / (c.out_w - 1) : 0.0;
  for (int oy = 0; oy < c.out_h; ++oy) {
    const double sy =
        c.top + (c.out_h > 1 ? oy * sy_step : (c.crop_h - 1) / 2.0);
    int y0 = static_cast<int>(std::floor(sy));
    y0 = std::clamp(y0, c.top, c.top + c.crop_h - 1);
    const int y1 = std::min(y0 + 1, c.top + c.crop_h - 1);
    const double wy = sy - y0;
    for (int ox = 0; ox < c.out_w; ++ox) {
      const double sx =
          c.left + (c.out_w > 1 ? ox * sx_step : (c.crop_w - 1) / 2.0);
      int x0 = static_cast<int>(std::floor(sx));
      x0 = std::clamp(x0, c.left, c.left + c.crop_w - 1);
      const int x1 = std::min(x0 + 1, c.left + c.crop_w - 1);
      const double wx = sx - x0;
      for (int ch = 0; ch < img.channels; ++ch) {
        const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0, ch) +
                                     wx * img.at(y0, x1, ch)) +
                         wy * ((1 - wx) * img.at(y1, x0, ch) +
                               wx * img.at(y1, x1, ch));
        out.at(oy, ox, ch) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

Mask apply_crop_mask(const Mask& mask, const CropParams& c) {
  check_crop(mask.height, mask.width, c, "apply_crop_mask");
  Mask out(c.out_h, c.out_w);
  for (int oy = 0; oy < c.out_h; ++oy) {
    const double sy =
        c.top + (c.out_h > 1
                     ? oy * static_cast<double>(c.crop_h - 1) / (c.out_h - 1)
                     : (c.crop_h - 1) / 2.0);
    const int y = std::clamp(static_cast<int>(std::lround(sy)), c.top,
                             c.top + c.crop_h - 1);
    for (int ox = 0; ox < c.out_w; ++ox) {
      const double sx =
          c.left +
          (c.out_w > 1 ? ox * static_cast<double>(c.crop_w - 1) / (c.out_w - 1)
                       : (c.crop_w - 1) / 2.0);
      const int x = std::clamp(static_cast<int>(std::lround(sx)), c.left,
                               c.left + c.crop_w - 1);
      out.at(oy, ox) = mask.at(y, x);
    }
  }
  return out;
}

}  // namespace bgaug
