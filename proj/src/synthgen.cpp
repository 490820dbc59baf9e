#include "bgaug/synthgen.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "bgaug/errors.hpp"

namespace bgaug {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c, g = x;
  } else if (hp < 2) {
    r = x, g = c;
  } else if (hp < 3) {
    g = c, b = x;
  } else if (hp < 4) {
    g = x, b = c;
  } else if (hp < 5) {
    r = x, b = c;
  } else {
    r = c, b = x;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

void put(Image& img, int y, int x, const Rgb& col) {
  img.at(y, x, 0) = static_cast<float>(std::clamp(col.r, 0.0, 1.0));
  if (img.channels == 3) {
    img.at(y, x, 1) = static_cast<float>(std::clamp(col.g, 0.0, 1.0));
    img.at(y, x, 2) = static_cast<float>(std::clamp(col.b, 0.0, 1.0));
  }
}

// background textures, cycled by bg_class

Image render_stripes(Rng& rng, int size, double hue) {
  const double freq = rng.uniform(2.0, 3.5);
  const double angle = rng.uniform(0.0, kTwoPi / 2.0);
  const double phase = rng.uniform(0.0, kTwoPi);
  const double dx = std::cos(angle), dy = std::sin(angle);
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double t =
          0.5 + 0.5 * std::sin(kTwoPi * freq * (dx * x + dy * y) / size +
                               phase);
      put(img, y, x, hsv_to_rgb(hue, 0.55, 0.45 + 0.4 * t));
    }
  }
  return img;
}

Image render_checker(Rng& rng, int size, double hue) {
  const int cell = 3 + static_cast<int>(rng.uniform_index(4));  // 3..6 px
  const int off_x = static_cast<int>(rng.uniform_index(cell));
  const int off_y = static_cast<int>(rng.uniform_index(cell));
  const Rgb a = hsv_to_rgb(hue, 0.55, 0.8);
  const Rgb b = hsv_to_rgb(hue + 24.0, 0.45, 0.45);
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool odd = (((x + off_x) / cell) + ((y + off_y) / cell)) % 2;
      put(img, y, x, odd ? a : b);
    }
  }
  return img;
}

Image render_gradient(Rng& rng, int size, double hue) {
  const double angle = rng.uniform(0.0, kTwoPi);
  const double dx = std::cos(angle), dy = std::sin(angle);
  const Rgb a = hsv_to_rgb(hue - 18.0, 0.6, 0.85);
  const Rgb b = hsv_to_rgb(hue + 18.0, 0.5, 0.35);
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double t =
          0.5 + (dx * (x - size / 2.0) + dy * (y - size / 2.0)) / (1.5 * size);
      const double u = std::clamp(t, 0.0, 1.0);
      put(img, y, x,
          {a.r + (b.r - a.r) * u, a.g + (b.g - a.g) * u,
           a.b + (b.b - a.b) * u});
    }
  }
  return img;
}

Image render_noise(Rng& rng, int size, double hue) {
  constexpr int kGrid = 5;
  double grid[kGrid][kGrid];
  for (auto& row : grid) {
    for (auto& v : row) v = rng.uniform();
  }
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double gy = y * (kGrid - 1.0) / (size - 1.0);
      const double gx = x * (kGrid - 1.0) / (size - 1.0);
      const int y0 = std::min(static_cast<int>(gy), kGrid - 2);
      const int x0 = std::min(static_cast<int>(gx), kGrid - 2);
      const double wy = gy - y0, wx = gx - x0;
      const double t = (1 - wy) * ((1 - wx) * grid[y0][x0] +
                                   wx * grid[y0][x0 + 1]) +
                       wy * ((1 - wx) * grid[y0 + 1][x0] +
                             wx * grid[y0 + 1][x0 + 1]);
      put(img, y, x, hsv_to_rgb(hue, 0.5, 0.35 + 0.5 * t));
    }
  }
  return img;
}

// golden-angle hue spacing keeps class colors distinct for any class count
constexpr double kHueStep = 137.5077640500378;

Image render_background(Rng& rng, int bg_class, int size) {
  const double hue = std::fmod(bg_class * kHueStep, 360.0);
  switch (bg_class % 4) {
    case 0: return render_stripes(rng, size, hue);
    case 1: return render_checker(rng, size, hue);
    case 2: return render_gradient(rng, size, hue);
    default: return render_noise(rng, size, hue);
  }
}

Image render_foreground_texture(Rng& rng, int fg_class, int size) {
  const double hue = std::fmod(fg_class * kHueStep + 60.0, 360.0);
  const double freq = 4.0 + (fg_class % 3);
  const double angle = rng.uniform(0.0, kTwoPi / 2.0);
  const double phase = rng.uniform(0.0, kTwoPi);
  const double dx = std::cos(angle), dy = std::sin(angle);
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double t =
          0.5 + 0.5 * std::sin(kTwoPi * freq * (dx * x + dy * y) / size +
                               phase);
      put(img, y, x, hsv_to_rgb(hue, 0.9, 0.55 + 0.45 * t));
    }
  }
  return img;
}

// shape support test in unit coordinates (rotated, scaled by 1/radius)
bool inside_shape(int shape, double u, double v) {
  switch (shape) {
    case 0:  // disc
      return u * u + v * v <= 1.0;
    case 1:  // square
      return std::max(std::fabs(u), std::fabs(v)) <= 0.85;
    case 2: {  // triangle, apex up
      if (v < -1.0 || v > 0.75) return false;
      const double half = 0.95 * (v + 1.0) / 1.75;
      return std::fabs(u) <= half;
    }
    case 3:  // cross
      return (std::fabs(u) <= 0.33 && std::fabs(v) <= 1.0) ||
             (std::fabs(v) <= 0.33 && std::fabs(u) <= 1.0);
    case 4: {  // annulus
      const double r2 = u * u + v * v;
      return r2 >= 0.25 && r2 <= 1.0;
    }
    default:  // bar
      return std::fabs(u) <= 1.0 && std::fabs(v) <= 0.35;
  }
}

constexpr double kShapeScale[6] = {1.0, 1.0, 1.25, 1.0, 1.0, 1.3};

Mask render_shape_mask(int shape, int size, double cx, double cy, double r,
                       double theta) {
  Mask m(size, size);
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = x - cx, py = y - cy;
      const double u = (px * ct + py * st) / r;
      const double v = (-px * st + py * ct) / r;
      if (inside_shape(shape, u, v)) m.at(y, x) = 1;
    }
  }
  return m;
}

const char* kShapeNames[6] = {"disc",    "square",  "triangle",
                              "cross",   "annulus", "bar"};
const char* kTextureNames[4] = {"stripes", "checker", "gradient", "noise"};

}  // namespace

Sample gen_sample(Rng& rng, int fg_class, int bg_class, int size) {
  if (fg_class < 0 || bg_class < 0 || size < 16) {
    throw ConfigError("gen_sample: bad arguments");
  }
  Image bg = render_background(rng, bg_class, size);
  const int shape = fg_class % 6;

  Mask mask;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 1000) {
      throw NumericError("gen_sample: shape placement failed to converge");
    }
    const double cx = rng.uniform(0.32, 0.68) * size;
    const double cy = rng.uniform(0.32, 0.68) * size;
    const double r = rng.uniform(0.17, 0.32) * size * kShapeScale[shape];
    const double theta = rng.uniform(0.0, kTwoPi);
    mask = render_shape_mask(shape, size, cx, cy, r, theta);
    const double frac =
        static_cast<double>(mask.foreground_count()) / (size * size);
    if (frac >= 0.05 && frac <= 0.6) break;
  }

  Image fg = render_foreground_texture(rng, fg_class, size);
  Sample s;
  s.image = composite(fg, mask, bg);
  s.mask = std::move(mask);
  s.tiled_bg = tiled_background(s.image, s.mask);
  s.fg_class = fg_class;
  s.bg_class = bg_class;
  return s;
}

namespace {

void fill_class_names(Dataset& ds, const SynthConfig& cfg) {
  ds.n_fg_classes = cfg.n_fg_classes;
  ds.n_bg_classes = cfg.n_bg_classes;
  for (int i = 0; i < cfg.n_fg_classes; ++i) {
    ds.fg_class_names.push_back(std::string(kShapeNames[i % 6]) + "_" +
                                std::to_string(i));
  }
  for (int i = 0; i < cfg.n_bg_classes; ++i) {
    ds.bg_class_names.push_back(std::string(kTextureNames[i % 4]) + "_" +
                                std::to_string(i));
  }
}

}  // namespace

GeneratedData gen_dataset(const SynthConfig& cfg) {
  if (cfg.n_fg_classes < 2 || cfg.n_bg_classes < 2 || cfg.image_size < 16 ||
      cfg.correlation < 0.0 || cfg.correlation > 1.0 || cfg.n_train < 1 ||
      cfg.n_test < 1) {
    throw ConfigError("gen_dataset: invalid SynthConfig");
  }
  GeneratedData out;
  fill_class_names(out.train, cfg);
  fill_class_names(out.test, cfg);

  const int K = cfg.n_fg_classes, B = cfg.n_bg_classes;
  out.train.samples.reserve(cfg.n_train);
  for (int i = 0; i < cfg.n_train; ++i) {
    Rng rng = derive_rng(cfg.seed, 0, static_cast<std::uint64_t>(i),
                         Stream::kDatasetTrain);
    const int fg = static_cast<int>(rng.uniform_index(K));
    const int pair = paired_bg(fg, B);
    int bg;
    if (rng.bernoulli(cfg.correlation)) {
      bg = pair;
    } else {
      const int j = static_cast<int>(rng.uniform_index(B - 1));
      bg = j >= pair ? j + 1 : j;
    }
    Sample s = gen_sample(rng, fg, bg, cfg.image_size);
    s.id = i;
    out.train.samples.push_back(std::move(s));
  }

  out.test.samples.reserve(cfg.n_test);
  for (int i = 0; i < cfg.n_test; ++i) {
    Rng rng = derive_rng(cfg.seed, 0, static_cast<std::uint64_t>(i),
                         Stream::kDatasetTest);
    const int fg = static_cast<int>(rng.uniform_index(K));
    const int bg = static_cast<int>(rng.uniform_index(B));
    Sample s = gen_sample(rng, fg, bg, cfg.image_size);
    s.id = i;
    out.test.samples.push_back(std::move(s));
  }
  return out;
}

std::vector<ChallengeSplit> gen_challenge_splits(const Dataset& test,
                                                 std::uint64_t split_seed) {
  if (test.samples.empty()) {
    throw ConfigError("gen_challenge_splits: empty test set");
  }
  const int K = test.n_fg_classes;
  const auto& samples = test.samples;
  const std::size_t n = samples.size();

  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t i = 0; i < n; ++i) {
    by_class[samples[i].fg_class].push_back(i);
  }

  std::vector<ChallengeSplit> splits(7);
  const char* names[7] = {"Original", "Only-FG",   "Only-BG-B", "Only-BG-T",
                          "Mixed-Same", "Mixed-Rand", "Mixed-Next"};
  for (int s = 0; s < 7; ++s) {
    splits[s].name = names[s];
    splits[s].images.reserve(n);
    splits[s].labels.reserve(n);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const Sample& src = samples[i];
    const Image black(src.image.height, src.image.width, src.image.channels);

    for (int s = 0; s < 7; ++s) splits[s].labels.push_back(src.fg_class);

    splits[0].images.push_back(src.image);
    splits[1].images.push_back(composite(src.image, src.mask, black));

    Image bbox_blacked = src.image;
    const auto box = src.mask.bounding_box();
    for (int y = box.top; y < box.top + box.height; ++y) {
      for (int x = box.left; x < box.left + box.width; ++x) {
        for (int c = 0; c < bbox_blacked.channels; ++c) {
          bbox_blacked.at(y, x, c) = 0.f;
        }
      }
    }
    splits[2].images.push_back(std::move(bbox_blacked));
    splits[3].images.push_back(src.tiled_bg);

    Rng rng = derive_rng(split_seed, 0, static_cast<std::uint64_t>(src.id),
                         Stream::kSplitPairing);

    // Mixed-Same: donor of the same class, never self
    {
      const auto& pool = by_class[src.fg_class];
      std::vector<std::size_t> others;
      others.reserve(pool.size());
      for (auto j : pool) {
        if (j != i) others.push_back(j);
      }
      if (others.empty()) {
        splits[4].images.push_back(composite(src.image, src.mask,
                                             src.tiled_bg));
        ++splits[4].donor_fallbacks;
        rng.uniform_index(1);  // keep the draw sequence aligned
      } else {
        const auto j = others[rng.uniform_index(others.size())];
        splits[4].images.push_back(
            composite(src.image, src.mask, samples[j].tiled_bg));
      }
    }

    // Mixed-Rand: donor uniform over the whole test set
    {
      const auto j = rng.uniform_index(n);
      splits[5].images.push_back(
          composite(src.image, src.mask, samples[j].tiled_bg));
    }

    // Mixed-Next: donor from class (fg + 1) mod K
    {
      const auto& pool = by_class[(src.fg_class + 1) % K];
      if (pool.empty()) {
        splits[6].images.push_back(composite(src.image, src.mask,
                                             src.tiled_bg));
        ++splits[6].donor_fallbacks;
        rng.uniform_index(1);
      } else {
        const auto j = pool[rng.uniform_index(pool.size())];
        splits[6].images.push_back(
            composite(src.image, src.mask, samples[j].tiled_bg));
      }
    }
  }
  return splits;
}

std::string synth_config_to_json(const SynthConfig& cfg) {
  nlohmann::json j;
  j["n_fg_classes"] = cfg.n_fg_classes;
  j["n_bg_classes"] = cfg.n_bg_classes;
  j["image_size"] = cfg.image_size;
  j["correlation"] = cfg.correlation;
  j["n_train"] = cfg.n_train;
  j["n_test"] = cfg.n_test;
  j["seed"] = cfg.seed;
  return j.dump();
}

SynthConfig synth_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: invalid JSON: ") + e.what());
  }
  static const char* known[] = {"n_fg_classes", "n_bg_classes", "image_size",
                                "correlation",  "n_train",      "n_test",
                                "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("synth config: unknown key '" + it.key() + "'");
  }
  SynthConfig cfg;
  cfg.n_fg_classes = j.value("n_fg_classes", cfg.n_fg_classes);
  cfg.n_bg_classes = j.value("n_bg_classes", cfg.n_bg_classes);
  cfg.image_size = j.value("image_size", cfg.image_size);
  cfg.correlation = j.value("correlation", cfg.correlation);
  cfg.n_train = j.value("n_train", cfg.n_train);
  cfg.n_test = j.value("n_test", cfg.n_test);
  cfg.seed = j.value("seed", cfg.seed);
  if (cfg.n_fg_classes < 1 || cfg.n_bg_classes < 1 || cfg.image_size < 8 ||
      cfg.n_train < 0 || cfg.n_test < 0 || cfg.correlation < 0.0 ||
      cfg.correlation > 1.0) {
    throw ConfigError("synth config: values out of range");
  }
  return cfg;
}

}  // namespace bgaug
