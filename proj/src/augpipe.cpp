#include "bgaug/augpipe.hpp"

#include <algorithm>
#include <cmath>

#include "bgaug/errors.hpp"

namespace bgaug {

namespace {

void hflip_inplace(Image& img) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width / 2; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        std::swap(img.at(y, x, c), img.at(y, img.width - 1 - x, c));
      }
    }
  }
}

void hflip_inplace(Mask& m) {
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width / 2; ++x) {
      std::swap(m.at(y, x), m.at(y, m.width - 1 - x));
    }
  }
}

double luminance_mean(const Image& img) {
  double acc = 0;
  const long n = static_cast<long>(img.height) * img.width;
  if (img.channels == 1) {
    for (float v : img.data) acc += v;
    return acc / n;
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      acc += 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
             0.114 * img.at(y, x, 2);
    }
  }
  return acc / n;
}

}  // namespace

ViewResult standard_view(const Image& img, const Mask& mask, Rng& rng,
                         const AugConfig& cfg) {
  RrcResult rrc = sample_rrc(rng, img.height, img.width, cfg.scale, kRrcRatio,
                             &mask, cfg.fg_min, cfg.max_tries, img.height,
                             img.width);
  ViewResult out;
  out.view = apply_crop(img, rrc.crop);
  out.mask = apply_crop_mask(mask, rrc.crop);

  if (cfg.hflip_prob > 0 && rng.bernoulli(cfg.hflip_prob)) {
    hflip_inplace(out.view);
    hflip_inplace(out.mask);
  }

  if (cfg.jitter_strength > 0) {
    const double s = cfg.jitter_strength;
    const double b = rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s);
    for (auto& v : out.view.data) {
      v = static_cast<float>(std::clamp(b * v, 0.0, 1.0));
    }
    const double ctr = rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s);
    const double mean = luminance_mean(out.view);
    for (auto& v : out.view.data) {
      v = static_cast<float>(std::clamp(mean + ctr * (v - mean), 0.0, 1.0));
    }
  }

  if (rng.bernoulli(kGrayscaleProb) && out.view.channels == 3) {
    for (int y = 0; y < out.view.height; ++y) {
      for (int x = 0; x < out.view.width; ++x) {
        const double g = 0.299 * out.view.at(y, x, 0) +
                         0.587 * out.view.at(y, x, 1) +
                         0.114 * out.view.at(y, x, 2);
        const float gf = static_cast<float>(std::clamp(g, 0.0, 1.0));
        out.view.at(y, x, 0) = gf;
        out.view.at(y, x, 1) = gf;
        out.view.at(y, x, 2) = gf;
      }
    }
  }
  return out;
}

Image apply_bg_rm(const Image& view, const Mask& mask, Rng& rng,
                  double p_remove, bool* applied, Image* bg_used) {
  if (p_remove < 0 || p_remove > 1) {
    throw ConfigError("apply_bg_rm: p_remove outside [0,1]");
  }
  if (applied) *applied = false;
  if (p_remove <= 0 || !rng.bernoulli(p_remove)) return view;
  const float intensity = static_cast<float>(rng.uniform());
  if (applied) *applied = true;
  if (bg_used) {
    *bg_used = Image(view.height, view.width, view.channels, intensity);
  }
  return fill_grayscale(view, mask, intensity);
}

Image apply_bg_random(const Image& view, const Mask& mask,
                      const Image* donor_tiled, Rng& rng, double p,
                      const AugConfig& cfg, bool* applied, Image* bg_used,
                      bool* rm_fallback) {
  if (p < 0 || p > 1) {
    throw ConfigError("apply_bg_random: p outside [0,1]");
  }
  if (applied) *applied = false;
  if (rm_fallback) *rm_fallback = false;
  if (p <= 0 || !rng.bernoulli(p)) return view;
  if (applied) *applied = true;

  if (donor_tiled == nullptr) {
    // no donor available: behave like background removal
    if (rm_fallback) *rm_fallback = true;
    const float intensity = static_cast<float>(rng.uniform());
    if (bg_used) {
      *bg_used = Image(view.height, view.width, view.channels, intensity);
    }
    return fill_grayscale(view, mask, intensity);
  }

  RrcResult rrc = sample_rrc(rng, donor_tiled->height, donor_tiled->width,
                             cfg.scale, kRrcRatio, nullptr, 0.0,
                             cfg.max_tries, view.height, view.width);
  Image bg = apply_crop(*donor_tiled, rrc.crop);
  Image out = composite(view, mask, bg);
  if (bg_used) *bg_used = std::move(bg);
  return out;
}

Mask corrupt_mask_if_configured(const Mask& mask, Mask::Box fg_bbox, Rng& rng,
                                const AugConfig& cfg) {
  if (!cfg.corruption.has_value()) return mask;
  MaskTransform t = sample_mask_corruption(rng, *cfg.corruption,
                                           fg_bbox.width, fg_bbox.height);
  return transform_mask(mask, t);
}

namespace {

struct BgOutcome {
  bool applied = false;
  std::int64_t donor_id = -1;
  Image bg_image;
  bool rm_fallback = false;
  double gate_uniform = -1.0;
};

// one view's background stage; donor_pool excludes the sample itself and,
// for the forced-distinct case, the other view's donor
BgOutcome bg_stage(Image& view, const Mask& vmask, Rng& rng,
                   const AugConfig& cfg,
                   const std::vector<const Sample*>& donor_pool,
                   std::int64_t exclude_donor) {
  BgOutcome o;
  if (cfg.mode == AugMode::kBgRm) {
    o.gate_uniform = rng.uniform();
    if (o.gate_uniform < cfg.p_remove) {
      const float intensity = static_cast<float>(rng.uniform());
      o.applied = true;
      o.bg_image = Image(view.height, view.width, view.channels, intensity);
      view = fill_grayscale(view, vmask, intensity);
    }
    return o;
  }
  // bg_random / bg_swaps
  o.gate_uniform = rng.uniform();
  if (o.gate_uniform >= cfg.p_pos) return o;
  o.applied = true;

  std::vector<const Sample*> pool;
  pool.reserve(donor_pool.size());
  for (const Sample* d : donor_pool) {
    if (d->id != exclude_donor) pool.push_back(d);
  }
  if (pool.empty()) {
    o.rm_fallback = true;
    const float intensity = static_cast<float>(rng.uniform());
    o.bg_image = Image(view.height, view.width, view.channels, intensity);
    view = fill_grayscale(view, vmask, intensity);
    return o;
  }
  const Sample* donor = pool[rng.uniform_index(pool.size())];
  o.donor_id = donor->id;
  RrcResult rrc = sample_rrc(rng, donor->tiled_bg.height,
                             donor->tiled_bg.width, cfg.scale, kRrcRatio,
                             nullptr, 0.0, cfg.max_tries, view.height,
                             view.width);
  o.bg_image = apply_crop(donor->tiled_bg, rrc.crop);
  view = composite(view, vmask, o.bg_image);
  return o;
}

}  // namespace

ViewPair make_view_pair(const Sample& sample,
                        const std::vector<const Sample*>& batch,
                        std::uint64_t seed, std::uint64_t epoch,
                        const AugConfig& cfg) {
  const auto id = static_cast<std::uint64_t>(sample.id);
  Rng rng_cq = derive_rng(seed, epoch, id, Stream::kCorruptionQuery);
  Rng rng_ck = derive_rng(seed, epoch, id, Stream::kCorruptionKey);
  Rng rng_q = derive_rng(seed, epoch, id, Stream::kQueryView);
  Rng rng_k = derive_rng(seed, epoch, id, Stream::kKeyView);
  Rng rng_bg = derive_rng(seed, epoch, id, Stream::kBgDecision);

  const Mask::Box bbox = sample.mask.bounding_box();
  // fresh corruption per view, drawn before any background work
  Mask mask_q = corrupt_mask_if_configured(sample.mask, bbox, rng_cq, cfg);
  Mask mask_k = corrupt_mask_if_configured(sample.mask, bbox, rng_ck, cfg);

  ViewResult q = standard_view(sample.image, mask_q, rng_q, cfg);
  ViewResult k = standard_view(sample.image, mask_k, rng_k, cfg);

  ViewPair pair;
  pair.k_std_view = k.view;
  pair.q_mask = std::move(q.mask);
  pair.k_mask = std::move(k.mask);
  pair.q_view = std::move(q.view);
  pair.k_view = std::move(k.view);

  if (cfg.mode == AugMode::kNone) return pair;

  std::vector<const Sample*> donors;
  donors.reserve(batch.size());
  for (const Sample* b : batch) {
    if (b->id != sample.id) donors.push_back(b);
  }

  if (cfg.aug_in_query) {
    BgOutcome o = bg_stage(pair.q_view, pair.q_mask, rng_bg, cfg, donors, -1);
    pair.q_was_bg_augmented = o.applied;
    pair.q_bg_donor = o.donor_id;
    pair.rm_fallback = pair.rm_fallback || o.rm_fallback;
    if (o.applied) pair.q_bg_image = std::move(o.bg_image);
  }
  if (cfg.aug_in_key) {
    // in bg_swaps mode a key that lands on the query's donor would defeat
    // the distinct-backgrounds guarantee, so that donor is excluded
    const std::int64_t exclude =
        (cfg.mode == AugMode::kBgSwaps && pair.q_was_bg_augmented)
            ? pair.q_bg_donor
            : -1;
    BgOutcome o =
        bg_stage(pair.k_view, pair.k_mask, rng_bg, cfg, donors, exclude);
    pair.k_was_bg_augmented = o.applied;
    pair.k_bg_donor = o.donor_id;
    pair.rm_fallback = pair.rm_fallback || o.rm_fallback;
    pair.k_gate_uniform = o.gate_uniform;
    if (o.applied) pair.k_bg_image = std::move(o.bg_image);
  }
  return pair;
}

Image make_matched_negative(const Sample& q_sample, const ViewPair& q_pair,
                            const Sample& donor, Rng& rng,
                            const AugConfig& cfg) {
  (void)rng;  // reserved; both constructions are deterministic given inputs
  if (donor.id == q_sample.id) {
    throw ConfigError("make_matched_negative: donor equals query sample");
  }
  if (cfg.neg_construction == NegConstruction::kLiteralFormula) {
    return composite(q_sample.image, q_sample.mask, donor.image);
  }
  const bool use_key = cfg.match_target == MatchTarget::kPositive;
  const bool augmented =
      use_key ? q_pair.k_was_bg_augmented : q_pair.q_was_bg_augmented;
  const Image& bg = augmented
                        ? (use_key ? q_pair.k_bg_image : q_pair.q_bg_image)
                        : q_sample.tiled_bg;
  return composite(donor.image, donor.mask, bg);
}

}  // namespace bgaug
