#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "bgaug/dataset.hpp"
#include "bgaug/image.hpp"
#include "bgaug/rng.hpp"

namespace bgaug {

enum class AugMode { kNone, kBgRm, kBgRandom, kBgSwaps };

// whose background the matched negative copies
enum class MatchTarget { kQuery, kPositive };

// paste_fg_on_query_bg: donor foreground pasted onto the query's background
// (different foreground, matched background). literal_formula: the query's
// own foreground pasted onto the donor image.
enum class NegConstruction { kPasteFgOnQueryBg, kLiteralFormula };

struct AugConfig {
  AugMode mode = AugMode::kNone;
  double p_pos = 0.2;     // per-view background randomization probability
  double p_neg = 0.2;     // matched-negative inclusion probability
  double p_remove = 0.2;  // background removal probability (bg_rm)
  double fg_min = 0.1;    // min fraction of foreground a crop must keep
  int max_tries = 10;
  std::optional<MaskCorruption> corruption;
  bool aug_in_query = true;
  bool aug_in_key = true;
  // when false, the queue receives embeddings of the key view from before
  // background augmentation, so augmented images are never reused as
  // negatives in later batches
  bool enqueue_augmented_keys = true;
  MatchTarget match_target = MatchTarget::kQuery;
  // when true, the matched-negative gate reuses the key view's background
  // gate draw instead of an independent stream
  bool couple_neg_to_key = false;
  int n_matched = 1;  // matched negatives appended when the gate fires
  NegConstruction neg_construction = NegConstruction::kPasteFgOnQueryBg;
  std::pair<double, double> scale{0.2, 1.0};  // RRC area range
  double hflip_prob = 0.5;
  double jitter_strength = 0.4;
};

// fixed parts of the standard augmentation suite
constexpr double kGrayscaleProb = 0.2;
constexpr std::pair<double, double> kRrcRatio{3.0 / 4.0, 4.0 / 3.0};

struct ViewResult {
  Image view;
  Mask mask;  // view-aligned (cropped and flipped with the image)
};

// RRC (foreground-constrained) -> horizontal flip -> brightness/contrast
// jitter -> grayscale with probability 0.2. Gates with probability zero and
// jitter with strength zero consume no draws.
ViewResult standard_view(const Image& img, const Mask& mask, Rng& rng,
                         const AugConfig& cfg);

// With probability p_remove, replace the background with a uniform-random
// grayscale intensity. `applied`/`bg_used` report what happened.
Image apply_bg_rm(const Image& view, const Mask& mask, Rng& rng,
                  double p_remove, bool* applied = nullptr,
                  Image* bg_used = nullptr);

// With probability p, replace the background with a fresh unconstrained RRC
// crop of the donor's tiled background. A null donor (batch of one) falls
// back to the grayscale fill and sets rm_fallback.
Image apply_bg_random(const Image& view, const Mask& mask,
                      const Image* donor_tiled, Rng& rng, double p,
                      const AugConfig& cfg, bool* applied = nullptr,
                      Image* bg_used = nullptr, bool* rm_fallback = nullptr);

struct ViewPair {
  Image q_view;
  Image k_view;
  Mask q_mask;  // view-aligned masks
  Mask k_mask;
  Image k_std_view;  // key view before background augmentation
  std::int64_t q_bg_donor = -1;  // donor sample ids, -1 = none
  std::int64_t k_bg_donor = -1;
  bool q_was_bg_augmented = false;
  bool k_was_bg_augmented = false;
  Image q_bg_image;  // background the view received, set when augmented
  Image k_bg_image;
  bool rm_fallback = false;       // donor unavailable, grayscale fill used
  double k_gate_uniform = -1.0;   // key gate draw, <0 when never drawn
};

// Builds both views of one sample. Every random decision comes from streams
// derived from (seed, epoch, sample.id), so the result is independent of
// batch iteration order and worker count. In bg_swaps mode, when both views
// get new backgrounds their donors are forced distinct.
ViewPair make_view_pair(const Sample& sample,
                        const std::vector<const Sample*>& batch,
                        std::uint64_t seed, std::uint64_t epoch,
                        const AugConfig& cfg);

// Background-matched negative. Default: donor foreground over the query's
// current background (the donor background it received if augmented, else
// its tiled background); match_target=positive uses the key view's
// background instead. Literal mode: query foreground over the donor image.
// All inputs must share dimensions with the views.
Image make_matched_negative(const Sample& q_sample, const ViewPair& q_pair,
                            const Sample& donor, Rng& rng,
                            const AugConfig& cfg);

// Fresh corruption draw on every call when cfg.corruption is set.
Mask corrupt_mask_if_configured(const Mask& mask, Mask::Box fg_bbox, Rng& rng,
                                const AugConfig& cfg);

}  // namespace bgaug
