#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bgaug/dataset.hpp"
#include "bgaug/rng.hpp"

namespace bgaug {

// Shapes-on-textures generator with a tunable foreground->background
// correlation. Backgrounds are spuriously predictive of the label at
// correlation rho on the train side; test backgrounds are independent.
struct SynthConfig {
  int n_fg_classes = 4;   // K
  int n_bg_classes = 4;   // B
  int image_size = 32;
  double correlation = 0.95;  // rho, train-side P(bg = paired(fg))
  int n_train = 2000;
  int n_test = 500;
  std::uint64_t seed = 1;
};

// paired background class for a foreground class
inline int paired_bg(int fg_class, int n_bg_classes) {
  return fg_class % n_bg_classes;
}

// Renders one sample: class-keyed shape (disc/square/triangle/cross/annulus/
// bar, cycled) over a class-keyed texture (stripes/checker/gradient/noise,
// cycled). The mask is the exact shape support and its area fraction is kept
// inside [0.05, 0.6] by redrawing the placement.
Sample gen_sample(Rng& rng, int fg_class, int bg_class, int size);

struct GeneratedData {
  Dataset train;
  Dataset test;
};
GeneratedData gen_dataset(const SynthConfig& cfg);

struct ChallengeSplit {
  std::string name;
  std::vector<Image> images;
  std::vector<int> labels;
  // set when a Mixed-Same / Mixed-Next donor class had no other member and
  // the sample fell back to its own tiled background
  int donor_fallbacks = 0;
};

// The seven evaluation splits, in this order:
//   Original, Only-FG, Only-BG-B, Only-BG-T, Mixed-Same, Mixed-Rand,
//   Mixed-Next
// Donor pairing is a pure function of (split_seed, sample id).
std::vector<ChallengeSplit> gen_challenge_splits(const Dataset& test,
                                                 std::uint64_t split_seed);

std::string synth_config_to_json(const SynthConfig& cfg);

// rejects unknown keys by name (ConfigError)
SynthConfig synth_config_from_json(const std::string& text);

}  // namespace bgaug
