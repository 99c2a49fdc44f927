#pragma once

#include <cstdint>

#include "core/image.hpp"
#include "core/rng.hpp"

namespace fsr {

// The seven transform families, applied in a fixed order: flip, rotate,
// scale, random crop, center crop, brightness, contrast, hue. Each is
// gated by its flag (and probability, for flips); draws come from a
// per-access stream so results are reproducible.
struct AugmentationPolicy {
  bool hflip_enabled = true;
  double hflip_prob = 0.5;
  bool vflip_enabled = true;
  double vflip_prob = 0.5;
  bool rotation_enabled = true;
  double rotation_degrees = 15.0;  // drawn in [-range, +range]
  bool scale_enabled = true;
  double scale_min = 0.8, scale_max = 1.2;
  bool random_crop_enabled = true;
  double crop_fraction = 0.9;  // crop side fraction, then resize back
  bool center_crop_enabled = false;
  bool brightness_enabled = true;
  double brightness_min = 0.8, brightness_max = 1.2;
  bool contrast_enabled = true;
  double contrast_min = 0.8, contrast_max = 1.2;
  bool hue_enabled = true;
  double hue_shift = 0.05;  // fraction of the hue circle, drawn in [-s, +s]
  std::uint64_t rng_seed = 0;

  static AugmentationPolicy disabled();
  bool any_enabled() const;
  void validate() const;
};

// Stream for one (sample, epoch) access; the same triple always yields
// the same augmented pixels.
SplitMix64 augmentation_stream(const AugmentationPolicy& policy, std::size_t sample_index,
                               int epoch_index);

// Label and shape are preserved; pixels stay in [0,1].
ImageSample augment_sample(const ImageSample& s, const AugmentationPolicy& policy, SplitMix64& draw);

}  // namespace fsr
