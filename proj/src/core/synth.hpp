#pragma once

#include <cstdint>
#include <string>

#include "core/dataset.hpp"
#include "core/image.hpp"

namespace fsr {

enum class TextureFamily { Concrete, Soil, Rock };

TextureFamily family_from_string(const std::string& s);
std::string to_string(TextureFamily family);

// Procedural labeled crack images: a seeded value-noise background per
// texture family, plus (for the cracked class) a rasterized random-walk
// polyline at the configured width and darkness. Pure in
// (config, label, index).
struct CrackGenConfig {
  int side = 64;
  TextureFamily background = TextureFamily::Concrete;
  int crack_walk_steps = 96;
  double crack_width_min = 1.5;
  double crack_width_max = 3.0;
  double crack_darkness = 0.5;   // contrast drop at the crack core
  double noise_amplitude = 0.06;
  std::uint64_t seed = 0;

  void validate() const;
};

ImageSample generate_crack_image(const CrackGenConfig& cfg, int label, int index);

// 2*n_per_class samples: all cracked (index order), then all uncracked.
Dataset generate_dataset(const CrackGenConfig& cfg, int n_per_class, const std::string& name = "");

}  // namespace fsr
