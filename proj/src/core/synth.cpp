#include "core/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "core/rng.hpp"

namespace fsr {

TextureFamily family_from_string(const std::string& s) {
  if (s == "concrete") return TextureFamily::Concrete;
  if (s == "soil") return TextureFamily::Soil;
  if (s == "rock") return TextureFamily::Rock;
  throw std::invalid_argument("unknown texture family: " + s);
}

std::string to_string(TextureFamily family) {
  switch (family) {
    case TextureFamily::Concrete: return "concrete";
    case TextureFamily::Soil: return "soil";
    case TextureFamily::Rock: return "rock";
  }
  throw std::logic_error("bad texture family");
}

void CrackGenConfig::validate() const {
  if (side < 8) throw std::invalid_argument("crack generator: side must be at least 8");
  if (crack_walk_steps * 2 < side)
    throw std::invalid_argument("crack generator: walk of " + std::to_string(crack_walk_steps) +
                                " steps cannot reach the required length side/2");
  if (crack_width_min <= 0.0 || crack_width_max < crack_width_min)
    throw std::invalid_argument("crack generator: width range must be positive and ordered");
  if (crack_darkness <= 0.0 || crack_darkness > 1.0)
    throw std::invalid_argument("crack generator: darkness must be in (0,1]");
  if (noise_amplitude < 0.0 || noise_amplitude > 1.0)
    throw std::invalid_argument("crack generator: noise amplitude must be in [0,1]");
}

namespace {

struct Rgb {
  float r, g, b;
};

Rgb base_color(TextureFamily family) {
  switch (family) {
    case TextureFamily::Concrete: return {0.64f, 0.63f, 0.61f};
    case TextureFamily::Soil: return {0.55f, 0.40f, 0.26f};
    case TextureFamily::Rock: return {0.47f, 0.45f, 0.42f};
  }
  return {0.5f, 0.5f, 0.5f};
}

// Bilinearly interpolated lattice of uniform values in [-1,1].
class ValueNoise {
 public:
  ValueNoise(SplitMix64& rng, int side, int cell) : cell_(cell), cols_(side / cell + 2) {
    lattice_.resize(static_cast<std::size_t>(cols_) * cols_);
    for (float& v : lattice_) v = static_cast<float>(rng.next_in(-1.0, 1.0));
  }

  float at(int x, int y) const {
    const float fx = static_cast<float>(x) / cell_, fy = static_cast<float>(y) / cell_;
    const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
    const float wx = fx - x0, wy = fy - y0;
    auto lat = [&](int i, int j) { return lattice_[static_cast<std::size_t>(j) * cols_ + i]; };
    const float top = lat(x0, y0) * (1.0f - wx) + lat(x0 + 1, y0) * wx;
    const float bot = lat(x0, y0 + 1) * (1.0f - wx) + lat(x0 + 1, y0 + 1) * wx;
    return top * (1.0f - wy) + bot * wy;
  }

 private:
  int cell_, cols_;
  std::vector<float> lattice_;
};

}  // namespace

ImageSample generate_crack_image(const CrackGenConfig& cfg, int label, int index) {
  cfg.validate();
  SplitMix64 rng(mix_seed(cfg.seed, label == 1 ? 0x43521ULL : 0x55221ULL,
                          static_cast<std::uint64_t>(index)));
  const int side = cfg.side;
  const Rgb base = base_color(cfg.background);
  const float tint_r = static_cast<float>(rng.next_in(-0.03, 0.03));
  const float tint_g = static_cast<float>(rng.next_in(-0.03, 0.03));
  const float tint_b = static_cast<float>(rng.next_in(-0.03, 0.03));

  ValueNoise coarse(rng, side, std::max(2, side / 8));
  ValueNoise fine(rng, side, std::max(2, side / 16));
  const float amp = static_cast<float>(cfg.noise_amplitude);

  FloatImage img;
  img.width = img.height = side;
  img.rgb.resize(static_cast<std::size_t>(side) * side * 3);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const float n = amp * (0.6f * coarse.at(x, y) + 0.25f * fine.at(x, y) +
                             0.15f * static_cast<float>(rng.next_in(-1.0, 1.0)));
      img.at(x, y, 0) = base.r + tint_r + n;
      img.at(x, y, 1) = base.g + tint_g + n;
      img.at(x, y, 2) = base.b + tint_b + n;
    }

  if (label == 1) {
    // accumulate the strongest darkening factor per pixel, then apply once
    std::vector<float> mask(static_cast<std::size_t>(side) * side, 0.0f);
    const double radius = rng.next_in(cfg.crack_width_min, cfg.crack_width_max) * 0.5;
    double px = rng.next_in(side * 0.2, side * 0.8);
    double py = rng.next_in(side * 0.2, side * 0.8);
    double heading = rng.next_in(0.0, 2.0 * 3.14159265358979323846);
    for (int step = 0; step < cfg.crack_walk_steps; ++step) {
      heading += rng.next_in(-0.35, 0.35);
      px += std::cos(heading);
      py += std::sin(heading);
      if (px < 1.0 || px > side - 2.0) {
        heading = 3.14159265358979323846 - heading;
        px = std::clamp(px, 1.0, side - 2.0);
      }
      if (py < 1.0 || py > side - 2.0) {
        heading = -heading;
        py = std::clamp(py, 1.0, side - 2.0);
      }
      const int x0 = std::max(0, static_cast<int>(px - radius - 1));
      const int x1 = std::min(side - 1, static_cast<int>(px + radius + 1));
      const int y0 = std::max(0, static_cast<int>(py - radius - 1));
      const int y1 = std::min(side - 1, static_cast<int>(py + radius + 1));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double d = std::hypot(x - px, y - py);
          if (d > radius) continue;
          // flat core out to half the radius, tapering toward the edge
          const double taper = d <= radius * 0.5 ? 1.0 : 1.0 - (d / radius - 0.5);
          const float f = static_cast<float>(cfg.crack_darkness * taper);
          float& m = mask[static_cast<std::size_t>(y) * side + x];
          m = std::max(m, f);
        }
    }
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        const float keep = 1.0f - mask[static_cast<std::size_t>(y) * side + x];
        for (int c = 0; c < 3; ++c) img.at(x, y, c) *= keep;
      }
  }

  char id[64];
  std::snprintf(id, sizeof(id), "%s/%s_%06d.png", label == 1 ? "cracked" : "uncracked",
                to_string(cfg.background).c_str(), index);
  return to_sample(img, label, id);
}

Dataset generate_dataset(const CrackGenConfig& cfg, int n_per_class, const std::string& name) {
  if (n_per_class < 1) throw std::invalid_argument("generate_dataset: n_per_class must be >= 1");
  Dataset ds(name.empty() ? to_string(cfg.background) : name, cfg.side);
  for (int i = 0; i < n_per_class; ++i)
    ds.add(std::make_shared<ImageSample>(generate_crack_image(cfg, 1, i)));
  for (int i = 0; i < n_per_class; ++i)
    ds.add(std::make_shared<ImageSample>(generate_crack_image(cfg, 0, i)));
  return ds;
}

}  // namespace fsr
