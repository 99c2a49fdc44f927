#include "core/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fsr {

AugmentationPolicy AugmentationPolicy::disabled() {
  AugmentationPolicy p;
  p.hflip_enabled = p.vflip_enabled = p.rotation_enabled = p.scale_enabled = false;
  p.random_crop_enabled = p.center_crop_enabled = false;
  p.brightness_enabled = p.contrast_enabled = p.hue_enabled = false;
  return p;
}

bool AugmentationPolicy::any_enabled() const {
  return hflip_enabled || vflip_enabled || rotation_enabled || scale_enabled ||
         random_crop_enabled || center_crop_enabled || brightness_enabled || contrast_enabled ||
         hue_enabled;
}

void AugmentationPolicy::validate() const {
  auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob_ok(hflip_prob) || !prob_ok(vflip_prob))
    throw std::invalid_argument("augmentation: flip probabilities must be in [0,1]");
  if (rotation_degrees < 0.0)
    throw std::invalid_argument("augmentation: rotation range must be non-negative");
  if (scale_min <= 0.0 || scale_max < scale_min)
    throw std::invalid_argument("augmentation: scale range must be positive and ordered");
  if (crop_fraction <= 0.0 || crop_fraction > 1.0)
    throw std::invalid_argument("augmentation: crop fraction must be in (0,1]");
  if (brightness_min <= 0.0 || brightness_max < brightness_min)
    throw std::invalid_argument("augmentation: brightness range must be positive and ordered");
  if (contrast_min <= 0.0 || contrast_max < contrast_min)
    throw std::invalid_argument("augmentation: contrast range must be positive and ordered");
  if (hue_shift < 0.0 || hue_shift > 0.5)
    throw std::invalid_argument("augmentation: hue shift must be in [0,0.5]");
}

SplitMix64 augmentation_stream(const AugmentationPolicy& policy, std::size_t sample_index,
                               int epoch_index) {
  return SplitMix64(mix_seed(policy.rng_seed, sample_index, static_cast<std::uint64_t>(epoch_index)));
}

namespace {

void flip_horizontal(FloatImage& img) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width / 2; ++x)
      for (int c = 0; c < 3; ++c) std::swap(img.at(x, y, c), img.at(img.width - 1 - x, y, c));
}

void flip_vertical(FloatImage& img) {
  for (int y = 0; y < img.height / 2; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) std::swap(img.at(x, y, c), img.at(x, img.height - 1 - y, c));
}

// Bilinear sample with edge replication.
float sample_clamped(const FloatImage& img, float x, float y, int c) {
  x = std::clamp(x, 0.0f, static_cast<float>(img.width - 1));
  y = std::clamp(y, 0.0f, static_cast<float>(img.height - 1));
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const float wx = x - x0, wy = y - y0;
  const float top = img.at(x0, y0, c) * (1.0f - wx) + img.at(x1, y0, c) * wx;
  const float bot = img.at(x0, y1, c) * (1.0f - wx) + img.at(x1, y1, c) * wx;
  return top * (1.0f - wy) + bot * wy;
}

FloatImage rotate(const FloatImage& img, double degrees) {
  const float rad = static_cast<float>(degrees * 3.14159265358979323846 / 180.0);
  const float cs = std::cos(rad), sn = std::sin(rad);
  const float cx = (img.width - 1) * 0.5f, cy = (img.height - 1) * 0.5f;
  FloatImage out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float dx = x - cx, dy = y - cy;
      const float sx = cs * dx + sn * dy + cx;  // inverse rotation
      const float sy = -sn * dx + cs * dy + cy;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = sample_clamped(img, sx, sy, c);
    }
  return out;
}

FloatImage zoom(const FloatImage& img, double factor) {
  const float inv = static_cast<float>(1.0 / factor);
  const float cx = (img.width - 1) * 0.5f, cy = (img.height - 1) * 0.5f;
  FloatImage out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float sx = (x - cx) * inv + cx;
      const float sy = (y - cy) * inv + cy;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = sample_clamped(img, sx, sy, c);
    }
  return out;
}

FloatImage crop_resize(const FloatImage& img, int ox, int oy, int crop_side) {
  FloatImage crop;
  crop.width = crop.height = crop_side;
  crop.rgb.resize(static_cast<std::size_t>(crop_side) * crop_side * 3);
  for (int y = 0; y < crop_side; ++y)
    for (int x = 0; x < crop_side; ++x)
      for (int c = 0; c < 3; ++c) crop.at(x, y, c) = img.at(x + ox, y + oy, c);
  return resize_bilinear(crop, img.width, img.height);
}

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  v = mx;
  const float d = mx - mn;
  s = mx == 0.0f ? 0.0f : d / mx;
  if (d == 0.0f) {
    h = 0.0f;
  } else if (mx == r) {
    h = (g - b) / d / 6.0f;
  } else if (mx == g) {
    h = (2.0f + (b - r) / d) / 6.0f;
  } else {
    h = (4.0f + (r - g) / d) / 6.0f;
  }
  if (h < 0.0f) h += 1.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  h = h - std::floor(h);
  const float hh = h * 6.0f;
  const int i = std::min(5, static_cast<int>(hh));
  const float f = hh - i;
  const float p = v * (1.0f - s);
  const float q = v * (1.0f - s * f);
  const float t = v * (1.0f - s * (1.0f - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

void apply_hue(FloatImage& img, double shift) {
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    float h, s, v;
    rgb_to_hsv(img.rgb[i], img.rgb[i + 1], img.rgb[i + 2], h, s, v);
    hsv_to_rgb(h + static_cast<float>(shift), s, v, img.rgb[i], img.rgb[i + 1], img.rgb[i + 2]);
  }
}

}  // namespace

ImageSample augment_sample(const ImageSample& s, const AugmentationPolicy& policy, SplitMix64& draw) {
  policy.validate();
  if (!policy.any_enabled()) return s;

  FloatImage img = to_float(s);
  const int side = s.side;

  if (policy.hflip_enabled && draw.next_bernoulli(policy.hflip_prob)) flip_horizontal(img);
  if (policy.vflip_enabled && draw.next_bernoulli(policy.vflip_prob)) flip_vertical(img);
  if (policy.rotation_enabled)
    img = rotate(img, draw.next_in(-policy.rotation_degrees, policy.rotation_degrees));
  if (policy.scale_enabled) img = zoom(img, draw.next_in(policy.scale_min, policy.scale_max));
  if (policy.random_crop_enabled) {
    const int crop_side = std::max(1, static_cast<int>(std::lround(policy.crop_fraction * side)));
    const int margin = side - crop_side;
    const int ox = static_cast<int>(draw.next_below(static_cast<std::uint64_t>(margin) + 1));
    const int oy = static_cast<int>(draw.next_below(static_cast<std::uint64_t>(margin) + 1));
    img = crop_resize(img, ox, oy, crop_side);
  }
  if (policy.center_crop_enabled) {
    const int crop_side = std::max(1, static_cast<int>(std::lround(policy.crop_fraction * side)));
    const int off = (side - crop_side) / 2;
    img = crop_resize(img, off, off, crop_side);
  }
  if (policy.brightness_enabled) {
    const float f = static_cast<float>(draw.next_in(policy.brightness_min, policy.brightness_max));
    for (float& v : img.rgb) v *= f;
  }
  if (policy.contrast_enabled) {
    const float f = static_cast<float>(draw.next_in(policy.contrast_min, policy.contrast_max));
    double mean = 0.0;
    for (std::size_t i = 0; i < img.rgb.size(); i += 3)
      mean += 0.299 * img.rgb[i] + 0.587 * img.rgb[i + 1] + 0.114 * img.rgb[i + 2];
    const float m = static_cast<float>(mean / (img.rgb.size() / 3));
    for (float& v : img.rgb) v = m + f * (v - m);
  }
  if (policy.hue_enabled) apply_hue(img, draw.next_in(-policy.hue_shift, policy.hue_shift));

  for (float& v : img.rgb) v = std::clamp(v, 0.0f, 1.0f);
  return to_sample(img, s.label, s.source_id);
}

}  // namespace fsr
