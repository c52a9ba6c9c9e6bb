#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ferkd/records.hpp"
#include "ferkd/rng.hpp"
#include "ferkd/softlabel.hpp"

namespace ferkd {

// Position of a crop inside the sequence handed to plan_selfmix.
struct CropKey {
  std::string image_id;
  std::size_t index = 0;

  bool operator==(const CropKey&) const = default;
};

// Paste region of crop_b into crop_a. paste_box is in crop-local normalized
// coordinates and may have zero area; lambda_eff is the weight of crop_a's label.
struct MixPlan {
  CropKey crop_a;
  CropKey crop_b;
  BBox paste_box;
  double lambda_drawn = 1.0;
  double lambda_eff = 1.0;
};

// Square box of area 1 - lambda centred at (cx, cy), clipped to the unit square.
BBox paste_box_for(double lambda, double cx, double cy);

// Pairs the non-UR crops of each image (seeded shuffle, then adjacent pairs;
// an odd one out stays unmixed) and draws lambda ~ Beta(alpha, alpha) per pair.
// Crops of different images are never paired. Images with fewer than two
// eligible crops contribute nothing.
std::vector<MixPlan> plan_selfmix(std::span<const CropRecord> crops, CounterRng& rng, double beta_alpha = 1.0);

SoftLabel mix_labels(const SoftLabel& y_a, const SoftLabel& y_b, double lambda_eff);

// Interleaved H x W x channels float pixels.
struct ImageTile {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  ImageTile() = default;
  ImageTile(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  bool operator==(const ImageTile&) const = default;
};

struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open

  int area() const noexcept { return (x1 - x0) * (y1 - y0); }
};

// Rounds a normalized box to pixel edges of an H x W grid.
PixelRect to_pixel_rect(const BBox& box, int height, int width);

// Copy of pix_a with the paste_box region taken from pix_b.
ImageTile mix_pixels(const ImageTile& pix_a, const ImageTile& pix_b, const BBox& paste_box);

}  // namespace ferkd
