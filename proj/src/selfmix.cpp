#include "ferkd/selfmix.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "ferkd/error.hpp"

namespace ferkd {

BBox paste_box_for(double lambda, double cx, double cy) {
  const double side = std::sqrt(std::clamp(1.0 - lambda, 0.0, 1.0));
  const double x0 = std::clamp(cx - side / 2.0, 0.0, 1.0);
  const double x1 = std::clamp(cx + side / 2.0, 0.0, 1.0);
  const double y0 = std::clamp(cy - side / 2.0, 0.0, 1.0);
  const double y1 = std::clamp(cy + side / 2.0, 0.0, 1.0);
  return BBox{static_cast<float>(x0), static_cast<float>(y0), static_cast<float>(x1 - x0),
              static_cast<float>(y1 - y0)};
}

std::vector<MixPlan> plan_selfmix(std::span<const CropRecord> crops, CounterRng& rng, double beta_alpha) {
  if (!(beta_alpha > 0.0)) throw Error(ErrorKind::parameter, "beta_alpha must be positive");

  std::vector<std::string> image_order;
  std::unordered_map<std::string, std::vector<std::size_t>> eligible;
  for (std::size_t i = 0; i < crops.size(); ++i) {
    const auto& rec = crops[i];
    if (rec.status == CropStatus::UR) continue;
    auto [it, inserted] = eligible.try_emplace(rec.image_id);
    if (inserted) image_order.push_back(rec.image_id);
    it->second.push_back(i);
  }

  std::vector<MixPlan> plans;
  for (const auto& id : image_order) {
    auto& members = eligible[id];
    if (members.size() < 2) continue;
    rng.shuffle(std::span(members));
    for (std::size_t p = 0; p + 1 < members.size(); p += 2) {
      MixPlan plan;
      plan.crop_a = CropKey{id, members[p]};
      plan.crop_b = CropKey{id, members[p + 1]};
      plan.lambda_drawn = rng.beta(beta_alpha, beta_alpha);
      const double cx = rng.uniform();
      const double cy = rng.uniform();
      plan.paste_box = paste_box_for(plan.lambda_drawn, cx, cy);
      plan.lambda_eff = 1.0 - plan.paste_box.area();
      plans.push_back(std::move(plan));
    }
  }
  return plans;
}

SoftLabel mix_labels(const SoftLabel& y_a, const SoftLabel& y_b, double lambda_eff) {
  if (y_a.num_classes() != y_b.num_classes()) throw Error(ErrorKind::shape, "mixed labels differ in class count");
  if (!(lambda_eff >= 0.0 && lambda_eff <= 1.0)) throw Error(ErrorKind::parameter, "lambda must be in [0, 1]");
  if (lambda_eff == 1.0) return y_a;
  if (lambda_eff == 0.0) return y_b;
  std::vector<double> out(y_a.num_classes());
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Equal inputs stay bit-identical.
    out[i] = y_a[i] == y_b[i] ? y_a[i] : lambda_eff * y_a[i] + (1.0 - lambda_eff) * y_b[i];
  }
  return SoftLabel(std::move(out));
}

PixelRect to_pixel_rect(const BBox& box, int height, int width) {
  constexpr double slack = 1e-6;
  const double x = box.x, y = box.y, w = box.w, h = box.h;
  if (!(x >= -slack && y >= -slack && w >= 0.0 && h >= 0.0 && x + w <= 1.0 + slack && y + h <= 1.0 + slack))
    throw Error(ErrorKind::parameter, "paste box lies outside the tile");
  PixelRect r;
  r.x0 = std::clamp(static_cast<int>(std::lround(x * width)), 0, width);
  r.x1 = std::clamp(static_cast<int>(std::lround((x + w) * width)), r.x0, width);
  r.y0 = std::clamp(static_cast<int>(std::lround(y * height)), 0, height);
  r.y1 = std::clamp(static_cast<int>(std::lround((y + h) * height)), r.y0, height);
  return r;
}

ImageTile mix_pixels(const ImageTile& pix_a, const ImageTile& pix_b, const BBox& paste_box) {
  if (pix_a.height != pix_b.height || pix_a.width != pix_b.width || pix_a.channels != pix_b.channels)
    throw Error(ErrorKind::shape, "mixed tiles differ in shape");
  const PixelRect r = to_pixel_rect(paste_box, pix_a.height, pix_a.width);
  ImageTile out = pix_a;
  for (int yy = r.y0; yy < r.y1; ++yy)
    for (int xx = r.x0; xx < r.x1; ++xx)
      for (int c = 0; c < out.channels; ++c) out.at(yy, xx, c) = pix_b.at(yy, xx, c);
  return out;
}

}  // namespace ferkd
