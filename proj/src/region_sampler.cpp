#include "ferkd/region_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ferkd/calibrator.hpp"
#include "ferkd/error.hpp"

namespace ferkd {

void SamplerConfig::validate() const {
  if (!(0.0 < scale_min && scale_min <= scale_max && scale_max <= 1.0))
    throw Error(ErrorKind::parameter, "scale bounds must satisfy 0 < min <= max <= 1");
  if (!(0.0 < ratio_min && ratio_min <= ratio_max))
    throw Error(ErrorKind::parameter, "ratio bounds must satisfy 0 < min <= max");
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw Error(ErrorKind::parameter, "hflip_prob must be in [0, 1]");
  if (max_attempts < 0) throw Error(ErrorKind::parameter, "max_attempts must be non-negative");
}

SampledCrop sample_crop(int image_w, int image_h, const SamplerConfig& cfg, CounterRng& rng) {
  if (image_w < 2 || image_h < 2)
    throw Error(ErrorKind::parameter, "image must be at least 2x2 pixels, got " + std::to_string(image_w) + "x" +
                                          std::to_string(image_h));
  cfg.validate();

  const double area = static_cast<double>(image_w) * image_h;
  const double log_lo = std::log(cfg.ratio_min);
  const double log_hi = std::log(cfg.ratio_max);

  long w = 0, h = 0, left = 0, top = 0;
  bool found = false;
  for (int attempt = 0; attempt < cfg.max_attempts && !found; ++attempt) {
    const double target = area * rng.uniform(cfg.scale_min, cfg.scale_max);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    w = std::lround(std::sqrt(target * aspect));
    h = std::lround(std::sqrt(target / aspect));
    if (w > 0 && h > 0 && w <= image_w && h <= image_h) {
      top = static_cast<long>(rng.below(static_cast<std::uint64_t>(image_h - h + 1)));
      left = static_cast<long>(rng.below(static_cast<std::uint64_t>(image_w - w + 1)));
      found = true;
    }
  }
  if (!found) {
    const double in_ratio = static_cast<double>(image_w) / image_h;
    if (in_ratio < cfg.ratio_min) {
      w = image_w;
      h = std::clamp(std::lround(w / cfg.ratio_min), 1L, static_cast<long>(image_h));
    } else if (in_ratio > cfg.ratio_max) {
      h = image_h;
      w = std::clamp(std::lround(h * cfg.ratio_max), 1L, static_cast<long>(image_w));
    } else {
      w = image_w;
      h = image_h;
    }
    top = (image_h - h) / 2;
    left = (image_w - w) / 2;
  }

  SampledCrop out;
  out.box = BBox{static_cast<float>(static_cast<double>(left) / image_w),
                 static_cast<float>(static_cast<double>(top) / image_h),
                 static_cast<float>(static_cast<double>(w) / image_w),
                 static_cast<float>(static_cast<double>(h) / image_h)};
  out.hflip = rng.uniform() < cfg.hflip_prob;
  return out;
}

std::vector<SampledCrop> sample_crops_per_image(std::size_t n, int image_w, int image_h,
                                                const SamplerConfig& cfg, CounterRng& rng) {
  if (n < 1) throw Error(ErrorKind::parameter, "need at least one crop per image");
  std::vector<SampledCrop> crops;
  crops.reserve(n);
  for (std::size_t i = 0; i < n; ++i) crops.push_back(sample_crop(image_w, image_h, cfg, rng));
  return crops;
}

CounterRng image_stream(const SamplerConfig& cfg, std::uint64_t image_index) {
  return CounterRng(cfg.seed, hash_combine(0x63726f70ULL, image_index));
}

std::string_view to_string(OrderMode mode) noexcept {
  switch (mode) {
    case OrderMode::random: return "random";
    case OrderMode::easy_to_hard: return "easy_to_hard";
    case OrderMode::hard_to_easy: return "hard_to_easy";
    case OrderMode::surgical: return "surgical";
  }
  return "?";
}

OrderMode parse_order_mode(std::string_view name) {
  for (auto m : {OrderMode::random, OrderMode::easy_to_hard, OrderMode::hard_to_easy, OrderMode::surgical})
    if (to_string(m) == name) return m;
  throw Error(ErrorKind::parameter, "unknown order mode '" + std::string(name) + "'");
}

std::size_t default_chunk(std::size_t n, std::size_t epochs) {
  if (epochs == 0) throw Error(ErrorKind::parameter, "epochs must be positive");
  return std::max<std::size_t>(1, (n + epochs - 1) / epochs);
}

std::vector<std::size_t> order_by_difficulty(std::span<const double> max_probs,
                                             std::span<const std::uint8_t> discarded, const OrderPolicy& policy,
                                             std::uint64_t epoch_seed) {
  if (max_probs.empty()) throw Error(ErrorKind::empty_input, "no records to order");
  if (policy.chunk < 1) throw Error(ErrorKind::parameter, "chunk must be at least 1");

  std::vector<std::size_t> order(max_probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(epoch_seed, 0x6f72646572ULL);

  switch (policy.mode) {
    case OrderMode::random:
      rng.shuffle(std::span(order));
      return order;
    case OrderMode::surgical: {
      if (discarded.size() != max_probs.size())
        throw Error(ErrorKind::state, "surgical ordering needs calibrated records");
      std::erase_if(order, [&](std::size_t i) { return discarded[i] != 0; });
      rng.shuffle(std::span(order));
      return order;
    }
    case OrderMode::easy_to_hard:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return max_probs[a] > max_probs[b]; });
      break;
    case OrderMode::hard_to_easy:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return max_probs[a] < max_probs[b]; });
      break;
  }
  for (std::size_t begin = 0; begin < order.size(); begin += policy.chunk) {
    const std::size_t end = std::min(order.size(), begin + policy.chunk);
    rng.shuffle(std::span(order).subspan(begin, end - begin));
  }
  return order;
}

std::vector<std::size_t> order_records(std::span<const CropRecord> records, const OrderPolicy& policy,
                                       std::uint64_t epoch_seed) {
  if (records.empty()) throw Error(ErrorKind::empty_input, "no records to order");
  std::vector<double> max_probs;
  std::vector<std::uint8_t> discarded;
  max_probs.reserve(records.size());
  const bool need_status = policy.mode == OrderMode::surgical;
  for (const auto& rec : records) {
    max_probs.push_back(policy.mode == OrderMode::random || need_status ? 0.0 : teacher_max_prob(rec));
    if (need_status) {
      if (!rec.status) throw Error(ErrorKind::state, "surgical ordering needs calibrated records");
      discarded.push_back(*rec.status == CropStatus::UR ? 1 : 0);
    }
  }
  return order_by_difficulty(max_probs, discarded, policy, epoch_seed);
}

}  // namespace ferkd
