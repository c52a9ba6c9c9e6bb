#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ferkd/records.hpp"
#include "ferkd/rng.hpp"

namespace ferkd {

struct SamplerConfig {
  double scale_min = 0.08;
  double scale_max = 1.0;
  double ratio_min = 3.0 / 4.0;
  double ratio_max = 4.0 / 3.0;
  double hflip_prob = 0.5;
  int max_attempts = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SampledCrop {
  BBox box;
  bool hflip = false;

  bool operator==(const SampledCrop&) const = default;
};

// RandomResizedCrop geometry on an integer pixel grid, returned normalized.
// Only `rng` is advanced.
SampledCrop sample_crop(int image_w, int image_h, const SamplerConfig& cfg, CounterRng& rng);

// n draws from one stream.
std::vector<SampledCrop> sample_crops_per_image(std::size_t n, int image_w, int image_h,
                                                const SamplerConfig& cfg, CounterRng& rng);

// Stream used for one image: independent of how many other images were sampled.
CounterRng image_stream(const SamplerConfig& cfg, std::uint64_t image_index);

enum class OrderMode { random, easy_to_hard, hard_to_easy, surgical };

std::string_view to_string(OrderMode mode) noexcept;
OrderMode parse_order_mode(std::string_view name);

struct OrderPolicy {
  OrderMode mode = OrderMode::random;
  std::size_t chunk = 1;  // records per difficulty stage
};

// Curriculum default: ceil(n / epochs) records per stage.
std::size_t default_chunk(std::size_t n, std::size_t epochs);

// Permutation of record indices for one epoch.
//   random        seeded shuffle of everything
//   easy_to_hard  non-increasing teacher max-prob, shuffled inside each stage
//   hard_to_easy  the same with the sort reversed
//   surgical      seeded shuffle of records that are not UR
std::vector<std::size_t> order_records(std::span<const CropRecord> records, const OrderPolicy& policy,
                                       std::uint64_t epoch_seed);

// Same contract when difficulty is already known: max_probs[i] and
// discarded[i] describe record i (discarded may be empty unless surgical).
std::vector<std::size_t> order_by_difficulty(std::span<const double> max_probs,
                                             std::span<const std::uint8_t> discarded, const OrderPolicy& policy,
                                             std::uint64_t epoch_seed);

}  // namespace ferkd
