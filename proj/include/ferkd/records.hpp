#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "ferkd/softlabel.hpp"

namespace ferkd {

// Normalized crop window: top-left corner plus extents, all in [0, 1].
// Stored as f32 so that in-memory values survive the store format unchanged.
struct BBox {
  float x = 0.0f;
  float y = 0.0f;
  float w = 1.0f;
  float h = 1.0f;

  double area() const noexcept { return static_cast<double>(w) * static_cast<double>(h); }
  bool valid(double tolerance = 1e-6) const noexcept;

  bool operator==(const BBox&) const = default;
};

enum class CropStatus : std::uint8_t { UR, HR, IR };

std::string_view to_string(CropStatus s) noexcept;

// Thresholds for the uninformative / hard / important split, plus the
// smoothing value used for hard regions.
struct CalibrationConfig {
  double t_low = 0.15;
  double t_mid = 0.30;
  double t_top = 0.95;
  double epsilon = 0.1;

  void validate() const;
  bool operator==(const CalibrationConfig&) const = default;
};

struct CropRecord {
  std::string image_id;
  BBox bbox;
  bool hflip = false;
  QuantizedSoftLabel soft_label;
  std::optional<HardLabel> gt_class;
  std::optional<CropStatus> status;            // empty until calibrated
  std::optional<SoftLabel> calibrated_label;   // y_a; absent for UR

  bool calibrated() const noexcept { return status.has_value(); }
  bool operator==(const CropRecord&) const = default;
};

}  // namespace ferkd
