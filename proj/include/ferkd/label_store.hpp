#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ferkd/records.hpp"

namespace ferkd {

inline constexpr std::uint16_t store_format_version = 1;

// Geometry the crops were sampled with; carried for provenance only.
struct CropParams {
  float scale_min = 0.08f;
  float scale_max = 1.0f;
  float ratio_min = 3.0f / 4.0f;
  float ratio_max = 4.0f / 3.0f;

  bool operator==(const CropParams&) const = default;
};

struct StoreHeader {
  std::uint16_t version = store_format_version;
  std::uint32_t num_classes = 0;
  std::uint16_t top_k = 0;
  std::uint8_t bits = 0;
  CropParams crop;
  std::optional<CalibrationConfig> calibration;  // empty = uncalibrated

  bool operator==(const StoreHeader&) const = default;
};

struct ImageEntry {
  std::string image_id;
  std::vector<CropRecord> crops;  // in sampling order

  bool operator==(const ImageEntry&) const = default;
};

struct LabelStore {
  StoreHeader header;
  std::vector<ImageEntry> images;

  std::size_t record_count() const noexcept;

  // Throws ErrorKind::invariant describing the first violation: header C/K/B
  // disagreeing with a record, duplicate image ids, bad boxes, or a status /
  // calibrated-label combination that breaks the calibration contract.
  void validate() const;

  bool operator==(const LabelStore&) const = default;
};

// Flattened (image, crop) addressing for code that walks every record.
struct RecordRef {
  std::size_t image = 0;
  std::size_t crop = 0;
};

std::vector<RecordRef> record_refs(const LabelStore& store);

}  // namespace ferkd
