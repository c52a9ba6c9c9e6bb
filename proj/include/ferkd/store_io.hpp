#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ferkd/bytes.hpp"
#include "ferkd/label_store.hpp"

namespace ferkd {

// On-disk layout, all integers little-endian:
//
//   "FERK" | u16 version | u32 C | u16 K | u8 B
//   | f32 scale_min, scale_max, ratio_min, ratio_max
//   | u8 calibrated | f64 t_low, t_mid, t_top, epsilon (zero when uncalibrated)
//   | u32 image count
//   per image: u16 id length | id bytes (UTF-8) | u32 crop count
//   per crop:  f32 x, y, w, h | u8 flip | u8 status | u16 gt class
//              | K x (u32 class, u16 qprob)
//
// status: 0 uncalibrated, 1 UR, 2 HR, 3 IR. gt class 0xFFFF means absent.
// Calibrated labels are not stored; the reader rebuilds them from the header.
inline constexpr std::size_t store_header_size = 66;
inline constexpr std::uint16_t missing_gt_class = 0xFFFF;

std::uint8_t encode_status(const std::optional<CropStatus>& status) noexcept;

// Crop layout shared by the file and the batch protocol.
void encode_crop(ByteWriter& out, const CropRecord& rec);
CropRecord decode_crop(ByteReader& in, const StoreHeader& header, std::string image_id);

// Refuses (ErrorKind::invariant) to serialize an invalid store.
std::vector<std::uint8_t> serialize_store(const LabelStore& store);
LabelStore parse_store(std::span<const std::uint8_t> bytes);

// Returns the number of bytes written.
std::size_t write_store(const LabelStore& store, const std::filesystem::path& destination);
LabelStore read_store(const std::filesystem::path& source);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& source);

// Teacher dump ingestion. One crop per line, whitespace separated:
//
//   image_id x y w h flip gt class:prob [class:prob ...]
//
// flip is 0 or 1, gt is a class index or '-', boxes are normalized. Blank
// lines and lines starting with '#' are skipped. Listed probabilities may
// cover only the top classes; the remainder is spread over the unlisted ones.
struct IngestMeta {
  std::size_t num_classes = 0;
  std::size_t top_k = default_top_k;
  unsigned bits = default_bits;
  CropParams crop;
};

LabelStore ingest_predictions(std::istream& dump, const IngestMeta& meta);
LabelStore ingest_predictions(std::string_view dump, const IngestMeta& meta);

// Full-dimension label from sparse (class, prob) pairs; see ingest rules above.
SoftLabel expand_sparse(std::span<const std::pair<ClassIndex, double>> pairs, std::size_t num_classes);

}  // namespace ferkd
