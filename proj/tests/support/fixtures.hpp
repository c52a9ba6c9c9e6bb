#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ferkd/calibrator.hpp"
#include "ferkd/label_store.hpp"
#include "ferkd/rng.hpp"
#include "ferkd/softlabel.hpp"

namespace fixtures {

using namespace ferkd;

inline std::string data_path(const std::string& name) { return std::string(FERKD_TEST_DATA_DIR) + "/" + name; }

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline CropRecord make_record(std::string image_id, QuantizedSoftLabel label, std::optional<ClassIndex> gt = {}) {
  CropRecord r{std::move(image_id), BBox{}, false, std::move(label), std::nullopt, std::nullopt, std::nullopt};
  if (gt) r.gt_class = HardLabel::make(*gt, r.soft_label.num_classes());
  return r;
}

inline QuantizedSoftLabel q8(std::vector<QuantEntry> entries) { return QuantizedSoftLabel(std::move(entries), 10, 8); }

// Two images with two crops each, C = 10, K = 3, calibrated with defaults:
// one crop of each status plus a crop without ground truth.
inline LabelStore golden_store() {
  LabelStore s;
  s.header.num_classes = 10;
  s.header.top_k = 3;
  s.header.bits = 8;
  s.header.calibration = CalibrationConfig{};
  const CalibrationConfig cfg{};

  auto rec = [&](std::string id, BBox box, bool flip, std::vector<QuantEntry> e, std::optional<ClassIndex> gt) {
    CropRecord r{std::move(id), box, flip, q8(std::move(e)), std::nullopt, std::nullopt, std::nullopt};
    if (gt) r.gt_class = HardLabel::make(*gt, 10);
    return calibrate_record(std::move(r), cfg);
  };
  s.images.push_back({"cat-001",
                      {rec("cat-001", {0.125f, 0.25f, 0.5f, 0.625f}, false, {{3, 230}, {5, 15}, {7, 5}}, 3),
                       rec("cat-001", {0.0f, 0.0f, 1.0f, 1.0f}, true, {{1, 2}, {3, 250}, {4, 3}}, 3)}});
  s.images.push_back({"dog-002",
                      {rec("dog-002", {0.25f, 0.25f, 0.5f, 0.5f}, false, {{0, 30}, {2, 45}, {8, 60}}, 8),
                       rec("dog-002", {0.5f, 0.0f, 0.5f, 1.0f}, true, {{6, 128}, {8, 64}, {9, 32}}, std::nullopt)}});
  return s;
}

// Writes the golden layout field by field without the library's ByteWriter.
class ReferenceWriter {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xFF));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> bytes;
};

inline std::vector<std::uint8_t> golden_reference_bytes() {
  ReferenceWriter w;
  w.text("FERK");
  w.u16(1);      // version
  w.u32(10);     // C
  w.u16(3);      // K
  w.u8(8);       // bits
  w.f32(0.08f);  // crop params
  w.f32(1.0f);
  w.f32(3.0f / 4.0f);
  w.f32(4.0f / 3.0f);
  w.u8(1);  // calibrated
  w.f64(0.15);
  w.f64(0.30);
  w.f64(0.95);
  w.f64(0.1);
  w.u32(2);  // images

  w.u16(7);
  w.text("cat-001");
  w.u32(2);
  // 230/255 = 0.902: IR
  w.f32(0.125f), w.f32(0.25f), w.f32(0.5f), w.f32(0.625f);
  w.u8(0), w.u8(3), w.u16(3);
  w.u32(3), w.u16(230), w.u32(5), w.u16(15), w.u32(7), w.u16(5);
  // 250/255 = 0.980: UR
  w.f32(0.0f), w.f32(0.0f), w.f32(1.0f), w.f32(1.0f);
  w.u8(1), w.u8(1), w.u16(3);
  w.u32(1), w.u16(2), w.u32(3), w.u16(250), w.u32(4), w.u16(3);

  w.u16(7);
  w.text("dog-002");
  w.u32(2);
  // 60/255 = 0.235: HR
  w.f32(0.25f), w.f32(0.25f), w.f32(0.5f), w.f32(0.5f);
  w.u8(0), w.u8(2), w.u16(8);
  w.u32(0), w.u16(30), w.u32(2), w.u16(45), w.u32(8), w.u16(60);
  // 128/255 = 0.502: IR, no ground truth
  w.f32(0.5f), w.f32(0.0f), w.f32(0.5f), w.f32(1.0f);
  w.u8(1), w.u8(3), w.u16(0xFFFF);
  w.u32(6), w.u16(128), w.u32(8), w.u16(64), w.u32(9), w.u16(32);
  return w.bytes;
}

// Per-bin percentages of max-probability over crops, 0-0.1 ... 0.95-1.0.
inline constexpr std::array<double, 12> ref_bin_ratio{0.43, 0.89, 1.29, 2.03, 3.66, 4.35,
                                                          5.04, 7.76, 8.14, 28.73, 37.34, 0.33};
inline constexpr std::array<double, 12> ref_agg_ratio{0.43,  1.32,  2.61,  4.64,  8.31,  12.65,
                                                          17.69, 25.45, 33.59, 62.32, 99.67, 100.0};

// Label whose max probability is `p` (>= 1/C), rest spread evenly.
inline SoftLabel peaked_label(double p, std::size_t C) {
  std::vector<double> v(C, (1.0 - p) / static_cast<double>(C - 1));
  v[0] = p;
  return SoftLabel(std::move(v));
}

// ratio x 100 labels per bin, max-prob at each bin centre, C = 100.
inline std::vector<SoftLabel> ref_bin_labels() {
  const auto edges = crop_statistics_edges();
  std::vector<SoftLabel> out;
  for (std::size_t b = 0; b < ref_bin_ratio.size(); ++b) {
    const auto n = static_cast<std::size_t>(std::lround(ref_bin_ratio[b] * 100.0));
    const double centre = 0.5 * (edges[b] + edges[b + 1]);
    for (std::size_t i = 0; i < n; ++i) out.push_back(peaked_label(std::max(centre, 0.011), 100));
  }
  return out;
}

// Dirichlet(alpha) draw over C classes.
inline SoftLabel random_label(CounterRng& rng, std::size_t C, double alpha = 0.3) {
  std::vector<double> v(C);
  double total = 0.0;
  for (auto& x : v) total += (x = rng.gamma(alpha));
  if (total <= 0.0) return SoftLabel::uniform(C);
  for (auto& x : v) x /= total;
  // Re-normalizing can leave the sum a few ulps off; fold that into the max.
  double s = 0.0;
  for (double x : v) s += x;
  *std::max_element(v.begin(), v.end()) += 1.0 - s;
  return SoftLabel(std::move(v));
}

}  // namespace fixtures
