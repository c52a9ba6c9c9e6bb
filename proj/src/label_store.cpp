#include "ferkd/label_store.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "ferkd/calibrator.hpp"
#include "ferkd/error.hpp"

namespace ferkd {

bool BBox::valid(double tolerance) const noexcept {
  const double fx = x, fy = y, fw = w, fh = h;
  if (!std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(fw) || !std::isfinite(fh)) return false;
  return fx >= 0.0 && fy >= 0.0 && fw > 0.0 && fh > 0.0 && fx + fw <= 1.0 + tolerance &&
         fy + fh <= 1.0 + tolerance;
}

std::string_view to_string(CropStatus s) noexcept {
  switch (s) {
    case CropStatus::UR: return "UR";
    case CropStatus::HR: return "HR";
    case CropStatus::IR: return "IR";
  }
  return "?";
}

void CalibrationConfig::validate() const {
  if (!(0.0 <= t_low && t_low < t_mid && t_mid < t_top && t_top <= 1.0))
    throw Error(ErrorKind::parameter, "thresholds must satisfy 0 <= t_low < t_mid < t_top <= 1");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw Error(ErrorKind::parameter, "epsilon must be in [0, 1)");
}

std::size_t LabelStore::record_count() const noexcept {
  std::size_t n = 0;
  for (const auto& img : images) n += img.crops.size();
  return n;
}

std::vector<RecordRef> record_refs(const LabelStore& store) {
  std::vector<RecordRef> refs;
  refs.reserve(store.record_count());
  for (std::size_t i = 0; i < store.images.size(); ++i)
    for (std::size_t c = 0; c < store.images[i].crops.size(); ++c) refs.push_back({i, c});
  return refs;
}

void LabelStore::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::invariant, msg); };

  if (header.version != store_format_version) fail("unsupported version");
  if (header.num_classes == 0 || header.num_classes >= std::numeric_limits<std::uint16_t>::max())
    fail("num_classes must be in [1, 65534]");
  if (header.top_k == 0 || header.top_k > header.num_classes) fail("top_k must be in [1, C]");
  if (header.bits < 1 || header.bits > 16) fail("bits must be in [1, 16]");
  if (header.calibration) {
    try {
      header.calibration->validate();
    } catch (const Error& e) {
      fail(std::string("calibration config: ") + e.what());
    }
  }

  std::unordered_set<std::string> ids;
  for (const auto& img : images) {
    if (img.image_id.size() > std::numeric_limits<std::uint16_t>::max()) fail("image id too long");
    if (!ids.insert(img.image_id).second) fail("duplicate image id '" + img.image_id + "'");
    for (std::size_t c = 0; c < img.crops.size(); ++c) {
      const auto& rec = img.crops[c];
      const std::string where = "image '" + img.image_id + "' crop " + std::to_string(c) + ": ";
      if (rec.image_id != img.image_id) fail(where + "record image id does not match its block");
      if (!rec.bbox.valid()) fail(where + "bbox outside the unit square");
      const auto& q = rec.soft_label;
      if (q.num_classes() != header.num_classes || q.top_k() != header.top_k || q.bits() != header.bits)
        fail(where + "label C/K/B disagree with header");
      if (rec.gt_class && rec.gt_class->num_classes != header.num_classes)
        fail(where + "ground truth class count disagrees with header");

      if (!header.calibration) {
        if (rec.status || rec.calibrated_label) fail(where + "calibration data in an uncalibrated store");
        continue;
      }
      if (!rec.status) fail(where + "missing status in a calibrated store");
      switch (*rec.status) {
        case CropStatus::UR:
          if (rec.calibrated_label) fail(where + "UR record carries a label");
          break;
        case CropStatus::HR:
          if (!rec.gt_class) fail(where + "HR record without ground truth");
          if (!rec.calibrated_label || *rec.calibrated_label != smooth_hard(*rec.gt_class, header.calibration->epsilon))
            fail(where + "HR label is not the smoothed ground truth");
          break;
        case CropStatus::IR:
          if (!rec.calibrated_label || *rec.calibrated_label != recover(rec.soft_label))
            fail(where + "IR label is not the recovered soft label");
          break;
      }
    }
  }
}

}  // namespace ferkd
