#include "ferkd/calibrator.hpp"

#include <vector>

#include "ferkd/error.hpp"
#include "ferkd/parallel.hpp"

namespace ferkd {

CropStatus classify(double max_p, const CalibrationConfig& cfg) noexcept {
  if (max_p < cfg.t_low || max_p > cfg.t_top) return CropStatus::UR;
  if (max_p < cfg.t_mid) return CropStatus::HR;
  return CropStatus::IR;
}

SoftLabel smooth_hard(const HardLabel& gt, double epsilon, std::size_t num_classes) {
  if (num_classes < 2) throw Error(ErrorKind::parameter, "smoothing needs at least two classes");
  if (gt.class_index >= num_classes) throw Error(ErrorKind::parameter, "ground truth class out of range");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw Error(ErrorKind::parameter, "epsilon must be in [0, 1)");
  std::vector<double> p(num_classes, epsilon / static_cast<double>(num_classes - 1));
  p[gt.class_index] = 1.0 - epsilon;
  return SoftLabel(std::move(p));
}

SoftLabel smooth_hard(const HardLabel& gt, double epsilon) {
  return smooth_hard(gt, epsilon, gt.num_classes);
}

double teacher_max_prob(const CropRecord& rec) { return max_prob(recover(rec.soft_label)); }

CropRecord calibrate_record(CropRecord rec, const CalibrationConfig& cfg) {
  SoftLabel recovered = recover(rec.soft_label);
  const CropStatus status = classify(max_prob(recovered), cfg);
  switch (status) {
    case CropStatus::UR:
      rec.calibrated_label.reset();
      break;
    case CropStatus::HR:
      if (!rec.gt_class)
        throw Error(ErrorKind::data, "HR crop of image '" + rec.image_id + "' has no ground-truth class");
      rec.calibrated_label = smooth_hard(*rec.gt_class, cfg.epsilon, rec.soft_label.num_classes());
      break;
    case CropStatus::IR:
      rec.calibrated_label = std::move(recovered);
      break;
  }
  rec.status = status;
  return rec;
}

double CalibrationReport::discard_fraction() const noexcept {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(ur) / static_cast<double>(n);
}

void CalibrationReport::merge(const CalibrationReport& other) {
  ur += other.ur;
  hr += other.hr;
  ir += other.ir;
}

namespace {

void count(CalibrationReport& r, CropStatus s) {
  switch (s) {
    case CropStatus::UR: ++r.ur; break;
    case CropStatus::HR: ++r.hr; break;
    case CropStatus::IR: ++r.ir; break;
  }
}

}  // namespace

CalibrationResult calibrate_store(const LabelStore& store, const CalibrationConfig& cfg,
                                  std::size_t workers) {
  cfg.validate();
  if (store.record_count() == 0) throw Error(ErrorKind::empty_input, "store has no crops to calibrate");

  CalibrationResult result;
  result.store.header = store.header;
  result.store.header.calibration = cfg;
  result.store.images.resize(store.images.size());

  std::vector<double> max_probs(store.record_count());
  std::vector<std::size_t> offsets(store.images.size() + 1, 0);
  for (std::size_t i = 0; i < store.images.size(); ++i)
    offsets[i + 1] = offsets[i] + store.images[i].crops.size();

  parallel_for(store.images.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& src = store.images[i];
      auto& dst = result.store.images[i];
      dst.image_id = src.image_id;
      dst.crops.reserve(src.crops.size());
      for (std::size_t c = 0; c < src.crops.size(); ++c) {
        auto rec = calibrate_record(src.crops[c], cfg);
        max_probs[offsets[i] + c] = teacher_max_prob(rec);
        dst.crops.push_back(std::move(rec));
      }
    }
  });

  for (const auto& img : result.store.images)
    for (const auto& rec : img.crops) count(result.report, *rec.status);
  const auto edges = crop_statistics_edges();
  result.report.bins = bin_statistics_of_values(max_probs, edges);
  return result;
}

CalibrationReport summarize(const LabelStore& store) {
  CalibrationReport report;
  std::vector<double> max_probs;
  max_probs.reserve(store.record_count());
  for (const auto& img : store.images)
    for (const auto& rec : img.crops) {
      if (!rec.status) throw Error(ErrorKind::state, "store is not calibrated");
      count(report, *rec.status);
      max_probs.push_back(teacher_max_prob(rec));
    }
  if (max_probs.empty()) throw Error(ErrorKind::empty_input, "store has no crops");
  const auto edges = crop_statistics_edges();
  report.bins = bin_statistics_of_values(max_probs, edges);
  return report;
}

}  // namespace ferkd
