#pragma once

#include <cstddef>

#include "ferkd/label_store.hpp"
#include "ferkd/records.hpp"
#include "ferkd/softlabel.hpp"

namespace ferkd {

// UR below t_low or above t_top, HR on [t_low, t_mid), IR on [t_mid, t_top].
CropStatus classify(double max_p, const CalibrationConfig& cfg) noexcept;

// gt gets 1 - epsilon, every other class epsilon / (C - 1).
SoftLabel smooth_hard(const HardLabel& gt, double epsilon);
SoftLabel smooth_hard(const HardLabel& gt, double epsilon, std::size_t num_classes);

// Max probability of the recovered (full-dimension) teacher label.
double teacher_max_prob(const CropRecord& rec);

// Sets status and y_a from the teacher label alone, so applying it twice is a
// no-op. HR needs a ground-truth class (ErrorKind::data otherwise).
CropRecord calibrate_record(CropRecord rec, const CalibrationConfig& cfg);

struct CalibrationReport {
  BinStats bins;
  std::size_t ur = 0;
  std::size_t hr = 0;
  std::size_t ir = 0;

  std::size_t total() const noexcept { return ur + hr + ir; }
  double discard_fraction() const noexcept;
  void merge(const CalibrationReport& other);
};

struct CalibrationResult {
  LabelStore store;
  CalibrationReport report;
};

// `workers` > 1 splits images across threads; the output does not depend on it.
CalibrationResult calibrate_store(const LabelStore& store, const CalibrationConfig& cfg,
                                  std::size_t workers = 1);

// Counts per status of an already calibrated store.
CalibrationReport summarize(const LabelStore& store);

}  // namespace ferkd
