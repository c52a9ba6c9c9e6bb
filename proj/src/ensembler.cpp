#include "ferkd/ensembler.hpp"

#include <algorithm>
#include <string>

#include "ferkd/calibrator.hpp"
#include "ferkd/error.hpp"
#include "ferkd/parallel.hpp"

namespace ferkd {

std::string_view to_string(Vote v) noexcept {
  switch (v) {
    case Vote::any: return "any";
    case Vote::majority: return "majority";
    case Vote::all: return "all";
  }
  return "?";
}

Vote parse_vote(std::string_view name) {
  for (auto v : {Vote::any, Vote::majority, Vote::all})
    if (to_string(v) == name) return v;
  throw Error(ErrorKind::parameter, "unknown vote '" + std::string(name) + "'");
}

SoftLabel ensemble_labels(std::span<const SoftLabel> labels) {
  if (labels.empty()) throw Error(ErrorKind::empty_input, "ensemble needs at least one label");
  const std::size_t c = labels.front().num_classes();
  for (const auto& l : labels)
    if (l.num_classes() != c) throw Error(ErrorKind::shape, "ensembled labels disagree on class count");

  const auto m = static_cast<double>(labels.size());
  std::vector<double> column(labels.size());
  std::vector<double> mean(c);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t t = 0; t < labels.size(); ++t) column[t] = labels[t][k];
    std::sort(column.begin(), column.end());
    if (column.front() == column.back()) {
      mean[k] = column.front();
      continue;
    }
    double sum = 0.0;
    for (double v : column) sum += v;
    mean[k] = sum / m;
  }
  return SoftLabel(std::move(mean));
}

namespace {

bool same_key(const CropRecord& a, const CropRecord& b) {
  return a.image_id == b.image_id && a.bbox == b.bbox && a.hflip == b.hflip;
}

void check_alignment(const TeacherSet& ts) {
  if (ts.stores.empty()) throw Error(ErrorKind::empty_input, "ensemble needs at least one teacher");
  if (!ts.teacher_ids.empty() && ts.teacher_ids.size() != ts.stores.size())
    throw Error(ErrorKind::alignment, "teacher id count does not match store count");
  const auto& ref = ts.stores.front();
  std::vector<std::string> problems;
  auto note = [&](std::string msg) {
    if (problems.size() < 10) problems.push_back(std::move(msg));
    else if (problems.size() == 10) problems.push_back("...");
  };
  for (std::size_t t = 1; t < ts.stores.size(); ++t) {
    const auto& other = ts.stores[t];
    const std::string who = "teacher " + std::to_string(t);
    if (other.header.num_classes != ref.header.num_classes) {
      note(who + ": class count differs");
      continue;
    }
    if (!(other.header.crop == ref.header.crop)) note(who + ": crop parameters differ");
    if (other.images.size() != ref.images.size()) {
      note(who + ": image count differs");
      continue;
    }
    for (std::size_t i = 0; i < ref.images.size(); ++i) {
      const auto& a = ref.images[i];
      const auto& b = other.images[i];
      if (a.image_id != b.image_id || a.crops.size() != b.crops.size()) {
        note(who + ": image block " + std::to_string(i) + " ('" + a.image_id + "' vs '" + b.image_id + "')");
        continue;
      }
      for (std::size_t c = 0; c < a.crops.size(); ++c)
        if (!same_key(a.crops[c], b.crops[c])) note(who + ": crop " + a.image_id + "#" + std::to_string(c));
    }
  }
  if (!problems.empty()) {
    std::string msg = "teacher stores are not aligned:";
    for (const auto& p : problems) msg += " [" + p + "]";
    throw Error(ErrorKind::alignment, msg);
  }
}

// Quantized form of the mean of `members`; reuses the shared label verbatim
// when every member stored the same quantized label.
QuantizedSoftLabel combine(std::span<const QuantizedSoftLabel* const> quantized,
                           std::span<const SoftLabel* const> recovered, std::size_t top_k, unsigned bits) {
  const auto* first = quantized.front();
  const bool identical = std::all_of(quantized.begin(), quantized.end(), [&](const auto* q) { return *q == *first; });
  if (identical && first->top_k() == top_k && first->bits() == bits) return *first;
  std::vector<SoftLabel> labels;
  labels.reserve(recovered.size());
  for (const auto* r : recovered) labels.push_back(*r);
  return quantize(ensemble_labels(labels), top_k, bits);
}

}  // namespace

LabelStore ensemble_stores(const TeacherSet& teachers, const CalibrationConfig& cfg,
                           const EnsembleOptions& options) {
  cfg.validate();
  check_alignment(teachers);
  const auto& ref = teachers.stores.front();
  const std::size_t m = teachers.stores.size();
  const std::size_t c = ref.header.num_classes;

  bool teachers_agree = true;
  for (const auto& s : teachers.stores)
    teachers_agree = teachers_agree && s.header.top_k == ref.header.top_k && s.header.bits == ref.header.bits;
  const std::size_t top_k =
      options.top_k.value_or(teachers_agree ? ref.header.top_k : std::min<std::size_t>(default_top_k, c));
  const unsigned bits = options.bits.value_or(teachers_agree ? ref.header.bits : default_bits);
  if (top_k < 1 || top_k > c) throw Error(ErrorKind::parameter, "ensemble top_k must be in [1, C]");

  LabelStore out;
  out.header = ref.header;
  out.header.top_k = static_cast<std::uint16_t>(top_k);
  out.header.bits = static_cast<std::uint8_t>(bits);
  out.header.calibration = cfg;
  out.images.resize(ref.images.size());

  parallel_for(ref.images.size(), options.workers, [&](std::size_t begin, std::size_t end) {
    std::vector<SoftLabel> recovered;
    std::vector<CropStatus> verdicts;
    for (std::size_t i = begin; i < end; ++i) {
      auto& dst = out.images[i];
      dst.image_id = ref.images[i].image_id;
      for (std::size_t k = 0; k < ref.images[i].crops.size(); ++k) {
        recovered.clear();
        verdicts.clear();
        std::optional<HardLabel> gt;
        for (std::size_t t = 0; t < m; ++t) {
          const auto& rec = teachers.stores[t].images[i].crops[k];
          recovered.push_back(recover(rec.soft_label));
          verdicts.push_back(classify(max_prob(recovered.back()), cfg));
          if (rec.gt_class) {
            if (gt && *gt != *rec.gt_class)
              throw Error(ErrorKind::data, "teachers disagree on the ground truth of " + dst.image_id + "#" +
                                               std::to_string(k));
            gt = rec.gt_class;
          }
        }

        const auto n_ur = static_cast<std::size_t>(std::count(verdicts.begin(), verdicts.end(), CropStatus::UR));
        const auto n_hr = static_cast<std::size_t>(std::count(verdicts.begin(), verdicts.end(), CropStatus::HR));
        const std::size_t n_ir = m - n_ur - n_hr;
        bool discard = false;
        switch (options.vote) {
          case Vote::any: discard = n_ur > 0; break;
          case Vote::majority: discard = 2 * n_ur > m; break;
          case Vote::all: discard = n_ur == m; break;
        }
        CropStatus status = discard ? CropStatus::UR : (n_hr > n_ir ? CropStatus::HR : CropStatus::IR);

        std::vector<const QuantizedSoftLabel*> q_members;
        std::vector<const SoftLabel*> r_members;
        for (std::size_t t = 0; t < m; ++t) {
          if (status == CropStatus::IR && verdicts[t] != CropStatus::IR) continue;
          q_members.push_back(&teachers.stores[t].images[i].crops[k].soft_label);
          r_members.push_back(&recovered[t]);
        }
        if (q_members.empty()) {
          // unreachable: a kept crop has at least one non-UR verdict
          throw Error(ErrorKind::inconsistency, "no teacher supports the ensembled status");
        }

        const auto& base = ref.images[i].crops[k];
        CropRecord rec{base.image_id, base.bbox, base.hflip, combine(q_members, r_members, top_k, bits), gt,
                       status, std::nullopt};
        if (status == CropStatus::HR) {
          if (!gt) throw Error(ErrorKind::data, "HR crop " + dst.image_id + "#" + std::to_string(k) + " has no ground truth");
          rec.calibrated_label = smooth_hard(*gt, cfg.epsilon, c);
        } else if (status == CropStatus::IR) {
          rec.calibrated_label = recover(rec.soft_label);
        }
        dst.crops.push_back(std::move(rec));
      }
    }
  });
  return out;
}

}  // namespace ferkd
