#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ferkd/label_store.hpp"
#include "ferkd/softlabel.hpp"

namespace ferkd {

// How per-teacher UR verdicts decide whether a crop is discarded.
enum class Vote { any, majority, all };

std::string_view to_string(Vote v) noexcept;
Vote parse_vote(std::string_view name);

struct TeacherSet {
  std::vector<std::string> teacher_ids;
  std::vector<LabelStore> stores;  // one per teacher, same crop keys in the same order
};

// Elementwise mean. Each class is summed in sorted order so the result does
// not depend on the order of `labels`, and identical inputs come back exactly.
SoftLabel ensemble_labels(std::span<const SoftLabel> labels);

struct EnsembleOptions {
  Vote vote = Vote::majority;
  // Re-quantization of averaged labels. Defaults: the teachers' K / B when
  // they all agree, otherwise the softlabel defaults.
  std::optional<std::size_t> top_k;
  std::optional<unsigned> bits;
  std::size_t workers = 1;
};

// Per crop: recover every teacher label, classify each, discard by `vote`
// over the UR verdicts; survivors become HR when more teachers say HR than
// IR (ties go to IR). HR targets are the smoothed ground truth, IR targets the
// mean of the IR teachers' labels.
LabelStore ensemble_stores(const TeacherSet& teachers, const CalibrationConfig& cfg,
                           const EnsembleOptions& options = {});

}  // namespace ferkd
