#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ferkd {

using ClassIndex = std::uint32_t;

inline constexpr std::size_t default_top_k = 10;
inline constexpr unsigned default_bits = 8;
inline constexpr double label_sum_tolerance = 1e-6;

// Dense probability vector over C classes. Construction validates entries in
// [0, 1] and a unit sum; instances are immutable afterwards.
class SoftLabel {
 public:
  explicit SoftLabel(std::vector<double> probs);

  static SoftLabel uniform(std::size_t num_classes);
  static SoftLabel one_hot(ClassIndex cls, std::size_t num_classes);

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t num_classes() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }

  bool operator==(const SoftLabel&) const = default;

 private:
  std::vector<double> probs_;
};

struct HardLabel {
  ClassIndex class_index = 0;
  std::size_t num_classes = 0;

  // Throws ErrorKind::parameter unless class_index < num_classes.
  static HardLabel make(ClassIndex cls, std::size_t num_classes);

  bool operator==(const HardLabel&) const = default;
};

struct QuantEntry {
  ClassIndex class_index = 0;
  std::uint16_t qprob = 0;

  bool operator==(const QuantEntry&) const = default;
};

// Sparse top-K label. Entries are kept in strictly increasing class order; a
// stored value q means probability q / (2^bits - 1).
class QuantizedSoftLabel {
 public:
  QuantizedSoftLabel(std::vector<QuantEntry> entries, std::size_t num_classes, unsigned bits);

  std::span<const QuantEntry> entries() const noexcept { return entries_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  unsigned bits() const noexcept { return bits_; }
  std::size_t top_k() const noexcept { return entries_.size(); }

  std::uint32_t full_scale() const noexcept { return (1u << bits_) - 1u; }
  double dequantize(std::uint16_t q) const noexcept {
    return static_cast<double>(q) / static_cast<double>(full_scale());
  }
  double dequantized_mass() const noexcept;

  bool operator==(const QuantizedSoftLabel&) const = default;

 private:
  std::vector<QuantEntry> entries_;
  std::size_t num_classes_;
  unsigned bits_;
};

// Keeps the K largest probabilities (ties to the lower class index) rounded to
// the nearest multiple of 1/(2^B - 1). When rounding would push the retained
// mass above full scale, the entries rounded up the most are stepped down
// until it fits; when K == C the mass is brought to exactly full scale. Every
// retained value therefore stays within one quantization step of its input.
QuantizedSoftLabel quantize(const SoftLabel& label, std::size_t top_k = default_top_k,
                            unsigned bits = default_bits);

// Expands to full dimension; leftover mass goes uniformly to the classes that
// were not retained.
SoftLabel recover(const QuantizedSoftLabel& q);

double max_prob(const SoftLabel& label) noexcept;
std::size_t argmax(const SoftLabel& label) noexcept;
double entropy(const SoftLabel& label) noexcept;

struct BinStats {
  std::vector<double> bin_edges;       // n + 1 ascending edges, 0 ... 1
  std::vector<std::size_t> counts;     // n
  std::vector<double> bin_ratio;       // n
  std::vector<double> agg_ratio;       // n, running sum of bin_ratio
  std::size_t total = 0;
};

// Max-probability bins used for crop statistics:
// 0, .1, ..., .8, .85, .9, .95, 1.
std::vector<double> crop_statistics_edges();

// Bins are half-open [lo, hi) except the last, which also takes 1.0.
BinStats bin_statistics(std::span<const SoftLabel> labels, std::span<const double> edges);
BinStats bin_statistics_of_values(std::span<const double> max_probs, std::span<const double> edges);

}  // namespace ferkd
