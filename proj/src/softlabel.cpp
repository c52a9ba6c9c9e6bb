#include "ferkd/softlabel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ferkd/error.hpp"

namespace ferkd {

namespace {

constexpr double entry_slack = 1e-12;

}  // namespace

SoftLabel::SoftLabel(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error(ErrorKind::parameter, "soft label needs at least one class");
  double sum = 0.0;
  for (double& p : probs_) {
    if (!std::isfinite(p) || p < -entry_slack || p > 1.0 + entry_slack)
      throw Error(ErrorKind::parameter, "soft label entry out of [0, 1]: " + std::to_string(p));
    p = std::clamp(p, 0.0, 1.0);
    sum += p;
  }
  if (std::abs(sum - 1.0) > label_sum_tolerance)
    throw Error(ErrorKind::parameter, "soft label does not sum to 1 (sum = " + std::to_string(sum) + ")");
}

SoftLabel SoftLabel::uniform(std::size_t num_classes) {
  if (num_classes == 0) throw Error(ErrorKind::parameter, "num_classes must be positive");
  return SoftLabel(std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)));
}

SoftLabel SoftLabel::one_hot(ClassIndex cls, std::size_t num_classes) {
  if (cls >= num_classes) throw Error(ErrorKind::parameter, "class index out of range");
  std::vector<double> p(num_classes, 0.0);
  p[cls] = 1.0;
  return SoftLabel(std::move(p));
}

HardLabel HardLabel::make(ClassIndex cls, std::size_t num_classes) {
  if (cls >= num_classes)
    throw Error(ErrorKind::parameter, "class index " + std::to_string(cls) + " >= num_classes " +
                                          std::to_string(num_classes));
  return HardLabel{cls, num_classes};
}

QuantizedSoftLabel::QuantizedSoftLabel(std::vector<QuantEntry> entries, std::size_t num_classes,
                                       unsigned bits)
    : entries_(std::move(entries)), num_classes_(num_classes), bits_(bits) {
  if (bits_ < 1 || bits_ > 16) throw Error(ErrorKind::parameter, "bits must be in [1, 16]");
  if (num_classes_ == 0) throw Error(ErrorKind::parameter, "num_classes must be positive");
  if (entries_.empty() || entries_.size() > num_classes_)
    throw Error(ErrorKind::parameter, "top-K size must be in [1, C]");
  std::uint64_t mass = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.class_index >= num_classes_) throw Error(ErrorKind::parameter, "class index out of range");
    if (i > 0 && e.class_index <= entries_[i - 1].class_index)
      throw Error(ErrorKind::parameter, "class indices must be strictly increasing");
    if (e.qprob > full_scale()) throw Error(ErrorKind::parameter, "quantized value exceeds full scale");
    mass += e.qprob;
  }
  if (static_cast<double>(mass) / full_scale() > 1.0 + label_sum_tolerance)
    throw Error(ErrorKind::parameter, "quantized mass exceeds 1");
}

double QuantizedSoftLabel::dequantized_mass() const noexcept {
  std::uint64_t mass = 0;
  for (const auto& e : entries_) mass += e.qprob;
  return static_cast<double>(mass) / static_cast<double>(full_scale());
}

QuantizedSoftLabel quantize(const SoftLabel& label, std::size_t top_k, unsigned bits) {
  const std::size_t c = label.num_classes();
  if (top_k < 1 || top_k > c)
    throw Error(ErrorKind::parameter, "top_k must be in [1, C], got " + std::to_string(top_k));
  if (bits < 1 || bits > 16) throw Error(ErrorKind::parameter, "bits must be in [1, 16]");

  const auto p = label.probs();
  std::vector<ClassIndex> order(c);
  std::iota(order.begin(), order.end(), ClassIndex{0});
  auto by_prob = [&](ClassIndex a, ClassIndex b) { return p[a] > p[b] || (p[a] == p[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k), order.end(), by_prob);
  order.resize(top_k);

  const auto fs = static_cast<std::int64_t>((1u << bits) - 1u);
  std::vector<std::int64_t> q(top_k);
  std::vector<double> excess(top_k);  // q - p * fs, positive when rounded up
  std::int64_t mass = 0;
  for (std::size_t i = 0; i < top_k; ++i) {
    const double scaled = p[order[i]] * static_cast<double>(fs);
    q[i] = std::clamp<std::int64_t>(std::llround(scaled), 0, fs);
    excess[i] = static_cast<double>(q[i]) - scaled;
    mass += q[i];
  }
  while (mass > fs) {
    std::size_t pick = top_k;
    for (std::size_t i = 0; i < top_k; ++i)
      if (q[i] > 0 && (pick == top_k || excess[i] > excess[pick])) pick = i;
    --q[pick];
    excess[pick] -= 1.0;
    --mass;
  }
  if (top_k == c) {
    while (mass < fs) {
      std::size_t pick = 0;
      for (std::size_t i = 1; i < top_k; ++i)
        if (excess[i] < excess[pick]) pick = i;
      ++q[pick];
      excess[pick] += 1.0;
      ++mass;
    }
  }

  std::vector<QuantEntry> entries(top_k);
  for (std::size_t i = 0; i < top_k; ++i)
    entries[i] = QuantEntry{order[i], static_cast<std::uint16_t>(q[i])};
  std::sort(entries.begin(), entries.end(),
            [](const QuantEntry& a, const QuantEntry& b) { return a.class_index < b.class_index; });
  return QuantizedSoftLabel(std::move(entries), c, bits);
}

SoftLabel recover(const QuantizedSoftLabel& q) {
  const std::size_t c = q.num_classes();
  const std::size_t k = q.top_k();
  double mass = 0.0;
  for (const auto& e : q.entries()) mass += q.dequantize(e.qprob);
  const double residual = 1.0 - mass;

  if (k == c && residual > 1e-3)
    throw Error(ErrorKind::inconsistency,
                "all classes retained but mass is short by " + std::to_string(residual));

  std::vector<double> out(c, 0.0);
  if (k == c || residual < 0.0) {
    if (mass <= 0.0) throw Error(ErrorKind::inconsistency, "quantized label has zero mass");
    for (const auto& e : q.entries()) out[e.class_index] = q.dequantize(e.qprob) / mass;
    return SoftLabel(std::move(out));
  }

  const double spread = residual / static_cast<double>(c - k);
  std::fill(out.begin(), out.end(), spread);
  for (const auto& e : q.entries()) out[e.class_index] = q.dequantize(e.qprob);
  return SoftLabel(std::move(out));
}

double max_prob(const SoftLabel& label) noexcept {
  const auto p = label.probs();
  return *std::max_element(p.begin(), p.end());
}

std::size_t argmax(const SoftLabel& label) noexcept {
  const auto p = label.probs();
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

double entropy(const SoftLabel& label) noexcept {
  double h = 0.0;
  for (double v : label.probs())
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

std::vector<double> crop_statistics_edges() {
  return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0};
}

BinStats bin_statistics_of_values(std::span<const double> max_probs, std::span<const double> edges) {
  if (max_probs.empty()) throw Error(ErrorKind::empty_input, "bin statistics need at least one label");
  if (edges.size() < 2) throw Error(ErrorKind::parameter, "need at least two bin edges");
  if (edges.front() != 0.0 || edges.back() != 1.0)
    throw Error(ErrorKind::parameter, "bin edges must cover [0, 1]");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw Error(ErrorKind::parameter, "bin edges must be strictly ascending");

  const std::size_t bins = edges.size() - 1;
  BinStats stats;
  stats.bin_edges.assign(edges.begin(), edges.end());
  stats.counts.assign(bins, 0);
  for (double v : max_probs) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::parameter, "max probability outside [0, 1]");
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    auto bin = static_cast<std::size_t>(it - edges.begin());
    bin = bin == 0 ? 0 : std::min(bin - 1, bins - 1);
    ++stats.counts[bin];
  }
  stats.total = max_probs.size();
  const double total = static_cast<double>(stats.total);
  std::size_t running = 0;
  for (std::size_t i = 0; i < bins; ++i) {
    running += stats.counts[i];
    stats.bin_ratio.push_back(static_cast<double>(stats.counts[i]) / total);
    stats.agg_ratio.push_back(static_cast<double>(running) / total);
  }
  return stats;
}

BinStats bin_statistics(std::span<const SoftLabel> labels, std::span<const double> edges) {
  std::vector<double> values;
  values.reserve(labels.size());
  for (const auto& l : labels) values.push_back(max_prob(l));
  return bin_statistics_of_values(values, edges);
}

}  // namespace ferkd
