#include "ferkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ferkd/error.hpp"

namespace ferkd {

namespace {

void check_logits(std::span<const double> logits, std::size_t num_classes) {
  if (logits.size() != num_classes)
    throw Error(ErrorKind::shape, "logit count " + std::to_string(logits.size()) + " != class count " +
                                      std::to_string(num_classes));
  for (double z : logits)
    if (!std::isfinite(z)) throw Error(ErrorKind::numeric, "non-finite logit");
}

double label_mass(const SoftLabel& t) {
  const auto p = t.probs();
  return std::accumulate(p.begin(), p.end(), 0.0);
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::parameter, "alpha must be in [0, 1]");
  if (!(temperature > 0.0)) throw Error(ErrorKind::parameter, "temperature must be positive");
}

std::vector<double> log_softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::parameter, "temperature must be positive");
  const double hi = *std::max_element(logits.begin(), logits.end()) / temperature;
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z / temperature - hi);
  const double lse = hi + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] / temperature - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  auto out = log_softmax(logits, temperature);
  for (double& v : out) v = std::exp(v);
  return out;
}

LossValue sce_loss(std::span<const double> logits, const SoftLabel& target) {
  check_logits(logits, target.num_classes());
  const auto logq = log_softmax(logits);
  const double mass = label_mass(target);
  LossValue out;
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (target[i] > 0.0) out.loss -= target[i] * logq[i];
    out.grad[i] = mass * std::exp(logq[i]) - target[i];
  }
  return out;
}

LossValue ce_loss(std::span<const double> logits, const HardLabel& target) {
  check_logits(logits, target.num_classes);
  const auto logq = log_softmax(logits);
  LossValue out;
  out.loss = -logq[target.class_index];
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logq[i]);
  out.grad[target.class_index] -= 1.0;
  return out;
}

LossValue kl_loss(std::span<const double> logits, const SoftLabel& target, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::parameter, "temperature must be positive");
  check_logits(logits, target.num_classes());
  const auto logq = log_softmax(logits, temperature);
  const double mass = label_mass(target);
  const double t2 = temperature * temperature;
  LossValue out;
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (target[i] > 0.0) out.loss += t2 * target[i] * (std::log(target[i]) - logq[i]);
    out.grad[i] = temperature * (mass * std::exp(logq[i]) - target[i]);
  }
  return out;
}

LossValue vkd_loss(std::span<const double> logits, const HardLabel& y_h, const SoftLabel& y_s,
                   const LossConfig& cfg) {
  cfg.validate();
  if (y_h.num_classes != y_s.num_classes()) throw Error(ErrorKind::shape, "hard and soft labels differ in C");
  const auto hard = ce_loss(logits, y_h);
  const auto soft = kl_loss(logits, y_s, cfg.temperature);
  LossValue out;
  out.loss = cfg.alpha * hard.loss + (1.0 - cfg.alpha) * soft.loss;
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    out.grad[i] = cfg.alpha * hard.grad[i] + (1.0 - cfg.alpha) * soft.grad[i];
  return out;
}

std::optional<LossValue> ferkd_loss(std::span<const double> logits, const CropRecord& rec) {
  if (!rec.status) throw Error(ErrorKind::state, "record of image '" + rec.image_id + "' is not calibrated");
  if (*rec.status == CropStatus::UR) return std::nullopt;
  if (!rec.calibrated_label) throw Error(ErrorKind::state, "calibrated record lacks its target label");
  return sce_loss(logits, *rec.calibrated_label);
}

BatchLoss ferkd_batch_loss(std::span<const double> logits, std::span<const CropRecord> records) {
  if (records.empty()) throw Error(ErrorKind::empty_input, "empty batch");
  const std::size_t c = records.front().soft_label.num_classes();
  if (logits.size() != c * records.size()) throw Error(ErrorKind::shape, "logit rows do not match the batch");

  BatchLoss out;
  out.grads.resize(records.size());
  std::vector<std::optional<LossValue>> parts(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    parts[i] = ferkd_loss(logits.subspan(i * c, c), records[i]);
    if (parts[i]) ++out.retained;
  }
  if (out.retained == 0) throw Error(ErrorKind::empty_input, "every sample in the batch was discarded");
  const double inv = 1.0 / static_cast<double>(out.retained);
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.grads[i].assign(c, 0.0);
    if (!parts[i]) continue;
    out.loss += parts[i]->loss * inv;
    for (std::size_t k = 0; k < c; ++k) out.grads[i][k] = parts[i]->grad[k] * inv;
  }
  return out;
}

}  // namespace ferkd
