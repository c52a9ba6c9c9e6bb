#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ferkd/records.hpp"
#include "ferkd/softlabel.hpp"

namespace ferkd {

// Loss value and its gradient with respect to the logits.
struct LossValue {
  double loss = 0.0;
  std::vector<double> grad;
};

struct LossConfig {
  double alpha = 0.5;        // weight of the hard-label term
  double temperature = 1.0;

  void validate() const;
};

std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);
std::vector<double> log_softmax(std::span<const double> logits, double temperature = 1.0);

// -sum_i t_i log softmax(z)_i
LossValue sce_loss(std::span<const double> logits, const SoftLabel& target);

// -log softmax(z)_y
LossValue ce_loss(std::span<const double> logits, const HardLabel& target);

// tau^2 * KL(target || softmax(z / tau))
LossValue kl_loss(std::span<const double> logits, const SoftLabel& target, double temperature = 1.0);

// alpha * CE(z, y_h) + (1 - alpha) * KL(y_s || softmax(z / tau)) tau^2
LossValue vkd_loss(std::span<const double> logits, const HardLabel& y_h, const SoftLabel& y_s,
                   const LossConfig& cfg);

// Empty for UR crops; SCE against the calibrated target otherwise.
// Throws ErrorKind::state for records that were never calibrated.
std::optional<LossValue> ferkd_loss(std::span<const double> logits, const CropRecord& rec);

struct BatchLoss {
  double loss = 0.0;             // mean over retained samples
  std::size_t retained = 0;
  std::vector<std::vector<double>> grads;  // d(mean loss)/d(logits) per sample; zeros for UR
};

// logits holds one row of C values per record.
BatchLoss ferkd_batch_loss(std::span<const double> logits, std::span<const CropRecord> records);

}  // namespace ferkd
