#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace fixtures {

inline constexpr double fd_step = 1e-5;

// Largest |analytic - central difference| / max(|analytic|, |numeric|, 1e-6)
// over all coordinates of z.
template <typename LossFn>
double max_fd_rel_error(LossFn&& loss, std::span<const double> z, std::span<const double> analytic,
                        double h = fd_step) {
  std::vector<double> x(z.begin(), z.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss(std::span<const double>(x));
    x[i] = keep - h;
    const double down = loss(std::span<const double>(x));
    x[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace fixtures
