// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ferkd/calibrator.hpp"
#include "ferkd/ensembler.hpp"
#include "ferkd/losses.hpp"
#include "ferkd/region_sampler.hpp"
#include "ferkd/selfmix.hpp"
#include "ferkd/store_io.hpp"
#include "ferkd/synth_bench.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace ferkd;

namespace {

// Pinned tolerances.
constexpr double table_tol_pp = 0.01;
constexpr double table_max_seconds = 1.0;
constexpr double quant_tol = 1.0 / 255.0 + 1e-9;
constexpr double quant_sum_tol = 1e-6;
constexpr double grad_rel_tol = 1e-4;
constexpr double ensemble_mean_tol = 1e-12;
constexpr double lambda_tol = 1e-9;
constexpr double max_area_distance_corr = -0.1;
constexpr double budget_gap_tol = 0.005;  // accuracy as a fraction; 0.5 points

struct Outcome {
  bool pass;
  std::string detail;
};

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome crop_bin_reproduction() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto labels = fixtures::ref_bin_labels();
  const auto edges = crop_statistics_edges();
  const auto stats = bin_statistics(labels, edges);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  for (std::size_t i = 0; i < fixtures::ref_agg_ratio.size(); ++i) {
    worst = std::max(worst, std::abs(100.0 * stats.agg_ratio[i] - fixtures::ref_agg_ratio[i]));
    worst = std::max(worst, std::abs(100.0 * stats.bin_ratio[i] - fixtures::ref_bin_ratio[i]));
  }
  return {worst <= table_tol_pp && elapsed < table_max_seconds,
          "agg[0,0.9)=" + num(100.0 * stats.agg_ratio[9], 3) + "% max_dev=" + num(worst, 4) + "pp time=" +
              num(elapsed, 3) + "s"};
}

Outcome calibration_boundaries() {
  const std::array<double, 8> max_p{0.0, 0.149, 0.15, 0.299, 0.30, 0.95, 0.951, 1.0};
  const std::array<CropStatus, 8> want{CropStatus::UR, CropStatus::UR, CropStatus::HR, CropStatus::HR,
                                       CropStatus::IR, CropStatus::IR, CropStatus::UR, CropStatus::UR};
  const CalibrationConfig cfg;
  std::string got;
  bool ok = true;
  for (std::size_t i = 0; i < max_p.size(); ++i) {
    const auto s = classify(max_p[i], cfg);
    ok = ok && s == want[i];
    got += std::string(to_string(s)) + (i + 1 < max_p.size() ? "," : "");
  }
  return {ok, "statuses=" + got};
}

Outcome quantization_fidelity() {
  CounterRng rng(2024);
  double worst_err = 0.0, worst_sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double alpha = std::array<double, 4>{0.01, 0.05, 0.3, 1.0}[i % 4];
    const auto p = fixtures::random_label(rng, 1000, alpha);
    const auto y = recover(quantize(p, 10, 8));
    std::vector<std::size_t> idx(1000);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + 10, idx.end(), [&](auto a, auto b) { return p[a] > p[b]; });
    for (std::size_t k = 0; k < 10; ++k) worst_err = std::max(worst_err, std::abs(y[idx[k]] - p[idx[k]]));
    double s = 0.0;
    for (double v : y.probs()) s += v;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  }
  return {worst_err <= quant_tol && worst_sum <= quant_sum_tol,
          "max_top10_err=" + num(worst_err, 8) + " max_sum_dev=" + num(worst_sum, 10)};
}

Outcome gradient_suite() {
  CounterRng rng(99);
  double sce = 0.0, kl = 0.0, vkd = 0.0, fer = 0.0;
  std::size_t fer_n = 0, fer_hr = 0;
  const auto logits = [&](std::size_t c) {
    std::vector<double> z(c);
    for (auto& v : z) v = 2.0 * rng.normal();
    return z;
  };
  for (int i = 0; i < 100; ++i) {
    const std::size_t c = 2 + rng.below(30);
    const auto z = logits(c);
    const auto t = fixtures::random_label(rng, c, 0.5);
    const auto gt = HardLabel::make(static_cast<ClassIndex>(rng.below(c)), c);
    const double tau = 0.5 + 3.0 * rng.uniform();
    const LossConfig cfg{rng.uniform(), tau};
    sce = std::max(sce, fixtures::max_fd_rel_error([&](auto x) { return sce_loss(x, t).loss; }, z, sce_loss(z, t).grad));
    kl = std::max(kl, fixtures::max_fd_rel_error([&](auto x) { return kl_loss(x, t, tau).loss; }, z,
                                                 kl_loss(z, t, tau).grad));
    vkd = std::max(vkd, fixtures::max_fd_rel_error([&](auto x) { return vkd_loss(x, gt, t, cfg).loss; }, z,
                                                   vkd_loss(z, gt, t, cfg).grad));
  }
  // ferkd: 100 retained (HR or IR) records; UR records carry no loss.
  while (fer_n < 100) {
    const std::size_t c = 10 + rng.below(20);
    const auto t = fixtures::random_label(rng, c, std::array<double, 3>{0.2, 1.0, 5.0}[fer_n % 3]);
    const auto gt = static_cast<ClassIndex>(rng.below(c));
    const auto rec = calibrate_record(fixtures::make_record("img", quantize(t, c, 16), gt), {});
    if (rec.status == CropStatus::UR) continue;
    const auto z = logits(c);
    fer = std::max(fer, fixtures::max_fd_rel_error([&](auto x) { return ferkd_loss(x, rec)->loss; }, z,
                                                   ferkd_loss(z, rec)->grad));
    ++fer_n;
    fer_hr += rec.status == CropStatus::HR;
  }
  const double worst = std::max({sce, kl, vkd, fer});
  return {worst <= grad_rel_tol, "sce=" + num(sce, 9) + " kl=" + num(kl, 9) + " vkd=" + num(vkd, 9) + " ferkd=" +
                                     num(fer, 9) + " (HR " + std::to_string(fer_hr) + "/100)"};
}

LabelStore ensemble_teacher(CounterRng& rng, std::size_t images, std::size_t crops, std::size_t c) {
  LabelStore s;
  s.header.num_classes = static_cast<std::uint32_t>(c);
  s.header.top_k = 5;
  s.header.bits = 8;
  for (std::size_t i = 0; i < images; ++i) {
    ImageEntry img{"im" + std::to_string(i), {}};
    for (std::size_t j = 0; j < crops; ++j) {
      auto rec = fixtures::make_record(img.image_id, quantize(fixtures::random_label(rng, c, 0.4), 5, 8),
                                       static_cast<ClassIndex>(i % c));
      rec.bbox = BBox{0.05f * static_cast<float>(j), 0.0f, 0.5f, 0.5f};
      img.crops.push_back(std::move(rec));
    }
    s.images.push_back(std::move(img));
  }
  return s;
}

Outcome ensemble_properties() {
  CounterRng rng(31);
  std::vector<LabelStore> t;
  for (int i = 0; i < 3; ++i) t.push_back(ensemble_teacher(rng, 40, 4, 10));
  const CalibrationConfig cfg;
  const auto bytes_of = [&](std::vector<std::size_t> order) {
    TeacherSet ts;
    for (auto i : order) {
      ts.teacher_ids.push_back("t" + std::to_string(i));
      ts.stores.push_back(t[i]);
    }
    return serialize_store(ensemble_stores(ts, cfg));
  };
  std::vector<std::size_t> perm{0, 1, 2};
  const auto ref = bytes_of(perm);
  bool perm_ok = true;
  std::size_t perms = 0;
  while (std::next_permutation(perm.begin(), perm.end())) {
    perm_ok = perm_ok && bytes_of(perm) == ref;
    ++perms;
  }

  TeacherSet dup{{"a", "b", "c"}, {t[0], t[0], t[0]}};
  TeacherSet one{{"a"}, {t[0]}};
  const auto dup_bytes = serialize_store(ensemble_stores(dup, cfg));
  const bool idem = dup_bytes == serialize_store(ensemble_stores(one, cfg)) &&
                    dup_bytes == serialize_store(calibrate_store(t[0], cfg).store);

  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + rng.below(50), m = 1 + rng.below(6);
    std::vector<SoftLabel> labels;
    for (std::size_t i = 0; i < m; ++i) labels.push_back(fixtures::random_label(rng, c, 0.5));
    const auto mean = ensemble_labels(labels);
    for (std::size_t k = 0; k < c; ++k) {
      long double s = 0.0L;
      for (const auto& l : labels) s += l[k];
      worst = std::max(worst, std::abs(mean[k] - static_cast<double>(s / m)));
    }
  }
  return {perm_ok && idem && worst <= ensemble_mean_tol,
          "permutations=" + std::to_string(perms + 1) + (perm_ok ? " identical" : " DIFFER") +
              " idempotent=" + (idem ? "yes" : "no") + " max_mean_err=" + num(worst, 15)};
}

Outcome selfmix_structure() {
  std::vector<CropRecord> crops;
  CounterRng labels_rng(5);
  for (std::size_t c = 0; c < 9; ++c)
    for (std::size_t i = 0; i < 13; ++i) {
      auto rec = fixtures::make_record("img" + std::to_string(i),
                                       quantize(fixtures::random_label(labels_rng, 10, 0.6), 10, 16), 0);
      crops.push_back(calibrate_record(std::move(rec), {}));
    }
  CounterRng rng(77);
  std::size_t plans = 0, cross = 0;
  double worst = 0.0;
  while (plans < 10000) {
    const auto batch = plan_selfmix(crops, rng, 1.0);
    if (batch.empty()) return {false, "no plans produced"};
    for (const auto& p : batch) {
      ++plans;
      cross += crops[p.crop_a.index].image_id != crops[p.crop_b.index].image_id;
      worst = std::max(worst, std::abs(p.lambda_eff - (1.0 - static_cast<double>(p.paste_box.w) * p.paste_box.h)));
    }
  }
  bool self_ok = true;
  for (int i = 0; i < 1000; ++i) {
    const auto y = fixtures::random_label(rng, 20, 0.5);
    self_ok = self_ok && mix_labels(y, y, rng.uniform()) == y;
  }
  return {cross == 0 && worst <= lambda_tol && self_ok,
          "plans=" + std::to_string(plans) + " cross_image=" + std::to_string(cross) + " max_lambda_err=" +
              num(worst, 12) + " mix(y,y)=y " + (self_ok ? "yes" : "no")};
}

Outcome sampler_geometry() {
  constexpr int W = 500, H = 375;
  SamplerConfig cfg;
  cfg.seed = 11;
  CounterRng rng(cfg.seed);
  const double A = static_cast<double>(W) * H;
  std::size_t bad = 0;
  std::vector<double> area, dist;
  for (int i = 0; i < 100000; ++i) {
    const auto c = sample_crop(W, H, cfg, rng);
    // Integer crop sides; each side may be off by half a pixel of rounding.
    const double w = std::round(c.box.w * W), h = std::round(c.box.h * H);
    const double x = std::round(c.box.x * W), y = std::round(c.box.y * H);
    const bool ok = x >= 0 && y >= 0 && x + w <= W && y + h <= H && (w + 0.5) * (h + 0.5) >= cfg.scale_min * A &&
                    (w - 0.5) * (h - 0.5) <= cfg.scale_max * A && (w + 0.5) / (h - 0.5) >= cfg.ratio_min &&
                    (w - 0.5) / (h + 0.5) <= cfg.ratio_max;
    bad += !ok;
    area.push_back(static_cast<double>(c.box.w) * c.box.h);
    const double cx = c.box.x + c.box.w / 2.0 - 0.5, cy = c.box.y + c.box.h / 2.0 - 0.5;
    dist.push_back(std::hypot(cx, cy));
  }
  const auto n = static_cast<double>(area.size());
  const double ma = std::accumulate(area.begin(), area.end(), 0.0) / n;
  const double md = std::accumulate(dist.begin(), dist.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < area.size(); ++i) {
    sab += (area[i] - ma) * (dist[i] - md);
    saa += (area[i] - ma) * (area[i] - ma);
    sbb += (dist[i] - md) * (dist[i] - md);
  }
  const double r = sab / std::sqrt(saa * sbb);
  return {bad == 0 && r <= max_area_distance_corr,
          "samples=100000 out_of_bounds=" + std::to_string(bad) + " corr(area,centre_dist)=" + num(r, 4)};
}

Outcome end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::array<TrainMode, 5> modes{TrainMode::fkd_random, TrainMode::ferkd_surgical, TrainMode::curriculum_e2h,
                                       TrainMode::curriculum_h2e, TrainMode::vkd};
  std::array<double, 5> mean{};
  double short_ferkd = 0.0;
  bool diverged = false;
  const std::size_t full = TrainConfig{}.steps;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto in = prepare_bench(seed);
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const auto r = run_experiment(bench_config(modes[m], seed, full), in.task, in.store);
      diverged = diverged || r.diverged_at.has_value();
      mean[m] += r.final_accuracy() / 5.0;
    }
    const auto r = run_experiment(bench_config(TrainMode::ferkd_surgical, seed, full * 2 / 3), in.task, in.store);
    diverged = diverged || r.diverged_at.has_value();
    short_ferkd += r.final_accuracy() / 5.0;
  }
  const double fkd = mean[0], ferkd = mean[1], e2h = mean[2], h2e = mean[3];
  const bool a = ferkd >= fkd;
  const bool b = fkd >= e2h && fkd >= h2e && e2h >= h2e;
  const bool c = short_ferkd >= fkd - budget_gap_tol;
  return {a && b && c && !diverged,
          std::string("(a)") + (a ? "ok" : "no") + " (b)" + (b ? "ok" : "no") + " (c)" + (c ? "ok" : "no") +
              " fkd=" + num(fkd, 4) + " ferkd=" + num(ferkd, 4) + " e2h=" + num(e2h, 4) + " h2e=" + num(h2e, 4) +
              " vkd=" + num(mean[4], 4) + " ferkd@2/3=" + num(short_ferkd, 4) + " time=" + num(seconds_since(t0), 1) +
              "s"};
}

Outcome format_golden() {
  const auto golden = fixtures::read_bytes(fixtures::data_path("golden_store.ferk"));
  const bool bytes_ok = serialize_store(fixtures::golden_store()) == golden;
  const auto back = parse_store(golden);
  const bool identity = back == fixtures::golden_store() && serialize_store(back) == golden;

  const auto kind_of = [](std::vector<std::uint8_t> bytes) -> std::optional<ErrorKind> {
    try {
      parse_store(bytes);
    } catch (const Error& e) {
      return e.kind();
    }
    return std::nullopt;
  };
  auto magic = golden;
  magic[0] ^= 0xFF;
  auto version = golden;
  version[4] = 9;
  const std::vector<std::uint8_t> cut(golden.begin(), golden.begin() + 140);
  const bool corrupt_ok = kind_of(magic) == ErrorKind::bad_magic && kind_of(version) == ErrorKind::bad_version &&
                          kind_of(cut) == ErrorKind::truncated;
  return {bytes_ok && identity && corrupt_ok, std::string("golden_bytes=") + (bytes_ok ? "match" : "DIFFER") +
                                                  " read_write_identity=" + (identity ? "yes" : "no") +
                                                  " corruptions=" + (corrupt_ok ? "bad_magic,bad_version,truncated" : "WRONG")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"crop_bin_reproduction", crop_bin_reproduction}, {"calibration_boundaries", calibration_boundaries},
      {"quantization_fidelity", quantization_fidelity}, {"gradient_suite", gradient_suite},
      {"ensemble_properties", ensemble_properties}, {"selfmix_structure", selfmix_structure},
      {"sampler_geometry", sampler_geometry}, {"end_to_end_benchmark", end_to_end},
      {"format_golden", format_golden}};
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o{false, ""};
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
