#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ferkd/error.hpp"
#include "ferkd/softlabel.hpp"
#include "expect.hpp"
#include "fixtures.hpp"

using namespace ferkd;
using fixtures::kind_of;

namespace {

double sum_of(const SoftLabel& l) {
  const auto p = l.probs();
  return std::accumulate(p.begin(), p.end(), 0.0);
}

}  // namespace

TEST_SUITE("softlabel") {
  TEST_CASE("soft label validation") {
    CHECK_NOTHROW(SoftLabel({0.25, 0.75}));
    CHECK(kind_of([] { SoftLabel({0.5, 0.6}); }) == ErrorKind::parameter);
    CHECK(kind_of([] { SoftLabel({1.2, -0.2}); }) == ErrorKind::parameter);
    CHECK(kind_of([] { SoftLabel(std::vector<double>{}); }) == ErrorKind::parameter);
    CHECK(kind_of([] { SoftLabel({NAN, 1.0}); }) == ErrorKind::parameter);
    CHECK(kind_of([] { HardLabel::make(3, 3); }) == ErrorKind::parameter);
    CHECK(HardLabel::make(2, 3).class_index == 2);
  }

  TEST_CASE("quantize keeps the top-K rounded to the grid") {
    const SoftLabel p({0.7, 0.2, 0.1, 0.0});
    const auto q = quantize(p, 2, 8);
    REQUIRE(q.top_k() == 2);
    CHECK(q.entries()[0] == QuantEntry{0, static_cast<std::uint16_t>(std::lround(0.7 * 255))});
    CHECK(q.entries()[1] == QuantEntry{1, static_cast<std::uint16_t>(std::lround(0.2 * 255))});
  }

  TEST_CASE("quantize of a one-hot label") {
    for (std::size_t k : {1u, 3u, 5u}) {
      const auto q = quantize(SoftLabel::one_hot(2, 5), k, 8);
      for (const auto& e : q.entries()) CHECK(e.qprob == (e.class_index == 2 ? 255 : 0));
    }
  }

  TEST_CASE("quantize breaks ties towards the lower class index") {
    const auto q = quantize(SoftLabel({0.25, 0.25, 0.25, 0.25}), 2, 8);
    CHECK(q.entries()[0].class_index == 0);
    CHECK(q.entries()[1].class_index == 1);
  }

  TEST_CASE("quantize parameter errors") {
    const SoftLabel p({0.5, 0.5});
    CHECK(kind_of([&] { quantize(p, 3, 8); }) == ErrorKind::parameter);
    CHECK(kind_of([&] { quantize(p, 0, 8); }) == ErrorKind::parameter);
    CHECK(kind_of([&] { quantize(p, 1, 0); }) == ErrorKind::parameter);
    CHECK(kind_of([&] { quantize(p, 1, 17); }) == ErrorKind::parameter);
  }

  TEST_CASE("quantize matches a full-sort rounding oracle on 1000 classes") {
    CounterRng rng(11);
    int compared = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const auto p = fixtures::random_label(rng, 1000, 0.05);
      std::vector<std::pair<double, ClassIndex>> all;
      for (ClassIndex i = 0; i < 1000; ++i) all.emplace_back(-p[i], i);
      std::sort(all.begin(), all.end());
      std::vector<QuantEntry> expect;
      long mass = 0;
      for (int i = 0; i < 10; ++i) {
        const auto v = static_cast<std::uint16_t>(std::round(-all[i].first * 255.0));
        expect.push_back({all[i].second, v});
        mass += v;
      }
      if (mass > 255) continue;  // capped case, checked separately
      std::sort(expect.begin(), expect.end(), [](auto& a, auto& b) { return a.class_index < b.class_index; });
      const auto q = quantize(p, 10, 8);
      CHECK(std::equal(expect.begin(), expect.end(), q.entries().begin(), q.entries().end()));
      ++compared;
    }
    CHECK(compared > 150);
  }

  TEST_CASE("rounding that overflows full scale stays within one step") {
    // Four entries of 63.5 steps each round up to 4 x 64 = 256 > 255.
    const double v = 63.5 / 255.0;
    const SoftLabel p({v, v, v, v, 1.0 - 4 * v});
    const auto q = quantize(p, 4, 8);
    std::uint32_t mass = 0;
    for (const auto& e : q.entries()) mass += e.qprob;
    CHECK(mass == 255);
    CHECK(q.dequantized_mass() <= 1.0);
    for (const auto& e : q.entries()) CHECK(std::abs(q.dequantize(e.qprob) - v) <= 1.0 / 255.0);
  }

  TEST_CASE("recover spreads the residual uniformly") {
    const QuantizedSoftLabel one({{0, 255}}, 4, 8);
    CHECK(recover(one) == SoftLabel({1.0, 0.0, 0.0, 0.0}));

    const QuantizedSoftLabel two({{0, 0}, {1, 0}}, 4, 8);
    CHECK(recover(two).probs()[2] == doctest::Approx(0.5));

    // dequantized (0.7, 0.2) with 10 bits: 716.1 and 204.6 are not on the grid,
    // so build the exact case from the 1/(2^B - 1) grid directly.
    const QuantizedSoftLabel q({{0, 714}, {1, 204}}, 4, 10);  // 714/1023, 204/1023
    const auto r = recover(q);
    const double a = 714.0 / 1023.0, b = 204.0 / 1023.0;
    CHECK(r[0] == doctest::Approx(a).epsilon(1e-15));
    CHECK(r[1] == doctest::Approx(b).epsilon(1e-15));
    CHECK(r[2] == doctest::Approx((1.0 - a - b) / 2.0).epsilon(1e-12));
    CHECK(r[3] == doctest::Approx((1.0 - a - b) / 2.0).epsilon(1e-12));
  }

  TEST_CASE("recover of (0.7, 0.2) spreads 0.05 to each remaining class") {
    const auto r = recover(quantize(SoftLabel({0.7, 0.2, 0.05, 0.05}), 2, 16));
    CHECK(r[0] == doctest::Approx(0.7).epsilon(1e-4));
    CHECK(r[1] == doctest::Approx(0.2).epsilon(1e-4));
    CHECK(r[2] == doctest::Approx(0.05).epsilon(1e-3));
    CHECK(r[2] == r[3]);
  }

  TEST_CASE("recover rejects a short full-dimension label") {
    const QuantizedSoftLabel q({{0, 100}, {1, 100}}, 2, 8);
    CHECK(kind_of([&] { recover(q); }) == ErrorKind::inconsistency);
  }

  TEST_CASE("quantized label invariants") {
    CHECK(kind_of([] { QuantizedSoftLabel({{1, 1}, {0, 1}}, 4, 8); }) == ErrorKind::parameter);
    CHECK(kind_of([] { QuantizedSoftLabel({{1, 1}, {1, 1}}, 4, 8); }) == ErrorKind::parameter);
    CHECK(kind_of([] { QuantizedSoftLabel({{4, 1}}, 4, 8); }) == ErrorKind::parameter);
    CHECK(kind_of([] { QuantizedSoftLabel({{0, 200}, {1, 200}}, 4, 8); }) == ErrorKind::parameter);
    CHECK(kind_of([] { QuantizedSoftLabel({{0, 256}}, 4, 8); }) == ErrorKind::parameter);
  }

  TEST_CASE("roundtrip sums to one and stays within one step on retained classes") {
    CounterRng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t C = 2 + rng.below(60);
      const std::size_t K = 1 + rng.below(C);
      const unsigned B = 1 + static_cast<unsigned>(rng.below(16));
      const auto p = fixtures::random_label(rng, C, 0.2 + rng.uniform());
      const auto q = quantize(p, K, B);
      const auto r = recover(q);
      CHECK(std::abs(sum_of(r) - 1.0) <= 1e-6);
      const double step = 1.0 / static_cast<double>((1u << B) - 1u);
      for (const auto& e : q.entries()) {
        const double err = std::abs(q.dequantize(e.qprob) - p[e.class_index]);
        CHECK(err <= step + 1e-12);
      }
    }
  }

  TEST_CASE("fidelity on a fixed corpus does not get worse with more bits") {
    CounterRng rng(99);
    std::vector<SoftLabel> corpus;
    for (int i = 0; i < 300; ++i) corpus.push_back(fixtures::random_label(rng, 50, 0.3));
    double previous = 2.0;
    for (unsigned B = 1; B <= 16; ++B) {
      double worst = 0.0;
      for (const auto& p : corpus) {
        const auto q = quantize(p, 10, B);
        const auto r = recover(q);
        for (const auto& e : q.entries()) worst = std::max(worst, std::abs(r[e.class_index] - p[e.class_index]));
      }
      CHECK(worst <= previous);
      previous = worst;
    }
  }

  TEST_CASE("quantize ignores how the input was produced") {
    const SoftLabel a({0.1, 0.2, 0.3, 0.4});
    std::vector<double> v{0.4, 0.3, 0.2, 0.1};
    std::reverse(v.begin(), v.end());
    CHECK(quantize(a, 2, 8) == quantize(SoftLabel(v), 2, 8));
  }

  TEST_CASE("max_prob, argmax, entropy") {
    const SoftLabel p({0.7, 0.2, 0.1});
    CHECK(max_prob(p) == 0.7);
    CHECK(argmax(p) == 0);
    CHECK(max_prob(SoftLabel::uniform(8)) == doctest::Approx(1.0 / 8));
    CHECK(entropy(SoftLabel::uniform(4)) == doctest::Approx(std::log(4.0)));
    CHECK(entropy(SoftLabel::one_hot(1, 4)) == 0.0);
  }

  TEST_CASE("bin statistics of a single label") {
    const std::vector<SoftLabel> one{SoftLabel({0.5, 0.3, 0.2})};
    const auto edges = crop_statistics_edges();
    const auto s = bin_statistics(one, edges);
    for (std::size_t i = 0; i < s.counts.size(); ++i) CHECK(s.bin_ratio[i] == (i == 5 ? 1.0 : 0.0));
    CHECK(s.agg_ratio.back() == 1.0);
  }

  TEST_CASE("bin statistics reproduce the table of crop statistics") {
    const auto labels = fixtures::ref_bin_labels();
    const auto edges = crop_statistics_edges();
    const auto s = bin_statistics(labels, edges);
    REQUIRE(s.counts.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(std::abs(100.0 * s.bin_ratio[i] - fixtures::ref_bin_ratio[i]) <= 0.01);
      CHECK(std::abs(100.0 * s.agg_ratio[i] - fixtures::ref_agg_ratio[i]) <= 0.01);
    }
    CHECK(std::abs(100.0 * s.agg_ratio[9] - 62.32) <= 0.01);
    CHECK(std::abs(100.0 * s.agg_ratio[4] - 8.31) <= 0.01);
  }

  TEST_CASE("bin statistics equal a brute-force count") {
    CounterRng rng(1234);
    std::vector<SoftLabel> labels;
    for (int i = 0; i < 10000; ++i) labels.push_back(fixtures::random_label(rng, 10, 0.2 + rng.uniform()));
    const auto edges = crop_statistics_edges();
    const auto s = bin_statistics(labels, edges);
    std::vector<std::size_t> expect(12, 0);
    for (const auto& l : labels) {
      const double m = max_prob(l);
      for (std::size_t b = 0; b < 12; ++b)
        if ((m >= edges[b] && m < edges[b + 1]) || (b == 11 && m == 1.0)) ++expect[b];
    }
    CHECK(s.counts == expect);
    double running = 0.0;
    for (std::size_t b = 0; b < 12; ++b) {
      running += s.bin_ratio[b];
      CHECK(std::abs(s.agg_ratio[b] - running) <= 1e-9);
      if (b > 0) CHECK(s.agg_ratio[b] >= s.agg_ratio[b - 1]);
    }
    CHECK(std::abs(s.agg_ratio.back() - 1.0) <= 1e-9);
  }

  TEST_CASE("bin statistics edge handling and errors") {
    const std::vector<double> edges{0.0, 0.5, 1.0};
    const std::vector<double> values{0.0, 0.5, 1.0};
    const auto s = bin_statistics_of_values(values, edges);
    CHECK(s.counts == std::vector<std::size_t>{1, 2});
    const std::vector<SoftLabel> none;
    CHECK(kind_of([&] { bin_statistics(none, edges); }) == ErrorKind::empty_input);
    const std::vector<double> bad{0.0, 0.6, 0.5, 1.0};
    CHECK(kind_of([&] { bin_statistics_of_values(values, bad); }) == ErrorKind::parameter);
    const std::vector<double> partial{0.1, 1.0};
    CHECK(kind_of([&] { bin_statistics_of_values(values, partial); }) == ErrorKind::parameter);
  }
}

TEST_SUITE("rng") {
  TEST_CASE("streams are reproducible and independent") {
    CounterRng a(42, 7), b(42, 7), c(42, 8);
    for (int i = 0; i < 100; ++i) {
      const auto va = a.next_u64();
      CHECK(va == b.next_u64());
      CHECK(va != c.next_u64());
    }
  }

  TEST_CASE("the i-th output is a pure function of the counter") {
    CounterRng a(3);
    a.next_u64();
    a.next_u64();
    const auto third = a.next_u64();
    CounterRng b(3);
    for (int i = 0; i < 2; ++i) b.next_u64();
    CHECK(b.next_u64() == third);
    CHECK(a.counter() == 3);
  }

  TEST_CASE("sampler moments") {
    CounterRng rng(8);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0, sb = 0;
    for (int i = 0; i < n; ++i) {
      su += rng.uniform();
      const double z = rng.normal();
      sn += z;
      sn2 += z * z;
      sb += rng.beta(2.0, 3.0);
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::abs(sn / n) < 0.01);
    CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(sb / n == doctest::Approx(0.4).epsilon(0.01));
    std::vector<int> hist(7, 0);
    for (int i = 0; i < 70000; ++i) ++hist[rng.below(7)];
    for (int h : hist) CHECK(std::abs(h - 10000) < 400);
  }
}
