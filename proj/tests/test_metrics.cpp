#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "metrics.hpp"
#include "rng.hpp"

using namespace moaecr;

namespace {

// Pairwise rank oracle: count live > fake pairs, ties half.
double auc_pairwise(const ScoredSet& s) {
  double wins = 0.0;
  size_t pairs = 0;
  for (size_t i = 0; i < s.scores.size(); ++i) {
    if (s.labels[i] != 0) continue;
    for (size_t j = 0; j < s.scores.size(); ++j) {
      if (s.labels[j] != 1) continue;
      ++pairs;
      if (s.scores[i] > s.scores[j]) {
        wins += 1.0;
      } else if (s.scores[i] == s.scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

ScoredSet random_set(SeededRng& rng, size_t n_live, size_t n_fake,
                     double sep, bool quantize = false) {
  std::vector<std::pair<double, int>> rows;
  for (size_t i = 0; i < n_live + n_fake; ++i) {
    const bool fake = i >= n_live;
    double v = rng.normal() + (fake ? -sep : sep);
    if (quantize) v = std::round(v * 4.0) / 4.0;  // force ties
    rows.push_back({v, fake ? 1 : 0});
  }
  rng.shuffle(rows);
  ScoredSet s;
  for (const auto& [v, l] : rows) {
    s.scores.push_back(v);
    s.labels.push_back(l);
  }
  return s;
}

// Dense threshold sweep oracle for EER: brute-force FAR/FRR at a descending
// grid of thresholds and interpolate the rate at the FAR - FRR sign flip.
double eer_sweep(const ScoredSet& s, size_t steps) {
  double lo = *std::min_element(s.scores.begin(), s.scores.end());
  double hi = *std::max_element(s.scores.begin(), s.scores.end());
  const double pad = 1e-6 * (hi - lo + 1.0);
  lo -= pad;
  hi += pad;
  auto rates_at = [&](double thr) {
    size_t live = 0, fake = 0, live_rej = 0, fake_acc = 0;
    for (size_t i = 0; i < s.scores.size(); ++i) {
      const bool accept = s.scores[i] >= thr;
      if (s.labels[i] == 0) {
        ++live;
        live_rej += accept ? 0 : 1;
      } else {
        ++fake;
        fake_acc += accept ? 1 : 0;
      }
    }
    return std::pair<double, double>(static_cast<double>(fake_acc) /fake,
                                     static_cast<double>(live_rej) / live);
  };
  double prev_far = 0.0, prev_frr = 1.0;  // at thr above hi
  for (size_t k = 0; k <= steps; ++k) {
    const double thr =
        hi - (hi - lo) * static_cast<double>(k) / static_cast<double>(steps);
    const auto [far, frr] = rates_at(thr);
    const double d = far - frr;
    if (d >= 0.0) {
      const double d0 = prev_far - prev_frr;
      const double t = d == d0 ? 1.0 : -d0 / (d - d0);
      return prev_far + t * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 0.5 * (prev_far + prev_frr);
}

}  // namespace

TEST_CASE("auc separates and degrades as designed") {
  ScoredSet perfect{{3.0, 2.5, 0.1, -1.0}, {0, 0, 1, 1}};
  CHECK(auc(perfect) == 1.0);
  ScoredSet inverted{{-1.0, 0.1, 2.5, 3.0}, {0, 0, 1, 1}};
  CHECK(auc(inverted) == 0.0);
  ScoredSet all_tied{{1.0, 1.0, 1.0, 1.0}, {0, 0, 1, 1}};
  CHECK(auc(all_tied) == 0.5);
  // One inversion among 2x2 pairs costs exactly a quarter.
  ScoredSet one_swap{{3.0, 0.5, 1.0, -1.0}, {0, 0, 1, 1}};
  CHECK(auc(one_swap) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("auc matches the pairwise oracle exactly on random sets") {
  SeededRng rng(501);
  for (int rep = 0; rep < 50; ++rep) {
    const size_t n_live = static_cast<size_t>(rng.uniform_int(4, 13));
    const size_t n_fake = static_cast<size_t>(rng.uniform_int(4, 13));
    ScoredSet s = random_set(rng, n_live, n_fake, 0.4, rep % 2 == 1);
    CHECK(auc(s) == auc_pairwise(s));
  }
}

TEST_CASE("auc of flipped labels complements the original") {
  SeededRng rng(502);
  for (int rep = 0; rep < 10; ++rep) {
    ScoredSet s = random_set(rng, 12, 9, 0.3, rep % 2 == 0);
    ScoredSet flipped = s;
    for (auto& l : flipped.labels) l = 1 - l;
    CHECK(auc(s) + auc(flipped) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("auc rejects degenerate input") {
  CHECK_THROWS_AS(auc({{1.0, 2.0}, {0, 0}}), DataError);
  CHECK_THROWS_AS(auc({{}, {}}), DataError);
  CHECK_THROWS_AS(auc({{1.0}, {0, 1}}), DataError);
  CHECK_THROWS_AS(auc({{1.0, 2.0}, {0, 7}}), DataError);
}

TEST_CASE("eer endpoints: perfect separation and label-free scores") {
  ScoredSet perfect{{3.0, 2.5, 0.1, -1.0}, {0, 0, 1, 1}};
  auto [rate, thr] = eer(perfect);
  CHECK(rate == doctest::Approx(0.0).epsilon(1e-12));
  // The threshold must reproduce the error-free operating point.
  for (size_t i = 0; i < perfect.scores.size(); ++i) {
    CHECK((perfect.scores[i] >= thr) == (perfect.labels[i] == 0));
  }

  ScoredSet uninformative{{1.0, 2.0, 1.0, 2.0}, {0, 0, 1, 1}};
  CHECK(eer(uninformative).first == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("eer agrees with a dense threshold sweep") {
  SeededRng rng(503);
  for (int rep = 0; rep < 20; ++rep) {
    ScoredSet s =
        random_set(rng, static_cast<size_t>(rng.uniform_int(30, 50)),
                   static_cast<size_t>(rng.uniform_int(30, 50)), 0.9,
                   rep % 3 == 0);
    const double rate = eer(s).first;
    const double swept = eer_sweep(s, 100000);
    CHECK(std::abs(rate - swept) < 1e-3);
  }
}

TEST_CASE("acer identity and confusion-matrix oracle") {
  // Dev pins the threshold between the classes at score 1.
  ScoredSet dev{{1.0, 1.0, -1.0, -1.0}, {0, 0, 1, 1}};
  // Test: 100 lives (4 rejected), 100 fakes (2 accepted).
  ScoredSet test;
  for (int i = 0; i < 100; ++i) {
    test.scores.push_back(i < 4 ? -1.0 : 1.0);
    test.labels.push_back(0);
  }
  for (int i = 0; i < 100; ++i) {
    test.scores.push_back(i < 2 ? 1.0 : -1.0);
    test.labels.push_back(1);
  }
  EvalReport r = acer_at(dev, test);
  CHECK(r.bpcer == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(r.apcer == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.acer == 0.5 * (r.apcer + r.bpcer));
  CHECK(r.acc == doctest::Approx(97.0).epsilon(1e-12));
  CHECK(r.eer == doctest::Approx(0.0).epsilon(1e-12));

  // Self-evaluation at a clean threshold is exact.
  EvalReport self = acer_at(dev, dev);
  CHECK(self.acer == 0.0);
  CHECK(self.acc == 100.0);
  CHECK(self.auc == 100.0);
}

TEST_CASE("monotone score transforms preserve auc, eer, and decisions") {
  SeededRng rng(504);
  for (int rep = 0; rep < 10; ++rep) {
    ScoredSet dev = random_set(rng, 25, 25, 0.8);
    ScoredSet test = random_set(rng, 40, 40, 0.8);
    auto warp = [](double x) { return x * x * x + 2.0 * x; };
    ScoredSet dev_w = dev, test_w = test;
    for (auto& v : dev_w.scores) v = warp(v);
    for (auto& v : test_w.scores) v = warp(v);

    CHECK(auc(test) == doctest::Approx(auc(test_w)).epsilon(1e-9));
    CHECK(eer(test).first ==
          doctest::Approx(eer(test_w).first).epsilon(1e-9));

    EvalReport a = acer_at(dev, test);
    EvalReport b = acer_at(dev_w, test_w);
    // Interpolated thresholds land in the same inter-score gap, so the
    // accept decisions and hence all error rates coincide.
    CHECK(a.apcer == doctest::Approx(b.apcer).epsilon(1e-9));
    CHECK(a.bpcer == doctest::Approx(b.bpcer).epsilon(1e-9));
    CHECK(a.acc == doctest::Approx(b.acc).epsilon(1e-9));
  }
}

TEST_CASE("report serializes to a flat five-key json object") {
  EvalReport r;
  r.acer = 3.0;
  r.acc = 97.0;
  r.auc = 99.125;
  r.eer = 2.5;
  r.threshold = -0.33335;
  CHECK(r.to_json() ==
        "{\"acer\": 3.0000, \"acc\": 97.0000, \"auc\": 99.1250, "
        "\"eer\": 2.5000, \"threshold\": -0.3333}");
}
