#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace moaecr {

namespace {

void check_set(const ScoredSet& s) {
  if (s.scores.size() != s.labels.size()) {
    throw DataError("scored set has " + std::to_string(s.scores.size()) +
                    " scores but " + std::to_string(s.labels.size()) +
                    " labels");
  }
  if (s.scores.empty()) throw DataError("scored set is empty");
  size_t live = 0, fake = 0;
  for (size_t i = 0; i < s.labels.size(); ++i) {
    if (s.labels[i] == 0) {
      ++live;
    } else if (s.labels[i] == 1) {
      ++fake;
    } else {
      throw DataError("label must be 0 (live) or 1 (fake), got " +
                      std::to_string(s.labels[i]));
    }
    if (!std::isfinite(s.scores[i])) throw DataError("non-finite score");
  }
  if (live == 0 || fake == 0) {
    throw DataError("scored set needs both classes (live=" +
                    std::to_string(live) + ", fake=" + std::to_string(fake) +
                    ")");
  }
}

// ROC polyline points, thresholds descending from above-max. The point for
// threshold t is (FAR(t), FRR(t)) with accept iff score >= t.
struct RocPoint {
  double threshold, far, frr;
};

std::vector<RocPoint> roc_polyline(const ScoredSet& s) {
  std::vector<double> live, fake;
  for (size_t i = 0; i < s.scores.size(); ++i) {
    (s.labels[i] == 0 ? live : fake).push_back(s.scores[i]);
  }
  std::sort(live.begin(), live.end());
  std::sort(fake.begin(), fake.end());

  std::vector<double> thresholds = s.scores;
  std::sort(thresholds.begin(), thresholds.end(),
            [](double a, double b) { return a > b; });
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  std::vector<RocPoint> pts;
  pts.reserve(thresholds.size() + 1);
  pts.push_back({thresholds.front() + 1.0, 0.0, 1.0});
  const double nl = static_cast<double>(live.size());
  const double nf = static_cast<double>(fake.size());
  for (double t : thresholds) {
    auto fake_ge = fake.end() - std::lower_bound(fake.begin(), fake.end(), t);
    auto live_lt = std::lower_bound(live.begin(), live.end(), t) - live.begin();
    pts.push_back({t, static_cast<double>(fake_ge) / nf,
                   static_cast<double>(live_lt) / nl});
  }
  return pts;
}

}  // namespace

double auc(const ScoredSet& s) {
  check_set(s);
  const size_t n = s.scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return s.scores[a] < s.scores[b];
  });

  // Average ranks over tie groups, 1-based.
  std::vector<double> rank(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) +
                              static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double live_rank_sum = 0.0;
  size_t n_live = 0, n_fake = 0;
  for (size_t k = 0; k < n; ++k) {
    if (s.labels[k] == 0) {
      live_rank_sum += rank[k];
      ++n_live;
    } else {
      ++n_fake;
    }
  }
  const double nl = static_cast<double>(n_live);
  const double u = live_rank_sum - nl * (nl + 1.0) / 2.0;
  return u / (nl * static_cast<double>(n_fake));
}

std::pair<double, double> eer(const ScoredSet& s) {
  check_set(s);
  const std::vector<RocPoint> pts = roc_polyline(s);
  // FAR - FRR starts at -1 and reaches >= 0 by the lowest threshold; find
  // the first sign change and interpolate linearly along that segment.
  for (size_t k = 0; k + 1 < pts.size(); ++k) {
    const double d0 = pts[k].far - pts[k].frr;
    const double d1 = pts[k + 1].far - pts[k + 1].frr;
    if (d1 < 0.0) continue;
    const double t = -d0 / (d1 - d0);  // d0 < 0 <= d1 on this segment
    const double rate = pts[k].far + t * (pts[k + 1].far - pts[k].far);
    const double thr =
        pts[k].threshold + t * (pts[k + 1].threshold - pts[k].threshold);
    return {rate, thr};
  }
  const RocPoint& last = pts.back();  // unreachable: last point has d >= 0
  return {0.5 * (last.far + last.frr), last.threshold};
}

std::string EvalReport::to_json() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "{\"acer\": %.4f, \"acc\": %.4f, \"auc\": %.4f, "
                "\"eer\": %.4f, \"threshold\": %.4f}",
                acer, acc, auc, eer, threshold);
  return std::string(buf);
}

EvalReport acer_at(const ScoredSet& dev, const ScoredSet& test,
                   const std::string& threshold_source) {
  check_set(test);
  const auto [dev_eer, thr] = eer(dev);

  size_t live = 0, fake = 0, live_rej = 0, fake_acc = 0;
  for (size_t i = 0; i < test.scores.size(); ++i) {
    const bool accept = test.scores[i] >= thr;
    if (test.labels[i] == 0) {
      ++live;
      if (!accept) ++live_rej;
    } else {
      ++fake;
      if (accept) ++fake_acc;
    }
  }
  EvalReport r;
  r.apcer = 100.0 * static_cast<double>(fake_acc) / static_cast<double>(fake);
  r.bpcer = 100.0 * static_cast<double>(live_rej) / static_cast<double>(live);
  r.acer = 0.5 * (r.apcer + r.bpcer);
  r.acc = 100.0 *
          static_cast<double>(test.scores.size() - live_rej - fake_acc) /
          static_cast<double>(test.scores.size());
  r.auc = 100.0 * auc(test);
  r.eer = 100.0 * dev_eer;
  r.threshold = thr;
  r.threshold_source = threshold_source;
  return r;
}

}  // namespace moaecr
