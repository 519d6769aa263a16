#pragma once

#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace moaecr {

// Scores are oriented higher = more live. Labels: 0 = live, 1 = fake.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Probability that a random live sample outscores a random fake, ties
// counted one half (rank statistic). Returns a fraction in [0,1].
double auc(const ScoredSet& s);

// Equal error rate by linear interpolation on the ROC polyline; returns
// (rate fraction, threshold). A sample is accepted as live iff
// score >= threshold.
std::pair<double, double> eer(const ScoredSet& s);

struct EvalReport {
  double acer = 0, acc = 0, auc = 0, eer = 0;  // percentages
  double apcer = 0, bpcer = 0;                 // percentages
  double threshold = 0;
  std::string threshold_source;

  std::string to_json() const;  // flat object, exact keys, 4 decimal places
};

// Threshold from the dev set's EER point, error rates from the test set.
EvalReport acer_at(const ScoredSet& dev, const ScoredSet& test,
                   const std::string& threshold_source = "dev-eer");

}  // namespace moaecr
