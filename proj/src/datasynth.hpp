#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace moaecr {

// One fake sub-population: center = gap * offset, isotropic spread.
struct AttackTypeSpec {
  std::vector<double> offset;  // in gap units; length < 1 means nearer live
  double spread = 1.0;
};

struct SyntheticSpec {
  int64_t dims = 16;
  std::vector<AttackTypeSpec> attack_types;  // size K >= 2
  double live_spread = 1.0;
  double gap = 3.5;  // live-to-common-fake center distance
  int64_t n_live = 600;
  int64_t n_per_type = 150;
  uint64_t seed = 1;
  bool image_mode = false;   // render features into patch textures
  int64_t image_side = 16;

  int k() const { return static_cast<int>(attack_types.size()); }
  void validate() const;
};

// Common types fan across a quarter arc in the e1/e2 plane; the final type
// is the rare one: along e3 with its own spread. The three-argument form
// keeps the rare spread equal to the common one.
std::vector<AttackTypeSpec> default_attack_types(int k, double spread,
                                                 double rare_distance,
                                                 double rare_spread);
std::vector<AttackTypeSpec> default_attack_types(int k, double spread = 1.0,
                                                 double rare_distance = 1.8);

// Calibrated overlap: compact live cluster, wide fake shells around distinct
// directions. A linear probe on raw features reads AUC near 0.85 while the
// generative-model ceiling stays above 99% accuracy.
SyntheticSpec default_synthetic_spec();

struct Sample {
  std::vector<double> payload;  // features, or image pixels in image mode
  int label = 0;                // 0 = live, 1 = fake
  int attack_type = 0;          // 0 = live, 1..K = fake sub-population
};

struct Dataset {
  SyntheticSpec spec;
  std::vector<Sample> samples;

  int64_t payload_width() const;
  std::vector<int64_t> indices_of_type(int attack_type) const;
};

Dataset generate(const SyntheticSpec& spec);

struct Splits {
  Dataset train, dev, test;
};

// Stratified per attack type: 30% test, then 10% of the remainder as dev.
Splits intra_splits(const Dataset& ds);

// Held type's fakes all go to test (with a share of lives); train and dev
// never see the held type. Dev = 10% of the train pool, stratified by class.
Splits leave_one_type_out(const Dataset& ds, int held_type);

// Index batches over split.samples. Every batch holds >= 1 live and >= 1
// fake; each sample appears once per epoch apart from tail padding.
std::vector<std::vector<int64_t>> balanced_batches(const Dataset& split,
                                                   int64_t batch_size,
                                                   uint64_t seed);

// Stacks payloads into [n, F] (feature mode) or [n, 1, side, side] (image
// mode); labels as a plain vector in the same order.
Tensor payload_tensor(const Dataset& ds, const std::vector<int64_t>& idx);
std::vector<int64_t> label_vector(const Dataset& ds,
                                  const std::vector<int64_t>& idx);
std::vector<int64_t> all_indices(const Dataset& ds);

void export_csv(const Dataset& ds, const std::string& path);
Dataset import_csv(const std::string& path);

}  // namespace moaecr
