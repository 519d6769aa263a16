#pragma once

#include <string>

#include "datasynth.hpp"
#include "encoder.hpp"

namespace moaecr {

struct LossConfig {
  bool dm = true;
  bool cdm = true;
  double t = 0.5;  // relation hinge threshold
  std::string baseline = "none";  // none|triplet|hard_triplet|npair|supcon

  void validate() const;
};

struct OptimConfig {
  std::string algorithm = "adam";
  double lr = 1e-3;
  double weight_decay = 5e-4;
  int64_t iterations = 2000;
  int64_t batch_size = 32;
  uint64_t seed = 1;

  void validate() const;
};

struct DataConfig {
  SyntheticSpec synth = default_synthetic_spec();
  std::string protocol = "intra";  // intra|loto
  int held_type = 4;               // loto only

  void validate() const;
};

struct RunConfig {
  EncoderConfig model;
  LossConfig loss;
  OptimConfig optim;
  DataConfig data;

  void validate() const;  // includes model/data width cross-checks
};

// Desk preset: feature-mode toy model sized for minutes-scale runs.
RunConfig desk_preset();
// Paper preset: the published optimizer settings (lr 1e-6, weight decay
// 5e-4, 300 iterations) on the same desk-scale model.
RunConfig paper_preset();
RunConfig preset_by_name(const std::string& name);

// Flat sectioned key=value text. Grammar: "[section]" headers, "key = value"
// lines, "#" comments, blank lines. Unknown sections or keys are errors.
// Values start from `base` so partial files override presets.
RunConfig parse_config_text(const std::string& text, const RunConfig& base);
RunConfig load_config_file(const std::string& path, const RunConfig& base);

// Canonical full rendering; parse_config_text(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& cfg);

}  // namespace moaecr
