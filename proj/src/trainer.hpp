#pragma once

#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "crloss.hpp"
#include "datasynth.hpp"
#include "encoder.hpp"
#include "metrics.hpp"

namespace moaecr {

struct Model {
  Encoder encoder;
  ClassTextEmbeddings prompts;

  static Model init(const EncoderConfig& cfg, uint64_t seed);
  std::vector<std::pair<std::string, Tensor>> parameters() const;
};

// Adam with L2 weight decay folded into the gradient before the moment
// updates; betas 0.9/0.999, eps 1e-8.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double weight_decay);
  void step();
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, weight_decay_;
  int64_t t_ = 0;
};

struct RunRecord {
  std::string config_text;
  std::vector<LossBundle> history;
  EvalReport final_eval;
  double wall_clock_ms = 0.0;

  // Deterministic rendering; wall_clock_ms is the only field that varies
  // between identical runs.
  std::string to_json() const;
};

struct TrainResult {
  RunRecord record;
  Model model;
  Dataset dataset;
  Splits splits;
};

Splits make_splits(const RunConfig& cfg, const Dataset& ds);

// Higher = more live: similarity to the live prompt minus similarity to the
// fake prompt. No gradients are recorded.
ScoredSet score_split(const Model& model, const Dataset& split);

EvalReport evaluate_model(const Model& model, const Dataset& dev,
                          const Dataset& test);

// Full pipeline: generate data, split, train, evaluate against the dev-set
// threshold. Aborts with a numeric error if the loss leaves the finite
// range, reporting the iteration and the last finite bundle.
TrainResult train_run(const RunConfig& cfg);

// Pooled features of a split as a dataset (payload = pooled vector), ready
// for CSV export and the projection tool.
Dataset embedding_dataset(const Model& model, const Dataset& split);

}  // namespace moaecr
