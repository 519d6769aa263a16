#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <numeric>
#include <string>

#include "doctest.h"
#include "trainer.hpp"

using namespace moaecr;

namespace {

// Small enough to train in well under a second.
RunConfig tiny_config() {
  RunConfig cfg;
  cfg.model.feature_dim = 8;
  cfg.model.token_width = 4;
  cfg.model.d = 16;
  cfg.model.blocks = 1;
  cfg.model.embed_dim = 8;
  cfg.model.moae.d = 16;
  cfg.model.moae.h = 2;
  cfg.model.moae.m = 2;
  cfg.model.moae.s = 1;
  cfg.model.sublayer = Sublayer::moae;
  cfg.optim.lr = 1e-3;
  cfg.optim.iterations = 8;
  cfg.optim.batch_size = 8;
  cfg.optim.seed = 5;
  cfg.data.synth.dims = 8;
  cfg.data.synth.attack_types = default_attack_types(2, 2.25, 1.8);
  cfg.data.synth.n_live = 40;
  cfg.data.synth.n_per_type = 20;
  cfg.data.synth.seed = 11;
  return cfg;
}

std::string scrub_wall_clock(const std::string& json) {
  const std::string key = "\"wall_clock_ms\":";
  const size_t a = json.find(key);
  REQUIRE(a != std::string::npos);
  const size_t b = json.find('\n', a);
  return json.substr(0, a) + json.substr(b);
}

double mean_total(const std::vector<LossBundle>& h, size_t from, size_t to) {
  double acc = 0.0;
  for (size_t i = from; i < to; ++i) acc += h[i].l_total;
  return acc / static_cast<double>(to - from);
}

}  // namespace

TEST_CASE("adam minimizes a quadratic") {
  Tensor p = Tensor::from({4}, {5.0, -3.0, 2.0, -1.0}, true);
  const std::vector<double> target = {1.0, 2.0, -4.0, 0.5};
  Tensor t = Tensor::from({4}, target);
  Adam adam({p}, 0.05, 0.0);
  for (int it = 0; it < 400; ++it) {
    Tensor loss = sum(square(p - t));
    backward(loss);
    adam.step();
    adam.zero_grad();
  }
  const auto vals = p.data();
  for (size_t i = 0; i < target.size(); ++i) {
    CHECK(std::abs(vals[i] - target[i]) < 1e-3);
  }
}

TEST_CASE("adam weight decay shrinks parameters without a loss gradient") {
  Tensor p = Tensor::from({3}, {4.0, -2.0, 1.0}, true);
  Adam adam({p}, 0.01, 0.1);
  double prev = 7.0;
  for (int it = 0; it < 50; ++it) {
    adam.step();  // grads stay zero; only the decay term acts
    const auto vals = p.data();
    const double norm = std::abs(vals[0]) + std::abs(vals[1]) + std::abs(vals[2]);
    CHECK(norm < prev);
    prev = norm;
  }
}

TEST_CASE("zero iterations still evaluates the initialized model") {
  RunConfig cfg = tiny_config();
  cfg.optim.iterations = 0;
  TrainResult res = train_run(cfg);
  CHECK(res.record.history.empty());
  CHECK(res.record.final_eval.auc >= 0.0);
  CHECK(res.record.final_eval.auc <= 100.0);
  CHECK(res.record.final_eval.acc >= 0.0);
  CHECK(res.record.final_eval.acc <= 100.0);
  CHECK(res.record.wall_clock_ms >= 0.0);
  const std::string json = res.record.to_json();
  CHECK(json.find("\"iterations\": 0") != std::string::npos);
  CHECK(json.find("\"history\": []") != std::string::npos);
}

TEST_CASE("identical config and seed reproduce the run byte for byte") {
  RunConfig cfg = tiny_config();
  TrainResult a = train_run(cfg);
  TrainResult b = train_run(cfg);
  REQUIRE(a.record.history.size() == b.record.history.size());
  for (size_t i = 0; i < a.record.history.size(); ++i) {
    CHECK(a.record.history[i].l_total == b.record.history[i].l_total);
    CHECK(a.record.history[i].l_ce == b.record.history[i].l_ce);
    CHECK(a.record.history[i].l_dm == b.record.history[i].l_dm);
    CHECK(a.record.history[i].l_cdm == b.record.history[i].l_cdm);
  }
  CHECK(scrub_wall_clock(a.record.to_json()) ==
        scrub_wall_clock(b.record.to_json()));

  RunConfig other = cfg;
  other.optim.seed = 6;
  TrainResult c = train_run(other);
  bool any_differs = false;
  for (size_t i = 0; i < c.record.history.size(); ++i) {
    if (c.record.history[i].l_total != a.record.history[i].l_total) {
      any_differs = true;
      break;
    }
  }
  CHECK(any_differs);
}

TEST_CASE("training reduces the combined loss on easy data") {
  RunConfig cfg = tiny_config();
  cfg.optim.iterations = 80;
  TrainResult res = train_run(cfg);
  REQUIRE(res.record.history.size() == 80);
  const double head = mean_total(res.record.history, 0, 10);
  const double tail = mean_total(res.record.history, 70, 80);
  CHECK(tail < head);
  for (const LossBundle& b : res.record.history) CHECK(b.all_finite());
}

TEST_CASE("runaway step size aborts with a diagnostic") {
  RunConfig cfg = tiny_config();
  cfg.optim.lr = 1e150;
  cfg.optim.iterations = 30;
  try {
    train_run(cfg);
    FAIL("expected a numeric abort");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("non-finite at iteration") != std::string::npos);
    CHECK(msg.find("last finite bundle") != std::string::npos);
  }
}

TEST_CASE("protocol selects the split procedure") {
  RunConfig cfg = tiny_config();
  cfg.data.synth.attack_types = default_attack_types(3, 2.25, 1.8);
  Dataset ds = generate(cfg.data.synth);

  cfg.data.protocol = "loto";
  cfg.data.held_type = 2;
  Splits loto = make_splits(cfg, ds);
  for (const Sample& s : loto.train.samples) CHECK(s.attack_type != 2);
  for (const Sample& s : loto.dev.samples) CHECK(s.attack_type != 2);
  bool saw_held = false;
  for (const Sample& s : loto.test.samples) {
    if (s.label == 1) {
      CHECK(s.attack_type == 2);
      saw_held = true;
    }
  }
  CHECK(saw_held);

  cfg.data.protocol = "intra";
  Splits intra = make_splits(cfg, ds);
  for (int type = 0; type <= 3; ++type) {
    bool in_train = false;
    for (const Sample& s : intra.train.samples) {
      in_train = in_train || s.attack_type == type;
    }
    CHECK(in_train);
  }
}

TEST_CASE("score orientation and embedding export") {
  RunConfig cfg = tiny_config();
  TrainResult res = train_run(cfg);

  ScoredSet scores = score_split(res.model, res.splits.test);
  CHECK(scores.scores.size() == res.splits.test.samples.size());
  for (size_t i = 0; i < scores.labels.size(); ++i) {
    CHECK(scores.labels[i] == res.splits.test.samples[i].label);
  }

  Dataset emb = embedding_dataset(res.model, res.splits.test);
  CHECK(emb.samples.size() == res.splits.test.samples.size());
  CHECK(emb.payload_width() == res.model.encoder.cfg.d);
  CHECK_FALSE(emb.spec.image_mode);
  for (size_t i = 0; i < emb.samples.size(); ++i) {
    CHECK(emb.samples[i].label == res.splits.test.samples[i].label);
    CHECK(emb.samples[i].attack_type == res.splits.test.samples[i].attack_type);
    for (double v : emb.samples[i].payload) CHECK(std::isfinite(v));
  }
}
