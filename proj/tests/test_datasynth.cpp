#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <map>
#include <set>
#include <vector>

#include "datasynth.hpp"
#include "doctest.h"
#include "linear_probe.hpp"
#include "metrics.hpp"

using namespace moaecr;

namespace {

SyntheticSpec small_spec(uint64_t seed = 11) {
  SyntheticSpec spec;
  spec.dims = 8;
  spec.attack_types = default_attack_types(4);
  spec.gap = 4.0;
  spec.n_live = 60;
  spec.n_per_type = 20;
  spec.seed = seed;
  return spec;
}

// Multiset of sample identities; payloads are continuous draws, so they
// identify samples exactly.
std::map<std::vector<double>, int> payload_counts(const Dataset& ds) {
  std::map<std::vector<double>, int> counts;
  for (const Sample& s : ds.samples) counts[s.payload] += 1;
  return counts;
}

}  // namespace

TEST_CASE("generation is deterministic with correct counts and labels") {
  const SyntheticSpec spec = small_spec();
  Dataset a = generate(spec);
  Dataset b = generate(spec);
  REQUIRE(a.samples.size() == 60 + 4 * 20);
  REQUIRE(b.samples.size() == a.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].payload == b.samples[i].payload);  // bitwise
    CHECK(a.samples[i].label == b.samples[i].label);
    CHECK(a.samples[i].attack_type == b.samples[i].attack_type);
    CHECK((a.samples[i].label == 1) == (a.samples[i].attack_type >= 1));
    CHECK(a.samples[i].payload.size() == 8);
  }
  CHECK(a.indices_of_type(0).size() == 60);
  for (int t = 1; t <= 4; ++t) CHECK(a.indices_of_type(t).size() == 20);

  Dataset c = generate(small_spec(12));
  CHECK(c.samples[0].payload != a.samples[0].payload);
}

TEST_CASE("spec validation rejects bad geometry") {
  SyntheticSpec spec = small_spec();
  spec.attack_types.resize(1);
  CHECK_THROWS_AS(generate(spec), ConfigError);

  spec = small_spec();
  spec.live_spread = 0.0;
  CHECK_THROWS_AS(generate(spec), ConfigError);

  spec = small_spec();
  spec.attack_types[2].spread = -1.0;
  CHECK_THROWS_AS(generate(spec), ConfigError);

  spec = small_spec();
  spec.gap = 0.0;
  CHECK_THROWS_AS(generate(spec), ConfigError);

  spec = small_spec();
  spec.attack_types[0].offset.assign(9, 1.0);  // longer than dims
  CHECK_THROWS_AS(generate(spec), ConfigError);

  spec = small_spec();
  spec.image_mode = true;
  spec.image_side = 7;  // grid for 8 dims is 3, so side must be 3,6,9,...
  CHECK_THROWS_AS(generate(spec), ConfigError);

  CHECK_THROWS_AS(default_attack_types(1), ConfigError);
}

TEST_CASE("per-type sample means concentrate on the specified centers") {
  SyntheticSpec spec;
  spec.dims = 16;
  spec.attack_types = default_attack_types(4);
  spec.gap = 4.0;
  spec.n_live = 600;
  spec.n_per_type = 150;
  spec.seed = 3;
  Dataset ds = generate(spec);

  for (int t = 0; t <= 4; ++t) {
    const auto idx = ds.indices_of_type(t);
    std::vector<double> center(16, 0.0);
    double sigma = spec.live_spread;
    if (t >= 1) {
      const AttackTypeSpec& a = spec.attack_types[static_cast<size_t>(t - 1)];
      for (size_t d = 0; d < a.offset.size(); ++d) {
        center[d] = spec.gap * a.offset[d];
      }
      sigma = a.spread;
    }
    const double bound =
        3.0 * sigma / std::sqrt(static_cast<double>(idx.size()));
    for (size_t d = 0; d < 16; ++d) {
      double mean = 0.0;
      for (int64_t i : idx) {
        mean += ds.samples[static_cast<size_t>(i)].payload[d];
      }
      mean /= static_cast<double>(idx.size());
      CHECK(std::abs(mean - center[d]) <= bound);
    }
  }
}

TEST_CASE("widely separated mixture is linearly separable") {
  SyntheticSpec spec = small_spec(5);
  spec.gap = 10.0;  // 10x every spread
  Dataset ds = generate(spec);
  const LinearProbe probe = fit_linear_probe(ds);
  CHECK(probe_train_accuracy(probe, ds) == 1.0);
  CHECK(auc(probe_scores(probe, ds)) == 1.0);
}

TEST_CASE("intra splits partition the dataset with per-type stratification") {
  Dataset ds = generate(small_spec());
  Splits sp = intra_splits(ds);

  CHECK(sp.train.samples.size() + sp.dev.samples.size() +
            sp.test.samples.size() ==
        ds.samples.size());
  // Each sample lands in exactly one split.
  auto counts = payload_counts(ds);
  for (const Dataset* part : {&sp.train, &sp.dev, &sp.test}) {
    for (const Sample& s : part->samples) counts[s.payload] -= 1;
  }
  for (const auto& [payload, c] : counts) CHECK(c == 0);

  // Stratification: every type shows up in every split at the 30%/7%/63%
  // proportions (exact integer arithmetic: n=20 -> 6/1/13, n=60 -> 18/4/38).
  for (int t = 0; t <= 4; ++t) {
    const size_t n = ds.indices_of_type(t).size();
    const size_t n_test = n * 3 / 10;
    const size_t n_dev = (n - n_test) / 10;
    CHECK(sp.test.indices_of_type(t).size() == n_test);
    CHECK(sp.dev.indices_of_type(t).size() == n_dev);
    CHECK(sp.train.indices_of_type(t).size() == n - n_test - n_dev);
  }

  // Identical seed reproduces the split exactly.
  Splits sp2 = intra_splits(ds);
  REQUIRE(sp2.train.samples.size() == sp.train.samples.size());
  for (size_t i = 0; i < sp.train.samples.size(); ++i) {
    CHECK(sp2.train.samples[i].payload == sp.train.samples[i].payload);
  }
}

TEST_CASE("leave one type out isolates the held type in test") {
  Dataset ds = generate(small_spec());
  for (int held = 1; held <= 4; ++held) {
    Splits sp = leave_one_type_out(ds, held);
    for (const Sample& s : sp.train.samples) CHECK(s.attack_type != held);
    for (const Sample& s : sp.dev.samples) CHECK(s.attack_type != held);
    for (const Sample& s : sp.test.samples) {
      CHECK((s.attack_type == held || s.attack_type == 0));
    }
    CHECK(sp.test.indices_of_type(held).size() == 20);
    CHECK(!sp.test.indices_of_type(0).empty());
    CHECK(!sp.dev.indices_of_type(0).empty());
    // Dev must contain fakes too: the threshold comes from dev EER.
    size_t dev_fakes = 0;
    for (const Sample& s : sp.dev.samples) dev_fakes += s.label;
    CHECK(dev_fakes > 0);

    CHECK(sp.train.samples.size() + sp.dev.samples.size() +
              sp.test.samples.size() ==
          ds.samples.size());
    auto counts = payload_counts(ds);
    for (const Dataset* part : {&sp.train, &sp.dev, &sp.test}) {
      for (const Sample& s : part->samples) counts[s.payload] -= 1;
    }
    for (const auto& [payload, c] : counts) CHECK(c == 0);
  }
  CHECK_THROWS_AS(leave_one_type_out(ds, 0), ConfigError);
  CHECK_THROWS_AS(leave_one_type_out(ds, 5), ConfigError);
}

TEST_CASE("balanced batches cover the split with class guarantees") {
  Dataset ds = generate(small_spec());
  Splits sp = intra_splits(ds);
  const int64_t bs = 32;
  auto batches = balanced_batches(sp.train, bs, 99);

  const int64_t n = static_cast<int64_t>(sp.train.samples.size());
  CHECK(static_cast<int64_t>(batches.size()) == (n + bs - 1) / bs);

  std::vector<int> occur(sp.train.samples.size(), 0);
  int64_t slots = 0;
  for (const auto& batch : batches) {
    CHECK(static_cast<int64_t>(batch.size()) == bs);
    slots += bs;
    int lives = 0, fakes = 0;
    for (int64_t i : batch) {
      occur[static_cast<size_t>(i)] += 1;
      (sp.train.samples[static_cast<size_t>(i)].label == 0 ? lives : fakes) +=
          1;
    }
    CHECK(lives >= 1);
    CHECK(fakes >= 1);
  }
  // Histogram oracle: everything once, padding duplicates only.
  const int64_t padding = slots - n;
  int64_t extras = 0;
  for (int c : occur) {
    CHECK(c >= 1);
    extras += c - 1;
  }
  CHECK(extras == padding);

  auto batches2 = balanced_batches(sp.train, bs, 99);
  CHECK(batches2 == batches);
  auto batches3 = balanced_batches(sp.train, bs, 100);
  CHECK(batches3 != batches);

  CHECK_THROWS_AS(balanced_batches(sp.train, 31, 1), ConfigError);
  CHECK_THROWS_AS(balanced_batches(sp.train, 0, 1), ConfigError);
  Dataset lives_only = sp.train;
  lives_only.samples.clear();
  for (const Sample& s : sp.train.samples) {
    if (s.label == 0) lives_only.samples.push_back(s);
  }
  CHECK_THROWS_AS(balanced_batches(lives_only, 4, 1), DataError);
}

TEST_CASE("csv round trip preserves every sample bit for bit") {
  Dataset ds = generate(small_spec());
  const std::string path = "datasynth_roundtrip.csv";
  export_csv(ds, path);
  Dataset back = import_csv(path);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].payload == ds.samples[i].payload);
    CHECK(back.samples[i].label == ds.samples[i].label);
    CHECK(back.samples[i].attack_type == ds.samples[i].attack_type);
  }
  CHECK(back.payload_width() == ds.payload_width());
  std::remove(path.c_str());
}

TEST_CASE("image mode renders each feature into a textured cell") {
  SyntheticSpec feat = small_spec(21);
  feat.dims = 4;
  feat.n_live = 3;
  feat.n_per_type = 2;
  SyntheticSpec img = feat;
  img.image_mode = true;
  img.image_side = 4;  // grid 2, cell 2

  Dataset df = generate(feat);
  Dataset di = generate(img);  // same seed: identical feature draws
  REQUIRE(di.samples.size() == df.samples.size());
  CHECK(di.payload_width() == 16);
  for (size_t i = 0; i < df.samples.size(); ++i) {
    const auto& f = df.samples[i].payload;
    const auto& px = di.samples[i].payload;
    for (int64_t r = 0; r < 4; ++r) {
      for (int64_t c = 0; c < 4; ++c) {
        const int64_t j = (r / 2) * 2 + (c / 2);
        const double texture = 0.8 + 0.4 * static_cast<double>((r + c) & 1);
        CHECK(px[static_cast<size_t>(r * 4 + c)] ==
              f[static_cast<size_t>(j)] * texture);
      }
    }
  }
}

TEST_CASE("payload tensors stack samples in index order") {
  Dataset ds = generate(small_spec());
  std::vector<int64_t> idx = {3, 0, 77};
  Tensor x = payload_tensor(ds, idx);
  REQUIRE(x.shape() == Shape{3, 8});
  for (size_t r = 0; r < idx.size(); ++r) {
    for (int64_t j = 0; j < 8; ++j) {
      CHECK(x.at({static_cast<int64_t>(r), j}) ==
            ds.samples[static_cast<size_t>(idx[r])]
                .payload[static_cast<size_t>(j)]);
    }
  }
  auto labels = label_vector(ds, idx);
  CHECK(labels == std::vector<int64_t>({0, 0, 1}));

  SyntheticSpec img = small_spec();
  img.dims = 4;
  img.image_mode = true;
  img.image_side = 4;
  Dataset di = generate(img);
  Tensor xi = payload_tensor(di, {0, 1});
  CHECK(xi.shape() == Shape{2, 1, 4, 4});

  CHECK(all_indices(ds).size() == ds.samples.size());
}
