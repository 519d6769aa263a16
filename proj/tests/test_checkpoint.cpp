#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>

#include "checkpoint.hpp"
#include "config.hpp"
#include "doctest.h"
#include "trainer.hpp"

using namespace moaecr;

namespace {

EncoderConfig tiny_model() {
  EncoderConfig cfg;
  cfg.feature_dim = 8;
  cfg.token_width = 4;
  cfg.d = 8;
  cfg.blocks = 1;
  cfg.embed_dim = 4;
  cfg.moae.d = 8;
  cfg.moae.h = 2;
  cfg.moae.m = 2;
  cfg.moae.s = 1;
  return cfg;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  Model m = Model::init(tiny_model(), 42);
  const auto params = m.parameters();
  const std::string path = "ckpt_roundtrip.bin";
  save_checkpoint(path, "sample = config\n", params);

  Checkpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.config_text == "sample = config\n");
  REQUIRE(ckpt.arrays.size() == params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK(ckpt.arrays[i].name == params[i].first);
    CHECK(ckpt.arrays[i].shape == params[i].second.shape());
    const auto vals = params[i].second.data();
    REQUIRE(ckpt.arrays[i].values.size() == vals.size());
    for (size_t j = 0; j < vals.size(); ++j) {
      CHECK(ckpt.arrays[i].values[j] == vals[j]);  // bitwise
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("load_into restores perturbed parameters exactly") {
  Model m = Model::init(tiny_model(), 7);
  const std::string path = "ckpt_restore.bin";
  save_checkpoint(path, "", m.parameters());

  std::vector<std::vector<double>> original;
  for (auto& [name, p] : m.parameters()) {
    original.emplace_back(p.data().begin(), p.data().end());
    auto d = p.data_mut();
    for (double& v : d) v += 0.125;
  }

  load_into(load_checkpoint(path), m.parameters());
  size_t k = 0;
  for (auto& [name, p] : m.parameters()) {
    const auto d = p.data();
    for (size_t j = 0; j < d.size(); ++j) CHECK(d[j] == original[k][j]);
    ++k;
  }
  std::remove(path.c_str());
}

TEST_CASE("container rejects corrupt or mismatched inputs") {
  Model m = Model::init(tiny_model(), 3);
  const std::string path = "ckpt_corrupt.bin";
  save_checkpoint(path, "cfg", m.parameters());

  CHECK_THROWS_AS(load_checkpoint("ckpt_missing.bin"), DataError);

  {
    std::ofstream bad("ckpt_badmagic.bin", std::ios::binary);
    bad << "NOTACKPTxxxxxxxxxxxxxxxx";
  }
  CHECK_THROWS_AS(load_checkpoint("ckpt_badmagic.bin"), DataError);
  std::remove("ckpt_badmagic.bin");

  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out("ckpt_truncated.bin", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint("ckpt_truncated.bin"), DataError);
  std::remove("ckpt_truncated.bin");

  // Wrong model shape: same names, different widths.
  EncoderConfig wider = tiny_model();
  wider.embed_dim = 8;
  Model other = Model::init(wider, 3);
  CHECK_THROWS_AS(load_into(load_checkpoint(path), other.parameters()),
                  DataError);

  // Truncated parameter list.
  auto fewer = m.parameters();
  fewer.pop_back();
  CHECK_THROWS_AS(load_into(load_checkpoint(path), fewer), DataError);
  std::remove(path.c_str());
}

TEST_CASE("parameter names are unique and stable") {
  Model m = Model::init(tiny_model(), 9);
  const auto params = m.parameters();
  std::vector<std::string> names;
  for (const auto& [name, p] : params) names.push_back(name);
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  // The prompt parameters ride at the end of the flat list.
  CHECK(names[names.size() - 2] == "class_vectors");
  CHECK(names.back() == "log_scale");
}
