#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "crloss.hpp"
#include "rng.hpp"

using namespace moaecr;

namespace {

Tensor random_tensor(Shape shape, SeededRng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data_mut()) v = (rng.uniform() * 2.0 - 1.0) * scale;
  return t;
}

std::vector<int> random_two_class_labels(int64_t n, SeededRng& rng) {
  std::vector<int> labels(static_cast<size_t>(n));
  for (auto& y : labels) y = static_cast<int>(rng.uniform_int(0, 1));
  labels[0] = 0;  // both classes always present
  labels[1] = 1;
  return labels;
}

double euclid(const Tensor& x, int64_t a, int64_t b) {
  double s = 0.0;
  for (int64_t j = 0; j < x.dim(1); ++j) {
    double d = x.at({a, j}) - x.at({b, j});
    s += d * d;
  }
  return std::sqrt(s);
}

double dot_rows(const Tensor& x, int64_t a, int64_t b) {
  double s = 0.0;
  for (int64_t j = 0; j < x.dim(1); ++j) s += x.at({a, j}) * x.at({b, j});
  return s;
}

}  // namespace

TEST_CASE("class centers are per-class means") {
  Tensor x1 = Tensor::from({2, 2}, {1, 1, 3, 3});
  ClassCenters c1 = class_centers(x1, {0, 1});
  CHECK(c1.centers.at({0, 0}) == 1.0);
  CHECK(c1.centers.at({1, 1}) == 3.0);
  CHECK(c1.counts == std::vector<int64_t>{1, 1});

  Tensor x2 = Tensor::from({4, 2}, {0, 0, 2, 2, 5, 5, 7, 7});
  ClassCenters c2 = class_centers(x2, {0, 0, 1, 1});
  CHECK(c2.centers.at({0, 0}) == 1.0);
  CHECK(c2.centers.at({1, 0}) == 6.0);

  SeededRng rng(41);
  Tensor x = random_tensor({9, 5}, rng, 2.0);
  auto labels = random_two_class_labels(9, rng);
  ClassCenters c = class_centers(x, labels);
  for (int cls = 0; cls < 2; ++cls) {
    for (int64_t j = 0; j < 5; ++j) {
      double s = 0.0;
      int64_t cnt = 0;
      for (int64_t i = 0; i < 9; ++i)
        if (labels[static_cast<size_t>(i)] == cls) {
          s += x.at({i, j});
          ++cnt;
        }
      CHECK(std::abs(c.centers.at({cls, j}) - s / static_cast<double>(cnt)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(class_centers(x, std::vector<int>(9, 0)), DataError);
}

TEST_CASE("center relation matrix arithmetic") {
  // orthogonal centers: off-diagonal similarity 0, no hinge excess
  ClassCenters ortho{Tensor::from({2, 2}, {1, 0, 0, 1}), {1, 1}};
  RelationMatrix r = center_relation(ortho);
  CHECK(r.r_or.at({0, 1}) == 0.0);
  CHECK(r.r_or.at({0, 0}) == 0.0);  // diagonal removed
  CHECK(r.q.at({0, 1}) == 0.0);
  CHECK(r.q.at({1, 0}) == 0.0);

  // p=1 centers 1 and 0.7: off-diagonal similarity 0.7, excess 0.2 over t=0.5
  ClassCenters near{Tensor::from({2, 1}, {1.0, 0.7}), {1, 1}};
  RelationMatrix r2 = center_relation(near, 0.5);
  CHECK(std::abs(r2.r_or.at({0, 1}) - 0.7) < 1e-12);
  CHECK(std::abs(r2.q.at({0, 1}) - 0.2) < 1e-12);
  CHECK(std::abs(dm_loss(r2).item() - 0.04) < 1e-12);

  SeededRng rng(42);
  Tensor ctr = random_tensor({2, 6}, rng, 1.5);
  ClassCenters rc{ctr, {3, 3}};
  RelationMatrix r3 = center_relation(rc, 0.5);
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 2; ++j) {
      double dot = 0.0;
      for (int64_t k = 0; k < 6; ++k) dot += ctr.at({i, k}) * ctr.at({j, k});
      dot /= std::sqrt(6.0);
      CHECK(std::abs(r3.r_c.at({i, j}) - dot) < 1e-12);
      double want_or = i == j ? 0.0 : dot;
      CHECK(std::abs(r3.r_or.at({i, j}) - want_or) < 1e-12);
      CHECK(std::abs(r3.q.at({i, j}) - std::max(want_or - 0.5, 0.0)) < 1e-12);
    }
}

TEST_CASE("dm loss zero cases and gradcheck through centers") {
  ClassCenters separated{Tensor::from({2, 2}, {1, 0, 0, 1}), {1, 1}};
  CHECK(dm_loss(center_relation(separated)).item() == 0.0);

  SeededRng rng(43);
  // centers close enough that the excess is active
  Tensor x = random_tensor({6, 4}, rng, 0.2);
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t j = 0; j < 4; ++j) x.data_mut()[static_cast<size_t>(i * 4 + j)] += 1.0;
  std::vector<int> labels{0, 0, 0, 1, 1, 1};
  auto f = [&](const std::vector<Tensor>& in) {
    return dm_loss(center_relation(class_centers(in[0], labels)));
  };
  REQUIRE(f({x}).item() > 0.0);
  auto res = gradcheck(f, {x});
  INFO(res.summary());
  CHECK(res.pass);
}

TEST_CASE("a descent step on centers never increases the hinged excess") {
  SeededRng rng(44);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor ctr = random_tensor({2, 3}, rng, 1.2);
    ctr.set_requires_grad(true);
    ClassCenters cc{ctr, {1, 1}};
    RelationMatrix rel = center_relation(cc);
    double q01 = rel.q.at({0, 1}), q10 = rel.q.at({1, 0});
    double or01 = rel.r_or.at({0, 1}), or10 = rel.r_or.at({1, 0});
    backward(dm_loss(rel));
    Tensor stepped = Tensor::zeros({2, 3});
    for (int64_t i = 0; i < 6; ++i)
      stepped.data_mut()[static_cast<size_t>(i)] = ctr.data()[i] - 1e-3 * ctr.grad()[i];
    NoGradGuard ng;
    RelationMatrix rel2 = center_relation(ClassCenters{stepped, {1, 1}});
    CHECK(rel2.q.at({0, 1}) <= q01 + 1e-12);
    CHECK(rel2.q.at({1, 0}) <= q10 + 1e-12);
    if (q01 > 0.0) CHECK(rel2.r_or.at({0, 1}) < or01);
    if (q10 > 0.0) CHECK(rel2.r_or.at({1, 0}) < or10);
  }
}

TEST_CASE("attraction loss values and radial monotonicity") {
  // every x at its center with a single feature: exact zero
  Tensor x0 = Tensor::from({4, 1}, {2, 2, -1, -1});
  std::vector<int> l0{0, 0, 1, 1};
  ClassCenters c0 = class_centers(x0, l0);
  CHECK(attraction_loss(x0, c0, l0).item() == 0.0);

  // single sample, single feature, half a unit from its center
  ClassCenters c1{Tensor::from({2, 1}, {0.0, 9.0}), {1, 1}};
  CHECK(std::abs(attraction_loss(Tensor::from({1, 1}, {0.5}), c1, {0}).item() - 0.25) < 1e-12);

  SeededRng rng(45);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x = random_tensor({8, 4}, rng, 1.0);
    auto labels = random_two_class_labels(8, rng);
    ClassCenters c = class_centers(x, labels);
    NoGradGuard ng;
    double base = attraction_loss(x, c, labels).item();
    double prev = base;
    for (double alpha : {1.5, 2.0}) {
      Tensor scaled = Tensor::zeros({8, 4});
      for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 4; ++j) {
          double ctr = c.centers.at({labels[static_cast<size_t>(i)], j});
          scaled.data_mut()[static_cast<size_t>(i * 4 + j)] =
              ctr + alpha * (x.at({i, j}) - ctr);
        }
      // scaling around the centers leaves the class means in place
      double l = attraction_loss(scaled, class_centers(scaled, labels), labels).item();
      CHECK(l > prev);
      prev = l;
    }
  }
}

TEST_CASE("attraction loss passes gradcheck") {
  SeededRng rng(46);
  Tensor x = random_tensor({6, 3}, rng, 1.0);
  std::vector<int> labels{0, 1, 0, 1, 0, 1};
  auto f = [&](const std::vector<Tensor>& in) {
    return attraction_loss(in[0], class_centers(in[0], labels), labels);
  };
  auto res = gradcheck(f, {x});
  INFO(res.summary());
  CHECK(res.pass);
}

TEST_CASE("repulsion loss values, monotonicity, gradcheck") {
  // saturated correct-class logits
  ClassCenters c{Tensor::from({2, 2}, {100, 0, 0, 100}), {1, 1}};
  Tensor x_sat = Tensor::from({2, 2}, {1, 0, 0, 1});
  CHECK(repulsion_loss(x_sat, c, {0, 1}).item() < 1e-6);

  // equal logits: wrong-class probability one half
  ClassCenters cz{Tensor::from({2, 2}, {1, 1, 1, 1}), {1, 1}};
  CHECK(std::abs(repulsion_loss(Tensor::from({1, 2}, {0.3, 0.4}), cz, {0}).item() - 0.25) <
        1e-12);

  // direct evaluation on a random batch
  SeededRng rng(47);
  Tensor x = random_tensor({7, 3}, rng, 1.5);
  auto labels = random_two_class_labels(7, rng);
  ClassCenters cc = class_centers(x, labels);
  double want = 0.0;
  for (int64_t i = 0; i < 7; ++i) {
    double s0 = 0.0, s1 = 0.0;
    for (int64_t j = 0; j < 3; ++j) {
      s0 += x.at({i, j}) * cc.centers.at({0, j});
      s1 += x.at({i, j}) * cc.centers.at({1, j});
    }
    double m = std::max(s0, s1);
    double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
    double wrong = labels[static_cast<size_t>(i)] == 0 ? e1 / (e0 + e1) : e0 / (e0 + e1);
    want += wrong * wrong;
  }
  want /= 7.0;
  CHECK(std::abs(repulsion_loss(x, cc, labels).item() - want) < 1e-12);

  // pushing one sample toward the wrong class strictly raises the loss
  ClassCenters ortho{Tensor::from({2, 2}, {2, 0, 0, 2}), {1, 1}};
  double prev = -1.0;
  for (double delta : {0.0, 0.2, 0.4, 0.8}) {
    Tensor xi = Tensor::from({2, 2}, {1.0, delta, 0.1, 1.0});
    double l = repulsion_loss(xi, ortho, {0, 1}).item();
    if (prev >= 0.0) CHECK(l > prev);
    prev = l;
  }

  auto f = [&](const std::vector<Tensor>& in) {
    return repulsion_loss(in[0], class_centers(in[0], labels), labels);
  };
  auto res = gradcheck(f, {x});
  INFO(res.summary());
  CHECK(res.pass);
}

TEST_CASE("cdm decomposes into attraction plus repulsion") {
  SeededRng rng(48);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor x = random_tensor({6, 4}, rng, 1.5);
    auto labels = random_two_class_labels(6, rng);
    ClassCenters c = class_centers(x, labels);
    double a = attraction_loss(x, c, labels).item();
    double r = repulsion_loss(x, c, labels).item();
    CHECK(std::abs(cdm_loss(x, c, labels).item() - (a + r)) < 1e-12);
  }
}

TEST_CASE("total objective is the plain sum and feeds gradients to all terms") {
  Tensor a = Tensor::scalar(1.0), b = Tensor::scalar(0.0), c = Tensor::scalar(0.0);
  CHECK(total_loss(a, b, c).item() == 1.0);
  CHECK(std::abs(total_loss(Tensor::scalar(0.5), Tensor::scalar(0.04), Tensor::scalar(0.29))
                     .item() -
                 0.83) < 1e-15);

  SeededRng rng(49);
  Tensor x = random_tensor({6, 3}, rng, 0.4);
  for (auto& v : x.data_mut()) v += 1.0;  // centers overlap: every term active
  x.set_requires_grad(true);
  std::vector<int> labels{0, 1, 0, 1, 0, 1};
  ClassCenters cc = class_centers(x, labels);
  Tensor l_ce = mean(square(x));  // classification stand-in with nonzero gradient
  Tensor l_dm = dm_loss(center_relation(cc));
  Tensor l_cdm = cdm_loss(x, cc, labels);
  REQUIRE(l_dm.item() > 0.0);
  REQUIRE(l_cdm.item() > 0.0);
  backward(total_loss(l_ce, l_dm, l_cdm));
  double gnorm = 0.0;
  for (double g : x.grad()) gnorm += g * g;
  CHECK(gnorm > 0.0);
  // each addend alone also moves x
  for (Tensor term : {l_ce, l_dm, l_cdm}) {
    x.zero_grad();
    backward(term);
    double n2 = 0.0;
    for (double g : x.grad()) n2 += g * g;
    CHECK(n2 > 0.0);
  }
}

TEST_CASE("triplet loss matches brute force and handles clean separation") {
  // well separated clusters: margin satisfied everywhere
  Tensor far = Tensor::from({4, 2}, {0, 0, 0.1, 0, 10, 10, 10.1, 10});
  std::vector<int> lf{0, 0, 1, 1};
  CHECK(triplet_loss(far, lf, 0.3).item() == 0.0);

  SeededRng rng(50);
  Tensor x = random_tensor({8, 3}, rng, 1.0);
  auto labels = random_two_class_labels(8, rng);
  double margin = 0.3;
  double want = 0.0;
  int64_t count = 0;
  for (int64_t a = 0; a < 8; ++a)
    for (int64_t p = 0; p < 8; ++p) {
      if (p == a || labels[static_cast<size_t>(p)] != labels[static_cast<size_t>(a)]) continue;
      for (int64_t k = 0; k < 8; ++k) {
        if (labels[static_cast<size_t>(k)] == labels[static_cast<size_t>(a)]) continue;
        want += std::max(0.0, margin + euclid(x, a, p) - euclid(x, a, k));
        ++count;
      }
    }
  want /= static_cast<double>(count);
  CHECK(std::abs(triplet_loss(x, labels, margin).item() - want) < 1e-12);

  bool degenerate = false;
  CHECK(triplet_loss(x, std::vector<int>(8, 1), 0.3, &degenerate).item() == 0.0);
  CHECK(degenerate);
}

TEST_CASE("hard triplet mines batch-hard pairs") {
  // two coincident points with different labels: loss equals the margin
  Tensor coincident = Tensor::from({4, 2}, {1, 1, 1, 1, 1, 1, 1, 1});
  CHECK(std::abs(hard_triplet_loss(coincident, {0, 0, 1, 1}, 0.3).item() - 0.3) < 1e-12);

  SeededRng rng(51);
  Tensor x = random_tensor({8, 3}, rng, 1.0);
  auto labels = random_two_class_labels(8, rng);
  double margin = 0.3;
  double want = 0.0;
  int64_t anchors = 0;
  for (int64_t a = 0; a < 8; ++a) {
    double hardest_pos = -1.0, hardest_neg = 1e300;
    for (int64_t j = 0; j < 8; ++j) {
      if (j == a) continue;
      double d = euclid(x, a, j);
      if (labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(a)])
        hardest_pos = std::max(hardest_pos, d);
      else
        hardest_neg = std::min(hardest_neg, d);
    }
    if (hardest_pos >= 0.0 && hardest_neg < 1e300) {
      want += std::max(0.0, margin + hardest_pos - hardest_neg);
      ++anchors;
    }
  }
  want /= static_cast<double>(anchors);
  CHECK(std::abs(hard_triplet_loss(x, labels, margin).item() - want) < 1e-12);
}

TEST_CASE("n-pair loss matches its brute-force composition") {
  SeededRng rng(52);
  Tensor x = random_tensor({8, 3}, rng, 0.8);
  auto labels = random_two_class_labels(8, rng);
  double want = 0.0;
  int64_t anchors = 0;
  for (int64_t a = 0; a < 8; ++a) {
    int64_t pos = -1;
    for (int64_t off = 1; off < 8 && pos < 0; ++off) {
      int64_t j = (a + off) % 8;
      if (labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(a)]) pos = j;
    }
    if (pos < 0) continue;
    double sp = dot_rows(x, a, pos);
    double acc = 0.0;
    int64_t negs = 0;
    for (int64_t k = 0; k < 8; ++k)
      if (labels[static_cast<size_t>(k)] != labels[static_cast<size_t>(a)]) {
        acc += std::exp(dot_rows(x, a, k) - sp);
        ++negs;
      }
    if (negs == 0) continue;
    want += std::log1p(acc);
    ++anchors;
  }
  want /= static_cast<double>(anchors);
  CHECK(std::abs(npair_loss(x, labels).item() - want) < 1e-10);
}

TEST_CASE("supervised contrastive loss matches brute force") {
  SeededRng rng(53);
  Tensor x = random_tensor({8, 4}, rng, 1.0);
  auto labels = random_two_class_labels(8, rng);
  double tau = 0.1;
  Tensor z = l2_normalize_rows(x);
  double want = 0.0;
  int64_t valid = 0;
  for (int64_t i = 0; i < 8; ++i) {
    std::vector<int64_t> pos;
    for (int64_t j = 0; j < 8; ++j)
      if (j != i && labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(i)])
        pos.push_back(j);
    if (pos.empty()) continue;
    double denom = 0.0;
    for (int64_t j = 0; j < 8; ++j)
      if (j != i) denom += std::exp(dot_rows(z, i, j) / tau);
    double term = 0.0;
    for (int64_t p : pos) term += std::log(denom) - dot_rows(z, i, p) / tau;
    want += term / static_cast<double>(pos.size());
    ++valid;
  }
  want /= static_cast<double>(valid);
  CHECK(std::abs(supcon_loss(x, labels, tau).item() - want) < 1e-10);
}

TEST_CASE("baseline losses pass gradcheck") {
  SeededRng rng(54);
  Tensor x = random_tensor({6, 3}, rng, 1.0);
  std::vector<int> labels{0, 1, 0, 1, 1, 0};
  struct Case {
    const char* name;
    std::function<Tensor(const Tensor&)> f;
  };
  std::vector<Case> cases{
      {"triplet", [&](const Tensor& t) { return triplet_loss(t, labels, 0.3); }},
      {"hard_triplet", [&](const Tensor& t) { return hard_triplet_loss(t, labels, 0.3); }},
      {"npair", [&](const Tensor& t) { return npair_loss(t, labels); }},
      {"supcon", [&](const Tensor& t) { return supcon_loss(t, labels, 0.1); }},
  };
  for (auto& c : cases) {
    auto f = [&](const std::vector<Tensor>& in) { return c.f(in[0]); };
    auto res = gradcheck(f, {x});
    INFO(c.name << ": " << res.summary());
    CHECK(res.pass);
  }
}
