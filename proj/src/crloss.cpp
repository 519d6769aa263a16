#include "crloss.hpp"

#include <cmath>

namespace moaecr {

static int64_t check_features(const Tensor& x, const std::vector<int>& labels) {
  if (x.rank() != 2)
    throw ShapeError("loss: expected features [n,p], got " + shape_str(x.shape()));
  int64_t n = x.dim(0);
  if (static_cast<int64_t>(labels.size()) != n)
    throw DataError("loss: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(n) + " feature rows");
  for (int y : labels)
    if (y != 0 && y != 1) throw DataError("loss: label " + std::to_string(y) + " out of range");
  return n;
}

ClassCenters class_centers(const Tensor& x, const std::vector<int>& labels) {
  int64_t n = check_features(x, labels);
  std::vector<int64_t> counts(2, 0);
  for (int y : labels) ++counts[static_cast<size_t>(y)];
  for (int c = 0; c < 2; ++c)
    if (counts[static_cast<size_t>(c)] == 0)
      throw DataError("degenerate batch: class " + std::to_string(c) + " absent");
  Tensor mask = Tensor::zeros({2, n});
  for (int64_t i = 0; i < n; ++i)
    mask.data_mut()[static_cast<size_t>(labels[static_cast<size_t>(i)] * n + i)] = 1.0;
  Tensor inv_counts = Tensor::from(
      {2, 1}, {1.0 / static_cast<double>(counts[0]), 1.0 / static_cast<double>(counts[1])});
  return {mul(matmul(mask, x), inv_counts), counts};
}

RelationMatrix center_relation(const ClassCenters& c, double t) {
  int64_t p = c.centers.dim(1);
  RelationMatrix rel;
  rel.t = t;
  rel.r_c = matmul(c.centers, transpose(c.centers)) * (1.0 / std::sqrt(static_cast<double>(p)));
  Tensor offdiag = Tensor::from({2, 2}, {0, 1, 1, 0});
  rel.r_or = mul(rel.r_c, offdiag);
  rel.q = hinge(rel.r_or, t);
  return rel;
}

Tensor dm_loss(const RelationMatrix& rel) {
  // two classes: each row's off-diagonal reduction is over a single entry,
  // and log-sum-exp of a singleton is the identity
  Tensor offdiag = Tensor::from({2, 2}, {0, 1, 1, 0});
  Tensor per_row = sum(mul(rel.q, offdiag), {1});  // [2]
  return mean(square(per_row));
}

Tensor attraction_loss(const Tensor& x, const ClassCenters& c,
                       const std::vector<int>& labels) {
  check_features(x, labels);
  std::vector<int64_t> rows(labels.begin(), labels.end());
  Tensor own = gather_rows(c.centers, rows);      // [n,p]
  Tensor dist = abs(sub(x, own));
  return mean(square(logsumexp(dist, 1)));
}

Tensor repulsion_loss(const Tensor& x, const ClassCenters& c,
                      const std::vector<int>& labels) {
  int64_t n = check_features(x, labels);
  Tensor probs = softmax(matmul(x, transpose(c.centers)), 1);  // [n,2]
  Tensor wrong = Tensor::zeros({n, 2});
  for (int64_t i = 0; i < n; ++i)
    wrong.data_mut()[static_cast<size_t>(i * 2 + (1 - labels[static_cast<size_t>(i)]))] = 1.0;
  return mean(square(sum(mul(probs, wrong), {1})));
}

Tensor cdm_loss(const Tensor& x, const ClassCenters& c, const std::vector<int>& labels) {
  return attraction_loss(x, c, labels) + repulsion_loss(x, c, labels);
}

Tensor total_loss(const Tensor& l_ce, const Tensor& l_dm, const Tensor& l_cdm) {
  return l_ce + l_dm + l_cdm;
}

bool LossBundle::all_finite() const {
  for (double v : {l_ce, l_dm, l_att, l_rep, l_cdm, l_total})
    if (!std::isfinite(v)) return false;
  return true;
}

// ---- comparator losses ---------------------------------------------------

static Tensor pairwise_distances(const Tensor& x) {
  Tensor sq = sum(square(x), {1}, true);  // [n,1]
  Tensor g = matmul(x, transpose(x));
  // clip tiny negative rounding before the root; sqrt'(0) = 0 on the diagonal
  return sqrt(relu(sq + transpose(sq) - 2.0 * g));
}

static Tensor degenerate_zero(bool* degenerate) {
  if (degenerate) *degenerate = true;
  return Tensor::scalar(0.0);
}

Tensor triplet_loss(const Tensor& x, const std::vector<int>& labels, double margin,
                    bool* degenerate) {
  int64_t n = check_features(x, labels);
  if (degenerate) *degenerate = false;
  std::vector<int64_t> ap, an;
  for (int64_t a = 0; a < n; ++a)
    for (int64_t p = 0; p < n; ++p) {
      if (p == a || labels[static_cast<size_t>(p)] != labels[static_cast<size_t>(a)]) continue;
      for (int64_t k = 0; k < n; ++k) {
        if (labels[static_cast<size_t>(k)] == labels[static_cast<size_t>(a)]) continue;
        ap.push_back(a * n + p);
        an.push_back(a * n + k);
      }
    }
  if (ap.empty()) return degenerate_zero(degenerate);
  Tensor flat = reshape(pairwise_distances(x), {n * n, 1});
  Tensor viol = hinge(gather_rows(flat, ap) - gather_rows(flat, an) + margin, 0.0);
  return mean(viol);
}

Tensor hard_triplet_loss(const Tensor& x, const std::vector<int>& labels, double margin,
                         bool* degenerate) {
  int64_t n = check_features(x, labels);
  if (degenerate) *degenerate = false;
  Tensor d = pairwise_distances(x);
  auto dv = d.data();
  std::vector<int64_t> hp, hn;
  for (int64_t a = 0; a < n; ++a) {
    int64_t pos = -1, neg = -1;
    for (int64_t j = 0; j < n; ++j) {
      if (j == a) continue;
      double dist = dv[static_cast<size_t>(a * n + j)];
      if (labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(a)]) {
        if (pos < 0 || dist > dv[static_cast<size_t>(pos)]) pos = a * n + j;
      } else {
        if (neg < 0 || dist < dv[static_cast<size_t>(neg)]) neg = a * n + j;
      }
    }
    if (pos >= 0 && neg >= 0) {
      hp.push_back(pos);
      hn.push_back(neg);
    }
  }
  if (hp.empty()) return degenerate_zero(degenerate);
  Tensor flat = reshape(d, {n * n, 1});
  Tensor viol = hinge(gather_rows(flat, hp) - gather_rows(flat, hn) + margin, 0.0);
  return mean(viol);
}

Tensor npair_loss(const Tensor& x, const std::vector<int>& labels, bool* degenerate) {
  int64_t n = check_features(x, labels);
  if (degenerate) *degenerate = false;
  Tensor flat = reshape(matmul(x, transpose(x)), {n * n, 1});
  Tensor total;
  int64_t anchors = 0;
  Tensor zero_row = Tensor::zeros({1, 1});
  for (int64_t a = 0; a < n; ++a) {
    int64_t pos = -1;
    for (int64_t off = 1; off < n && pos < 0; ++off) {
      int64_t j = (a + off) % n;
      if (labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(a)]) pos = j;
    }
    std::vector<int64_t> negs;
    for (int64_t k = 0; k < n; ++k)
      if (labels[static_cast<size_t>(k)] != labels[static_cast<size_t>(a)])
        negs.push_back(a * n + k);
    if (pos < 0 || negs.empty()) continue;
    Tensor s_pos = gather_rows(flat, {a * n + pos});       // [1,1]
    Tensor diffs = gather_rows(flat, negs) - s_pos;        // [K,1]
    Tensor padded = concat({diffs, zero_row}, 0);          // log(1 + sum) via LSE
    Tensor term = logsumexp(reshape(padded, {static_cast<int64_t>(negs.size()) + 1}), 0);
    total = total.defined() ? total + term : term;
    ++anchors;
  }
  if (anchors == 0) return degenerate_zero(degenerate);
  return total * (1.0 / static_cast<double>(anchors));
}

Tensor supcon_loss(const Tensor& x, const std::vector<int>& labels, double temperature,
                   bool* degenerate) {
  int64_t n = check_features(x, labels);
  if (degenerate) *degenerate = false;
  if (temperature <= 0.0) throw ConfigError("supcon: temperature must be positive");
  Tensor s = matmul(l2_normalize_rows(x), transpose(l2_normalize_rows(x))) *
             (1.0 / temperature);
  Tensor self_mask = Tensor::zeros({n, n});
  for (int64_t i = 0; i < n; ++i)
    self_mask.data_mut()[static_cast<size_t>(i * n + i)] = -1e9;
  Tensor row_lse = logsumexp(add(s, self_mask), 1);  // [n]
  Tensor w_pos = Tensor::zeros({n, n});
  Tensor valid = Tensor::zeros({n});
  int64_t n_valid = 0;
  for (int64_t i = 0; i < n; ++i) {
    std::vector<int64_t> pos;
    for (int64_t j = 0; j < n; ++j)
      if (j != i && labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(i)])
        pos.push_back(j);
    if (pos.empty()) continue;
    for (int64_t j : pos)
      w_pos.data_mut()[static_cast<size_t>(i * n + j)] = 1.0 / static_cast<double>(pos.size());
    valid.data_mut()[static_cast<size_t>(i)] = 1.0;
    ++n_valid;
  }
  if (n_valid == 0) return degenerate_zero(degenerate);
  Tensor pos_mean = sum(mul(s, w_pos), {1});  // [n]
  return sum(mul(row_lse - pos_mean, valid)) * (1.0 / static_cast<double>(n_valid));
}

}  // namespace moaecr
