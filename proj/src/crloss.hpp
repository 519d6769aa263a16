#pragma once

#include <vector>

#include "tensor.hpp"

namespace moaecr {

// Per-class batch means, differentiable through the features. Two classes:
// row 0 = live, row 1 = fake.
struct ClassCenters {
  Tensor centers;               // [2, p]
  std::vector<int64_t> counts;  // per-class sample counts
};

ClassCenters class_centers(const Tensor& x, const std::vector<int>& labels);

// R_c = C C^T / sqrt(p); R_or zeroes the diagonal; Q = max(R_or - t, 0).
struct RelationMatrix {
  Tensor r_c;   // [2,2]
  Tensor r_or;  // [2,2], diagonal exactly 0
  Tensor q;     // [2,2], elementwise >= 0
  double t = 0.5;
};

RelationMatrix center_relation(const ClassCenters& c, double t = 0.5);

// Mean over class rows of the squared log-sum-exp of that row's off-diagonal
// Q entries; with two classes the inner reduction is a single entry.
Tensor dm_loss(const RelationMatrix& rel);

// Mean over samples of the squared log-sum-exp over features of
// |x_i - center(label_i)|.
Tensor attraction_loss(const Tensor& x, const ClassCenters& c, const std::vector<int>& labels);

// Mean over samples of the squared wrong-class probability under
// softmax(x_i . centers^T).
Tensor repulsion_loss(const Tensor& x, const ClassCenters& c, const std::vector<int>& labels);

Tensor cdm_loss(const Tensor& x, const ClassCenters& c, const std::vector<int>& labels);

Tensor total_loss(const Tensor& l_ce, const Tensor& l_dm, const Tensor& l_cdm);

struct LossBundle {
  double l_ce = 0, l_dm = 0, l_att = 0, l_rep = 0, l_cdm = 0, l_total = 0;
  bool all_finite() const;
};

// Comparator losses. Each returns 0 and sets *degenerate (when given) if the
// batch admits no valid pair/triplet.
Tensor triplet_loss(const Tensor& x, const std::vector<int>& labels, double margin = 0.3,
                    bool* degenerate = nullptr);
Tensor hard_triplet_loss(const Tensor& x, const std::vector<int>& labels,
                         double margin = 0.3, bool* degenerate = nullptr);
Tensor npair_loss(const Tensor& x, const std::vector<int>& labels,
                  bool* degenerate = nullptr);
Tensor supcon_loss(const Tensor& x, const std::vector<int>& labels,
                   double temperature = 0.1, bool* degenerate = nullptr);

}  // namespace moaecr
