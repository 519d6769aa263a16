#pragma once

#include <string>
#include <vector>

#include "datasynth.hpp"

namespace moaecr {

// Top-2 PCA of dataset payloads via power iteration with deflation.
// Deterministic: fixed internal seed, sign convention, tolerance 1e-10.
struct Projection {
  std::vector<double> mean;                 // [d]
  std::vector<std::vector<double>> axes;    // [2][d], unit, orthogonal
  double variance[2] = {0.0, 0.0};          // eigenvalues of the covariance
  std::vector<double> xs, ys;               // projected coordinates, [n]
};

Projection project2d(const Dataset& emb);

// x,y,label,attack_type rows in dataset order.
void write_projection_csv(const std::string& path, const Projection& proj,
                          const Dataset& emb);

// Two panels: colored by label, colored by attack type.
void write_projection_svg(const std::string& path, const Projection& proj,
                          const Dataset& emb);

}  // namespace moaecr
