#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dmfa/model.hpp"

namespace dmfa {

struct KMeansResult {
  std::vector<int> labels; // 0-based
  Eigen::MatrixXd centers; // k x dim
  double inertia = 0.0;
};

/// Lloyd iterations from a k-means++ seeding. Empty clusters are reseeded at
/// the point farthest from its center.
KMeansResult kmeans(const Eigen::MatrixXd &x, int k, Rng &rng, int max_iterations = 50);

} // namespace dmfa
