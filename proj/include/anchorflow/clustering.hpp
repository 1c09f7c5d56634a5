#pragma once

#include <cstdint>
#include <vector>

#include "anchorflow/densify.hpp"

namespace anchorflow {

struct FlowCluster {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  /// Isotropic per-axis variance (px^2), floored at kVarianceFloor.
  double variance = 0.0;
  /// Sum of squared distances of the members to the mean.
  double scatter = 0.0;
  Index count = 0;
};

inline constexpr double kVarianceFloor = 1e-4;

/// Hard partition of the valid displacement vectors of a field.
struct FlowClustering {
  /// Valid cells, ascending; `points` and `assignment` are parallel to it.
  std::vector<Index> cells;
  Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> points;
  std::vector<int> assignment;
  std::vector<FlowCluster> clusters;
  /// The requested k exceeded the number of valid cells and was lowered.
  bool k_lowered = false;

  int k() const { return static_cast<int>(clusters.size()); }
  Index size() const { return static_cast<Index>(cells.size()); }
};

/// k-means over the valid displacement vectors: seeded k-means++ start, Lloyd
/// iterations until centers move less than 1e-6 px or 100 iterations, empty
/// clusters dropped. Deterministic in (field, k_init, seed).
FlowClustering kmeans_flow(const DisplacementField& field, int k_init, std::uint64_t seed);

/// BIC (lower is better) of the clustering read as a mixture of isotropic 2-D
/// Gaussians with hard assignments: -2 lnL + (4k - 1) ln n.
double bic(const FlowClustering& clustering);

/// Greedy pairwise merging: repeatedly applies the merge giving the lowest
/// BIC while that strictly lowers the current BIC.
FlowClustering bic_merge(const FlowClustering& clustering);

/// Recomputes mean/variance/count of every cluster from its members.
void refresh_statistics(FlowClustering& clustering);

}  // namespace anchorflow
