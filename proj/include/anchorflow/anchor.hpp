#pragma once

#include <cstdint>
#include <vector>

#include "anchorflow/clustering.hpp"
#include "anchorflow/correspondence.hpp"
#include "anchorflow/densify.hpp"
#include "anchorflow/matching.hpp"

namespace anchorflow {

/// Source cells and warped target points of every flow cluster.
struct ClusterRegions {
  std::vector<std::vector<Index>> source_cells;
  std::vector<std::vector<PixelPoint>> source_points;
  std::vector<std::vector<PixelPoint>> target_points;

  int size() const { return static_cast<int>(source_cells.size()); }
};

ClusterRegions cluster_regions(const FlowClustering& clustering, const DisplacementField& field);

struct AnchorResult {
  CorrespondenceSet pairs;
  /// One flag per cluster.
  std::vector<std::uint8_t> anchored;
  int anchored_count() const {
    int n = 0;
    for (auto a : anchored) n += a != 0;
    return n;
  }
};

/// Keeps the clusters that contain an annotated pair: some source cell within
/// r_anchor_px of p_s and some warped point within r_anchor_px of p_t. Emits
/// every (cell center, warped point) pair of those clusters, ordered by cell.
AnchorResult anchor_filter(const ClusterRegions& regions, const DisplacementField& field,
                           const CorrespondenceSet& E, double r_anchor_px);

struct MiningConfig {
  int k_init = 15;
  bool use_bic = true;
  /// Anchoring radius in source-grid cells.
  double r_anchor_cells = 1.5;
  std::uint64_t seed = 0;
  MnnOptions mnn;
};

struct MiningDiagnostics {
  std::size_t mnn_pairs = 0;
  std::size_t seed_pairs = 0;
  std::size_t triangles = 0;
  std::size_t skipped_triangles = 0;
  Index valid_cells = 0;
  int clusters_before_merge = 0;
  int clusters_after_merge = 0;
  int anchored_clusters = 0;
  std::size_t dense_pairs = 0;
  std::size_t anchored_pairs = 0;
  bool collinear_seeds = false;
  bool k_lowered = false;
  bool no_anchored_cluster = false;
};

struct MiningResult {
  CorrespondenceSet pseudo;
  MiningDiagnostics diagnostics;
  DisplacementField field;
  FlowClustering clustering;
  ClusterRegions regions;
  std::vector<std::uint8_t> anchored;
};

/// Densify + cluster + anchor, starting from an already assembled seed set.
MiningResult mine_from_seeds(const CorrespondenceSet& seed, const CorrespondenceSet& E,
                             const GridGeometry& src_lattice, ImageExtent target_image,
                             const MiningConfig& config);

/// Full pseudo-label mining between two (teacher) grids: mutual NN inside the
/// regions, seed assembly with E, densification, k-means + BIC flow
/// clustering, and anchoring to E. Empty intermediate sets yield an empty
/// result with diagnostics instead of an error.
template <typename Scalar>
MiningResult mine_pseudo_labels(const BasicFeatureGrid<Scalar>& teacher_src,
                                const BasicFeatureGrid<Scalar>& teacher_tgt,
                                const CorrespondenceSet& E, const PixelRegion& region_src,
                                const PixelRegion& region_tgt, const MiningConfig& config) {
  const CorrespondenceSet mnn =
      mutual_nn(teacher_src, teacher_tgt, region_src, region_tgt, config.mnn);
  const CorrespondenceSet seed = build_seed_set(E, mnn, teacher_src.stride());
  const GridGeometry& tg = teacher_tgt.geometry();
  MiningResult r = mine_from_seeds(seed, E, teacher_src.geometry(),
                                   ImageExtent{tg.width_px(), tg.height_px()}, config);
  r.diagnostics.mnn_pairs = mnn.size();
  return r;
}

}  // namespace anchorflow
