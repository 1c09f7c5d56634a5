#pragma once

#include <array>
#include <optional>
#include <vector>

#include "anchorflow/correspondence.hpp"
#include "anchorflow/delaunay.hpp"
#include "anchorflow/grid.hpp"
#include "anchorflow/matching.hpp"

namespace anchorflow {

/// 2x3 affine map p -> A.leftCols<2>() * p + A.col(2).
using Affine2 = Eigen::Matrix<double, 2, 3>;

inline PixelPoint apply(const Affine2& a, const PixelPoint& p) {
  return a.leftCols<2>() * p + a.col(2);
}

/// The unique affine map sending src[k] to tgt[k] for k = 0, 1, 2. Throws
/// kSingularTriangle when the source triangle has area below 1e-8 px^2.
Affine2 affine_from_triangle(const std::array<PixelPoint, 3>& src,
                             const std::array<PixelPoint, 3>& tgt);

/// Continuous piecewise-affine warp over a triangulation of source points.
class PiecewiseAffineWarp {
 public:
  PiecewiseAffineWarp() = default;
  /// `targets` holds the matched target point of every triangulation vertex.
  PiecewiseAffineWarp(Triangulation tri, std::vector<PixelPoint> targets);

  const Triangulation& triangulation() const { return tri_; }
  const std::vector<PixelPoint>& targets() const { return targets_; }
  /// Per-triangle affine, empty for skipped (degenerate) triangles.
  const std::vector<std::optional<Affine2>>& affines() const { return affines_; }
  std::size_t skipped_triangles() const { return skipped_; }

  /// Lowest-index triangle containing p (boundary inclusive), or -1.
  int locate(const PixelPoint& p) const;

  /// Warped position of p; empty outside the hull or in a skipped triangle.
  std::optional<PixelPoint> operator()(const PixelPoint& p) const;

 private:
  Triangulation tri_;
  std::vector<PixelPoint> targets_;
  std::vector<std::optional<Affine2>> affines_;
  std::vector<Eigen::AlignedBox2d> boxes_;
  std::size_t skipped_ = 0;
};

/// Per-cell displacement over a source lattice with validity flags.
struct DisplacementField {
  GridGeometry geometry;
  Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> displacement;
  std::vector<std::uint8_t> valid;

  DisplacementField() = default;
  explicit DisplacementField(const GridGeometry& g)
      : geometry(g),
        displacement(Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>::Zero(g.cells(), 2)),
        valid(std::size_t(g.cells()), 0) {}

  Index cells() const { return geometry.cells(); }
  PixelPoint source(Index cell) const { return geometry.center(cell); }
  PixelPoint target(Index cell) const {
    return geometry.center(cell) + displacement.row(cell).transpose();
  }
  Index valid_count() const {
    Index n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }
};

struct Densified {
  DisplacementField field;
  PiecewiseAffineWarp warp;
  /// All seed sources were collinear: no triangles and an all-invalid field.
  bool collinear = false;
};

/// Lifts the seed correspondences to a dense displacement field on the source
/// lattice via Delaunay triangulation of the seed sources and per-triangle
/// affine warps. Cells outside the hull, inside skipped triangles, or warped
/// outside the target image are invalid.
Densified densify(const CorrespondenceSet& seed, const GridGeometry& src_lattice,
                  ImageExtent target_image);

}  // namespace anchorflow
