#pragma once

#include <array>
#include <span>
#include <vector>

#include "anchorflow/grid.hpp"

namespace anchorflow {

/// Delaunay triangulation of a planar point set.
struct Triangulation {
  /// Distinct input points (first occurrence kept when inputs merge).
  std::vector<PixelPoint> vertices;
  /// For every input point, the vertex it was merged into.
  std::vector<int> vertex_of_input;
  /// Counter-clockwise vertex index triples.
  std::vector<std::array<int, 3>> triangles;
  /// Set when the input has no three non-collinear points.
  bool collinear = false;

  std::array<PixelPoint, 3> corners(std::size_t t) const {
    const auto& tri = triangles[t];
    return {vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]};
  }
};

inline constexpr double kMergeRadiusPx = 1e-6;
inline constexpr double kMinTriangleArea = 1e-8;

/// Builds the Delaunay triangulation of `points` with exact predicates. Points
/// closer than kMergeRadiusPx are merged first. Four or more co-circular
/// points keep the diagonal produced by the lexicographic sweep, so the result
/// depends only on the point set. Triangles with area below kMinTriangleArea
/// are dropped.
Triangulation delaunay(std::span<const PixelPoint> points);

}  // namespace anchorflow
