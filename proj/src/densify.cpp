#include "anchorflow/densify.hpp"

#include <cmath>

#include "anchorflow/predicates.hpp"

namespace anchorflow {

Affine2 affine_from_triangle(const std::array<PixelPoint, 3>& src,
                             const std::array<PixelPoint, 3>& tgt) {
  const double area = 0.5 * geom::signed_area2(src[0], src[1], src[2]);
  if (!(std::abs(area) >= kMinTriangleArea))
    throw Error(ErrorCode::kSingularTriangle, "degenerate source triangle");

  // Solve relative to the first vertex for conditioning.
  Eigen::Matrix2d s;
  s << src[1] - src[0], src[2] - src[0];
  Eigen::Matrix2d t;
  t << tgt[1] - tgt[0], tgt[2] - tgt[0];
  const Eigen::Matrix2d linear = t * s.inverse();

  Affine2 a;
  a.leftCols<2>() = linear;
  a.col(2) = tgt[0] - linear * src[0];
  return a;
}

PiecewiseAffineWarp::PiecewiseAffineWarp(Triangulation tri, std::vector<PixelPoint> targets)
    : tri_(std::move(tri)), targets_(std::move(targets)) {
  if (targets_.size() != tri_.vertices.size())
    fail(ErrorCode::kInvalidInput, "one target per triangulation vertex required");
  affines_.reserve(tri_.triangles.size());
  boxes_.reserve(tri_.triangles.size());
  for (std::size_t t = 0; t < tri_.triangles.size(); ++t) {
    const auto& v = tri_.triangles[t];
    const auto corners = tri_.corners(t);
    Eigen::AlignedBox2d box;
    for (const auto& c : corners) box.extend(c);
    boxes_.push_back(box);
    try {
      affines_.emplace_back(
          affine_from_triangle(corners, {targets_[v[0]], targets_[v[1]], targets_[v[2]]}));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kSingularTriangle) throw;
      affines_.emplace_back(std::nullopt);
      ++skipped_;
    }
  }
}

int PiecewiseAffineWarp::locate(const PixelPoint& p) const {
  for (std::size_t t = 0; t < tri_.triangles.size(); ++t) {
    if (!boxes_[t].contains(p)) continue;
    const auto c = tri_.corners(t);
    if (geom::orient2d(c[0], c[1], p) >= 0 && geom::orient2d(c[1], c[2], p) >= 0 &&
        geom::orient2d(c[2], c[0], p) >= 0)
      return static_cast<int>(t);
  }
  return -1;
}

std::optional<PixelPoint> PiecewiseAffineWarp::operator()(const PixelPoint& p) const {
  const int t = locate(p);
  if (t < 0 || !affines_[t]) return std::nullopt;
  return apply(*affines_[t], p);
}

Densified densify(const CorrespondenceSet& seed, const GridGeometry& src_lattice,
                  ImageExtent target_image) {
  Densified out;
  out.field = DisplacementField(src_lattice);

  std::vector<PixelPoint> sources;
  sources.reserve(seed.size());
  for (const auto& c : seed) sources.push_back(c.src);
  Triangulation tri = delaunay(sources);

  // Merged sources keep the target of their first occurrence.
  std::vector<PixelPoint> targets(tri.vertices.size());
  std::vector<std::uint8_t> assigned(tri.vertices.size(), 0);
  for (std::size_t i = 0; i < seed.size(); ++i) {
    const int v = tri.vertex_of_input[i];
    if (!assigned[v]) {
      targets[v] = seed[i].tgt;
      assigned[v] = 1;
    }
  }
  out.collinear = tri.collinear;
  out.warp = PiecewiseAffineWarp(std::move(tri), std::move(targets));
  if (out.collinear) return out;

  for (Index c = 0; c < src_lattice.cells(); ++c) {
    const PixelPoint u = src_lattice.center(c);
    const auto w = out.warp(u);
    if (!w) continue;
    if (!is_finite(*w) || w->x() < 0.0 || w->y() < 0.0 || w->x() > target_image.width ||
        w->y() > target_image.height)
      continue;
    out.field.displacement.row(c) = (*w - u).transpose();
    out.field.valid[c] = 1;
  }
  return out;
}

}  // namespace anchorflow
