#include "anchorflow/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace anchorflow {

namespace {

PixelRegion expanded_box(double min_x, double min_y, double max_x, double max_y,
                         double margin_frac, ImageExtent image) {
  const double margin = margin_frac * std::hypot(max_x - min_x, max_y - min_y);
  return PixelRegion::box(std::max(0.0, min_x - margin), std::max(0.0, min_y - margin),
                          std::min(image.width, max_x + margin),
                          std::min(image.height, max_y + margin));
}

}  // namespace

std::pair<PixelRegion, PixelRegion> bbox_from_keypoints(const CorrespondenceSet& E,
                                                        double margin_frac,
                                                        ImageExtent src_image,
                                                        ImageExtent tgt_image) {
  if (E.size() < 2)
    fail(ErrorCode::kDegenerateRegion, "need at least 2 keypoint pairs for a bbox");
  if (!(margin_frac >= 0.0))
    fail(ErrorCode::kInvalidInput, "margin_frac must be non-negative");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  Eigen::Vector2d smin(kInf, kInf), smax(-kInf, -kInf);
  Eigen::Vector2d tmin = smin, tmax = smax;
  for (const auto& c : E) {
    smin = smin.cwiseMin(c.src);
    smax = smax.cwiseMax(c.src);
    tmin = tmin.cwiseMin(c.tgt);
    tmax = tmax.cwiseMax(c.tgt);
  }
  if (!((smax - smin).array() > 0.0).all() || !((tmax - tmin).array() > 0.0).all())
    fail(ErrorCode::kDegenerateRegion, "keypoints have zero extent on an axis");

  return {expanded_box(smin.x(), smin.y(), smax.x(), smax.y(), margin_frac, src_image),
          expanded_box(tmin.x(), tmin.y(), tmax.x(), tmax.y(), margin_frac, tgt_image)};
}

CorrespondenceSet build_seed_set(const CorrespondenceSet& E,
                                 const CorrespondenceSet& mnn, double stride) {
  CorrespondenceSet out;
  for (const auto& c : E) out.add(c.src, c.tgt, Provenance::kAnnotated);

  const double radius = 0.5 * stride;
  std::vector<Correspondence> kept;
  for (const auto& m : mnn) {
    if (m.provenance == Provenance::kAnnotated) continue;
    const bool shadowed = std::any_of(E.begin(), E.end(), [&](const Correspondence& e) {
      return (e.src - m.src).norm() <= radius;
    });
    if (!shadowed) kept.push_back(m);
  }
  std::sort(kept.begin(), kept.end(), [](const Correspondence& a, const Correspondence& b) {
    return std::tie(a.src.y(), a.src.x(), a.tgt.y(), a.tgt.x()) <
           std::tie(b.src.y(), b.src.x(), b.tgt.y(), b.tgt.x());
  });
  for (const auto& m : kept) out.add(m.src, m.tgt, Provenance::kMnn);
  return out;
}

}  // namespace anchorflow
