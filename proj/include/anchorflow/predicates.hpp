#pragma once

#include "anchorflow/grid.hpp"

namespace anchorflow::geom {

/// Sign of the signed area of (a, b, c): +1 counter-clockwise, -1 clockwise,
/// 0 collinear. Exact for all finite double inputs.
int orient2d(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c);

/// +1 if d lies strictly inside the circumcircle of the counter-clockwise
/// triangle (a, b, c), -1 outside, 0 on it. Exact for all finite inputs.
int incircle(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c,
             const PixelPoint& d);

/// Twice the signed area, in floating point.
inline double signed_area2(const PixelPoint& a, const PixelPoint& b,
                           const PixelPoint& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

}  // namespace anchorflow::geom
