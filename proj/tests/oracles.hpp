#pragma once

// Slow, direct reference implementations the library is checked against.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "anchorflow/correspondence.hpp"
#include "anchorflow/delaunay.hpp"
#include "anchorflow/grid.hpp"
#include "anchorflow/random.hpp"
#include "anchorflow/synthetic.hpp"

namespace oracle {

using anchorflow::GridGeometry;
using anchorflow::Index;
using anchorflow::PixelPoint;

// Bilinear value at p from the four surrounding cell centers, clamped to the
// border like the library; written out per corner.
template <typename Grid>
Eigen::VectorXd bilinear(const Grid& grid, const PixelPoint& p) {
  const GridGeometry& g = grid.geometry();
  double fx = p.x() / g.stride - 0.5;
  double fy = p.y() / g.stride - 0.5;
  fx = std::min(std::max(fx, 0.0), double(g.cols - 1));
  fy = std::min(std::max(fy, 0.0), double(g.rows - 1));
  int j = int(fx), i = int(fy);
  if (j == g.cols - 1) j = g.cols - 2;
  if (i == g.rows - 1) i = g.rows - 2;
  const double tx = fx - j, ty = fy - i;
  auto at = [&](int r, int c) -> Eigen::VectorXd {
    return grid.data().row(Index(r) * g.cols + c).transpose().template cast<double>();
  };
  return (1 - tx) * (1 - ty) * at(i, j) + tx * (1 - ty) * at(i, j + 1) +
         (1 - tx) * ty * at(i + 1, j) + tx * ty * at(i + 1, j + 1);
}

// Double loop over all cell pairs; first strictly larger score wins.
template <typename Grid>
std::vector<std::pair<Index, Index>> mutual_nn(const Grid& a, const Grid& b,
                                               const std::vector<std::uint8_t>& in_a,
                                               const std::vector<std::uint8_t>& in_b) {
  auto dot = [](const auto& x, const auto& y) {
    double s = 0.0;
    for (Index d = 0; d < x.size(); ++d) s += double(x[d]) * double(y[d]);
    return s;
  };
  auto best = [&](const Grid& from, const std::vector<std::uint8_t>& fin, const Grid& to,
                  const std::vector<std::uint8_t>& tin) {
    std::vector<Index> out(from.cells(), -1);
    for (Index u = 0; u < from.cells(); ++u) {
      if (!fin[u]) continue;
      double top = 0.0;
      for (Index v = 0; v < to.cells(); ++v) {
        if (!tin[v]) continue;
        const double s = dot(from.data().row(u), to.data().row(v));
        if (out[u] < 0 || s > top) {
          out[u] = v;
          top = s;
        }
      }
    }
    return out;
  };
  const auto fwd = best(a, in_a, b, in_b);
  const auto bwd = best(b, in_b, a, in_a);
  std::vector<std::pair<Index, Index>> out;
  for (Index u = 0; u < a.cells(); ++u)
    if (fwd[u] >= 0 && bwd[fwd[u]] == u) out.emplace_back(u, fwd[u]);
  return out;
}

// Andrew's monotone chain, counter-clockwise, collinear points dropped.
inline std::vector<PixelPoint> convex_hull(std::vector<PixelPoint> pts) {
  std::sort(pts.begin(), pts.end(), [](const PixelPoint& a, const PixelPoint& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  auto cross = [](const PixelPoint& o, const PixelPoint& a, const PixelPoint& b) {
    return (long double)(a.x() - o.x()) * (b.y() - o.y()) -
           (long double)(a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<PixelPoint> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k > 0 ? k - 1 : 0);
  return h;
}

inline double polygon_area(const std::vector<PixelPoint>& poly) {
  long double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += (long double)p.x() * q.y() - (long double)q.x() * p.y();
  }
  return double(a / 2);
}

inline double triangle_area(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c) {
  return 0.5 * double((long double)(b.x() - a.x()) * (c.y() - a.y()) -
                      (long double)(b.y() - a.y()) * (c.x() - a.x()));
}

// Circumcircle in long double.
inline std::pair<PixelPoint, double> circumcircle(const PixelPoint& a, const PixelPoint& b,
                                                  const PixelPoint& c) {
  const long double bx = b.x() - a.x(), by = b.y() - a.y();
  const long double cx = c.x() - a.x(), cy = c.y() - a.y();
  const long double d = 2 * (bx * cy - by * cx);
  const long double ux = (cy * (bx * bx + by * by) - by * (cx * cx + cy * cy)) / d;
  const long double uy = (bx * (cx * cx + cy * cy) - cx * (bx * bx + by * by)) / d;
  return {PixelPoint(double(a.x() + ux), double(a.y() + uy)), double(std::sqrt(ux * ux + uy * uy))};
}

// Number of (triangle, point) pairs with the point strictly inside the
// circumcircle by more than a relative margin.
inline int empty_circle_violations(const anchorflow::Triangulation& tri, double rel = 1e-9) {
  int bad = 0;
  for (std::size_t t = 0; t < tri.triangles.size(); ++t) {
    const auto c = tri.corners(t);
    const auto [center, r] = circumcircle(c[0], c[1], c[2]);
    for (std::size_t v = 0; v < tri.vertices.size(); ++v) {
      const auto& tt = tri.triangles[t];
      if (int(v) == tt[0] || int(v) == tt[1] || int(v) == tt[2]) continue;
      if ((tri.vertices[v] - center).norm() < r * (1 - rel)) ++bad;
    }
  }
  return bad;
}

// Central differences of f with respect to every entry of x.
inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                        Eigen::MatrixXd x, double h = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) {
      const double x0 = x(i, j);
      x(i, j) = x0 + h;
      const double fp = f(x);
      x(i, j) = x0 - h;
      const double fm = f(x);
      x(i, j) = x0;
      g(i, j) = (fp - fm) / (2 * h);
    }
  return g;
}

// max |a - n| over the gradient's scale max(|a|_inf, |n|_inf). Entries far
// below that scale are dominated by cancellation in f(x + h) - f(x - h), so a
// per-entry ratio would measure round-off rather than the gradient.
inline double max_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric,
                                 double floor = 1e-12) {
  const double scale =
      std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), floor});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

// Where the point at q on instance a lands on instance b, through the
// generating warps.
inline std::optional<PixelPoint> warp_transfer(const anchorflow::SyntheticScene& scene, int a,
                                               int b, const PixelPoint& q) {
  const auto x = scene.instances[a].warp.inverse(q);
  if (!x) return std::nullopt;
  return scene.instances[b].warp.forward(*x);
}

// Where the mirrored canonical point lands on instance b.
inline std::optional<PixelPoint> mirror_transfer(const anchorflow::SyntheticScene& scene, int a,
                                                 int b, const PixelPoint& q) {
  const auto x = scene.instances[a].warp.inverse(q);
  if (!x) return std::nullopt;
  return scene.instances[b].warp.forward(anchorflow::mirror_canonical(*x));
}

inline std::vector<PixelPoint> random_points(anchorflow::Rng& rng, int n, double lo, double hi) {
  std::vector<PixelPoint> p(n);
  for (auto& q : p) q = PixelPoint(rng.uniform(lo, hi), rng.uniform(lo, hi));
  return p;
}

template <typename Grid>
Grid random_grid(anchorflow::Rng& rng, int rows, int cols, int dim, double stride = 4.0) {
  typename Grid::Matrix m(Index(rows) * cols, dim);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = typename Grid::Matrix::Scalar(rng.normal());
  return Grid(GridGeometry{rows, cols, stride}, std::move(m));
}

}  // namespace oracle
