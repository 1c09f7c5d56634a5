#include "anchorflow/predicates.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace anchorflow::geom {

namespace {

// Floating-point expansion arithmetic: a number is a sum of non-overlapping
// doubles in increasing magnitude, and every operation below is exact.
using Expansion = std::vector<double>;

constexpr double kEps = std::numeric_limits<double>::epsilon() / 2.0;

inline void two_sum(double a, double b, double& x, double& y) {
  x = a + b;
  const double bv = x - a;
  const double av = x - bv;
  y = (a - av) + (b - bv);
}

inline void two_diff(double a, double b, double& x, double& y) {
  x = a - b;
  const double bv = a - x;
  const double av = x + bv;
  y = (a - av) + (bv - b);
}

inline void two_product(double a, double b, double& x, double& y) {
  x = a * b;
  y = std::fma(a, b, -x);
}

Expansion from_diff(double a, double b) {
  double x, y;
  two_diff(a, b, x, y);
  return {y, x};
}

Expansion sum(const Expansion& e, const Expansion& f) {
  // Grow e by each component of f.
  Expansion h = e;
  for (double b : f) {
    Expansion next;
    next.reserve(h.size() + 1);
    double q = b;
    for (double hi : h) {
      double qn, r;
      two_sum(q, hi, qn, r);
      if (r != 0.0) next.push_back(r);
      q = qn;
    }
    if (q != 0.0 || next.empty()) next.push_back(q);
    h = std::move(next);
  }
  return h;
}

Expansion negate(Expansion e) {
  for (double& v : e) v = -v;
  return e;
}

Expansion scale(const Expansion& e, double b) {
  Expansion h;
  h.reserve(2 * e.size());
  double q = 0.0;
  bool first = true;
  for (double ei : e) {
    double p1, p0;
    two_product(ei, b, p1, p0);
    if (first) {
      if (p0 != 0.0) h.push_back(p0);
      q = p1;
      first = false;
      continue;
    }
    double s, r;
    two_sum(q, p0, s, r);
    if (r != 0.0) h.push_back(r);
    double t;
    two_sum(p1, s, q, t);  // p1 dominates s, so fast two-sum would do
    if (t != 0.0) h.push_back(t);
  }
  if (q != 0.0 || h.empty()) h.push_back(q);
  return h;
}

Expansion product(const Expansion& e, const Expansion& f) {
  Expansion acc{0.0};
  for (double fi : f) acc = sum(acc, scale(e, fi));
  return acc;
}

int sign_of(const Expansion& e) {
  for (auto it = e.rbegin(); it != e.rend(); ++it)
    if (*it != 0.0) return *it > 0.0 ? 1 : -1;
  return 0;
}

int orient2d_exact(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c) {
  const Expansion acx = from_diff(a.x(), c.x());
  const Expansion acy = from_diff(a.y(), c.y());
  const Expansion bcx = from_diff(b.x(), c.x());
  const Expansion bcy = from_diff(b.y(), c.y());
  return sign_of(sum(product(acx, bcy), negate(product(acy, bcx))));
}

int incircle_exact(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c,
                   const PixelPoint& d) {
  const Expansion adx = from_diff(a.x(), d.x()), ady = from_diff(a.y(), d.y());
  const Expansion bdx = from_diff(b.x(), d.x()), bdy = from_diff(b.y(), d.y());
  const Expansion cdx = from_diff(c.x(), d.x()), cdy = from_diff(c.y(), d.y());

  const Expansion alift = sum(product(adx, adx), product(ady, ady));
  const Expansion blift = sum(product(bdx, bdx), product(bdy, bdy));
  const Expansion clift = sum(product(cdx, cdx), product(cdy, cdy));

  const Expansion bc = sum(product(bdx, cdy), negate(product(cdx, bdy)));
  const Expansion ca = sum(product(cdx, ady), negate(product(adx, cdy)));
  const Expansion ab = sum(product(adx, bdy), negate(product(bdx, ady)));

  return sign_of(sum(sum(product(alift, bc), product(blift, ca)), product(clift, ab)));
}

}  // namespace

int orient2d(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c) {
  const double detleft = (a.x() - c.x()) * (b.y() - c.y());
  const double detright = (a.y() - c.y()) * (b.x() - c.x());
  const double det = detleft - detright;
  const double bound = (3.0 + 16.0 * kEps) * kEps * (std::abs(detleft) + std::abs(detright));
  if (det > bound) return 1;
  if (-det > bound) return -1;
  return orient2d_exact(a, b, c);
}

int incircle(const PixelPoint& a, const PixelPoint& b, const PixelPoint& c,
             const PixelPoint& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();

  const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
  const double cdxady = cdx * ady, adxcdy = adx * cdy;
  const double adxbdy = adx * bdy, bdxady = bdx * ady;
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;

  const double det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) +
                     clift * (adxbdy - bdxady);
  const double permanent = (std::abs(bdxcdy) + std::abs(cdxbdy)) * alift +
                           (std::abs(cdxady) + std::abs(adxcdy)) * blift +
                           (std::abs(adxbdy) + std::abs(bdxady)) * clift;
  const double bound = (10.0 + 96.0 * kEps) * kEps * permanent;
  if (det > bound) return 1;
  if (-det > bound) return -1;
  return incircle_exact(a, b, c, d);
}

}  // namespace anchorflow::geom
