#include "anchorflow/delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "anchorflow/predicates.hpp"

namespace anchorflow {

namespace {

struct Mesh {
  // v[i] is the i-th corner (CCW); nb[i] is the triangle across the edge
  // opposite v[i], or -1 on the hull.
  std::vector<std::array<int, 3>> v;
  std::vector<std::array<int, 3>> nb;
};

int local_index(const std::array<int, 3>& a, int value) {
  for (int i = 0; i < 3; ++i)
    if (a[i] == value) return i;
  return -1;
}

void link_neighbours(Mesh& mesh) {
  struct Half {
    int lo, hi, tri, local;
  };
  std::vector<Half> halves;
  halves.reserve(mesh.v.size() * 3);
  for (int t = 0; t < static_cast<int>(mesh.v.size()); ++t)
    for (int i = 0; i < 3; ++i) {
      const int a = mesh.v[t][(i + 1) % 3];
      const int b = mesh.v[t][(i + 2) % 3];
      halves.push_back({std::min(a, b), std::max(a, b), t, i});
    }
  std::sort(halves.begin(), halves.end(), [](const Half& x, const Half& y) {
    return std::tie(x.lo, x.hi, x.tri) < std::tie(y.lo, y.hi, y.tri);
  });
  mesh.nb.assign(mesh.v.size(), {-1, -1, -1});
  for (std::size_t k = 0; k + 1 < halves.size(); ++k) {
    const Half& x = halves[k];
    const Half& y = halves[k + 1];
    if (x.lo == y.lo && x.hi == y.hi) {
      mesh.nb[x.tri][x.local] = y.tri;
      mesh.nb[y.tri][y.local] = x.tri;
      ++k;
    }
  }
}

// Lawson flips until every interior edge is locally Delaunay.
void make_delaunay(Mesh& mesh, const std::vector<PixelPoint>& pts) {
  std::vector<std::pair<int, int>> stack;
  for (int t = 0; t < static_cast<int>(mesh.v.size()); ++t)
    for (int i = 0; i < 3; ++i)
      if (mesh.nb[t][i] > t) stack.emplace_back(t, i);

  auto replace_nb = [&](int tri, int old_nb, int new_nb) {
    if (tri < 0) return;
    for (int& n : mesh.nb[tri])
      if (n == old_nb) {
        n = new_nb;
        return;
      }
  };

  while (!stack.empty()) {
    const auto [t, i] = stack.back();
    stack.pop_back();
    const int u = mesh.nb[t][i];
    if (u < 0) continue;
    const int j = local_index(mesh.nb[u], t);
    const int a = mesh.v[t][i];
    const int b = mesh.v[t][(i + 1) % 3];
    const int c = mesh.v[t][(i + 2) % 3];
    const int d = mesh.v[u][j];
    if (geom::incircle(pts[a], pts[b], pts[c], pts[d]) <= 0) continue;

    const int t_ca = mesh.nb[t][(i + 1) % 3];  // across c-a
    const int t_ab = mesh.nb[t][(i + 2) % 3];  // across a-b
    const int u_bd = mesh.nb[u][(j + 1) % 3];  // across b-d (u is d, c, b)
    const int u_dc = mesh.nb[u][(j + 2) % 3];  // across d-c

    mesh.v[t] = {a, b, d};
    mesh.nb[t] = {u_bd, u, t_ab};
    mesh.v[u] = {d, c, a};
    mesh.nb[u] = {t_ca, t, u_dc};
    replace_nb(u_bd, u, t);
    replace_nb(t_ca, t, u);

    stack.emplace_back(t, 0);
    stack.emplace_back(t, 2);
    stack.emplace_back(u, 0);
    stack.emplace_back(u, 2);
  }
}

}  // namespace

Triangulation delaunay(std::span<const PixelPoint> points) {
  Triangulation out;
  const int n = static_cast<int>(points.size());
  for (const auto& p : points)
    if (!is_finite(p)) fail(ErrorCode::kInvalidInput, "non-finite triangulation point");

  // Lexicographic order drives both merging and the sweep.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::tie(points[a].x(), points[a].y(), a) <
           std::tie(points[b].x(), points[b].y(), b);
  });

  std::vector<int> rep(n, -1);  // input -> representative input index
  std::vector<int> sorted_reps;
  for (int k = 0; k < n; ++k) {
    const int idx = order[k];
    for (auto it = sorted_reps.rbegin(); it != sorted_reps.rend(); ++it) {
      if (points[idx].x() - points[*it].x() > kMergeRadiusPx) break;
      if ((points[idx] - points[*it]).norm() <= kMergeRadiusPx) {
        rep[idx] = *it;
        break;
      }
    }
    if (rep[idx] < 0) {
      rep[idx] = idx;
      sorted_reps.push_back(idx);
    }
  }

  // Vertices are numbered by first occurrence in the input.
  std::vector<int> vertex_of_rep(n, -1);
  out.vertex_of_input.resize(n);
  for (int i = 0; i < n; ++i) {
    const int r = rep[i];
    if (vertex_of_rep[r] < 0) {
      vertex_of_rep[r] = static_cast<int>(out.vertices.size());
      out.vertices.push_back(points[i]);
    }
    out.vertex_of_input[i] = vertex_of_rep[r];
  }
  // Geometry follows the representative (lexicographically smallest member),
  // keeping the triangulation independent of input order.
  for (int i = 0; i < n; ++i) out.vertices[out.vertex_of_input[i]] = points[rep[i]];

  std::vector<int> sweep;  // vertex ids in lexicographic order
  sweep.reserve(sorted_reps.size());
  for (int r : sorted_reps) sweep.push_back(vertex_of_rep[r]);
  const auto& P = out.vertices;
  const int m = static_cast<int>(sweep.size());

  int k = 2;
  while (k < m && geom::orient2d(P[sweep[0]], P[sweep[1]], P[sweep[k]]) == 0) ++k;
  if (m < 3 || k >= m) {
    out.collinear = true;
    return out;
  }

  Mesh mesh;
  std::vector<int> hull;
  const bool left = geom::orient2d(P[sweep[0]], P[sweep[1]], P[sweep[k]]) > 0;
  for (int i = 0; i + 1 < k; ++i) {
    if (left)
      mesh.v.push_back({sweep[i], sweep[i + 1], sweep[k]});
    else
      mesh.v.push_back({sweep[i + 1], sweep[i], sweep[k]});
  }
  if (left) {
    for (int i = 0; i <= k; ++i) hull.push_back(sweep[i]);
  } else {
    hull.push_back(sweep[0]);
    for (int i = k; i >= 1; --i) hull.push_back(sweep[i]);
  }

  for (int s = k + 1; s < m; ++s) {
    const int p = sweep[s];
    const int h = static_cast<int>(hull.size());
    std::vector<std::uint8_t> visible(h, 0);
    for (int e = 0; e < h; ++e)
      visible[e] = geom::orient2d(P[hull[e]], P[hull[(e + 1) % h]], P[p]) < 0;
    // Visible edges are circularly contiguous; find the first one after an
    // invisible edge.
    int start = -1;
    for (int e = 0; e < h; ++e)
      if (visible[e] && !visible[(e + h - 1) % h]) {
        start = e;
        break;
      }
    if (start < 0) fail(ErrorCode::kInvalidInput, "sweep found no visible hull edge");
    int count = 0;
    while (visible[(start + count) % h]) {
      const int e = (start + count) % h;
      mesh.v.push_back({hull[(e + 1) % h], hull[e], p});
      ++count;
    }
    // Drop the interior vertices of the visible chain and splice p in.
    std::vector<int> next;
    next.reserve(h + 1);
    for (int off = 0; off <= h - count; ++off) next.push_back(hull[(start + count + off) % h]);
    next.push_back(p);
    hull = std::move(next);
  }

  link_neighbours(mesh);
  make_delaunay(mesh, P);

  for (const auto& tri : mesh.v) {
    if (0.5 * std::abs(geom::signed_area2(P[tri[0]], P[tri[1]], P[tri[2]])) < kMinTriangleArea)
      continue;
    out.triangles.push_back(tri);
  }
  return out;
}

}  // namespace anchorflow
