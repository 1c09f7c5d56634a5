#include "doctest.h"

#include "anchorflow/matching.hpp"
#include "oracles.hpp"

using namespace anchorflow;

namespace {

std::vector<std::pair<Index, Index>> as_cells(const CorrespondenceSet& s, const GridGeometry& gs,
                                              const GridGeometry& gt) {
  std::vector<std::pair<Index, Index>> out;
  for (const auto& c : s)
    out.emplace_back(gs.linear(pixel_to_cell(gs, c.src)), gt.linear(pixel_to_cell(gt, c.tgt)));
  return out;
}

// Descriptors drawn from a handful of small integers, so ties are common.
FeatureGrid tie_heavy_grid(Rng& rng, int rows, int cols, int dim) {
  FeatureGrid::Matrix m(Index(rows) * cols, dim);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = float(int(rng.below(3)) - 1);
  return FeatureGrid(GridGeometry{rows, cols, 4.0}, m);
}

CorrespondenceSet pairs(std::initializer_list<std::array<double, 4>> list, Provenance p) {
  CorrespondenceSet s;
  for (const auto& q : list) s.add({q[0], q[1]}, {q[2], q[3]}, p);
  return s;
}

}  // namespace

TEST_CASE("nearest neighbours on constructed grids") {
  Rng rng(1);
  const auto a = normalize_descriptors(oracle::random_grid<FeatureGridD>(rng, 5, 6, 8)).grid;
  const auto nn = nn_match(a, a);
  for (Index c = 0; c < a.cells(); ++c) CHECK(nn[c] == c);

  // target = source shifted one column to the right (cyclically)
  FeatureGridD::Matrix shifted(a.cells(), a.dim());
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) shifted.row(r * 6 + (c + 1) % 6) = a.data().row(r * 6 + c);
  const auto sn = nn_match(a, FeatureGridD(a.geometry(), shifted));
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) CHECK(sn[r * 6 + c] == r * 6 + (c + 1) % 6);

  const FeatureGridD flat(GridGeometry{3, 3, 1.0}, FeatureGridD::Matrix::Ones(9, 4));
  for (Index v : nn_match(flat, flat)) CHECK(v == 0);
  const auto m = mutual_nn(flat, flat, PixelRegion::full(), PixelRegion::full());
  REQUIRE(m.size() == 1);
  CHECK(m[0].src == PixelPoint(0.5, 0.5));
  CHECK(m[0].tgt == PixelPoint(0.5, 0.5));
  CHECK(m[0].provenance == Provenance::kMnn);
}

TEST_CASE("mutual nearest neighbours match the double-loop oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int r = 2 + int(rng.below(12)), c = 2 + int(rng.below(12));
    const auto a = trial % 2 ? tie_heavy_grid(rng, r, c, 3) : oracle::random_grid<FeatureGrid>(rng, r, c, 6);
    const auto b = trial % 2 ? tie_heavy_grid(rng, r, c, 3) : oracle::random_grid<FeatureGrid>(rng, r, c, 6);
    const std::vector<std::uint8_t> all(a.cells(), 1);
    const auto expect = oracle::mutual_nn(a, b, all, all);
    const auto got = mutual_nn(a, b, PixelRegion::full(), PixelRegion::full());
    CHECK(as_cells(got, a.geometry(), b.geometry()) == expect);

    // symmetric in its arguments
    auto back = as_cells(mutual_nn(b, a, PixelRegion::full(), PixelRegion::full()), b.geometry(),
                         a.geometry());
    for (auto& p : back) std::swap(p.first, p.second);
    std::sort(back.begin(), back.end());
    CHECK(back == expect);
  }
}

TEST_CASE("planted reciprocal match is found") {
  Rng rng(9);
  auto a = oracle::random_grid<FeatureGridD>(rng, 8, 8, 16);
  auto b = oracle::random_grid<FeatureGridD>(rng, 8, 8, 16);
  FeatureGridD::Matrix ma = a.data(), mb = b.data();
  ma.row(10) *= 0.0;
  ma(10, 0) = 100.0;
  mb.row(37) *= 0.0;
  mb(37, 0) = 100.0;
  a = FeatureGridD(a.geometry(), ma);
  b = FeatureGridD(b.geometry(), mb);
  const auto cells = as_cells(mutual_nn(a, b, PixelRegion::full(), PixelRegion::full()),
                              a.geometry(), b.geometry());
  CHECK(std::find(cells.begin(), cells.end(), std::pair<Index, Index>{10, 37}) != cells.end());
}

TEST_CASE("tie rules do not depend on the thread count") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = tie_heavy_grid(rng, 20, 17, 2);
    const auto b = tie_heavy_grid(rng, 19, 21, 2);
    MnnOptions o1;
    const auto ref = mutual_nn(a, b, PixelRegion::full(), PixelRegion::full(), o1);
    for (int t : {2, 4, 16}) {
      MnnOptions o;
      o.threads = t;
      const auto got = mutual_nn(a, b, PixelRegion::full(), PixelRegion::full(), o);
      REQUIRE(got.size() == ref.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].src == ref[i].src);
        CHECK(got[i].tgt == ref[i].tgt);
      }
      CHECK(nn_match(a, b, PixelRegion::full(), t) == nn_match(a, b));
    }
  }
}

TEST_CASE("region restriction") {
  Rng rng(4);
  const auto a = oracle::random_grid<FeatureGridD>(rng, 10, 10, 4);
  const auto b = oracle::random_grid<FeatureGridD>(rng, 10, 10, 4);
  const auto box = PixelRegion::box(8, 8, 30, 26);
  std::vector<std::uint8_t> mask(100, 0);
  for (int i = 0; i < 100; i += 3) mask[i] = 1;
  const auto mreg = PixelRegion::mask(10, 10, mask);
  const auto got = mutual_nn(a, b, box, mreg);
  for (const auto& c : got) {
    CHECK(box.contains(a.geometry(), c.src));
    CHECK(mreg.contains(b.geometry(), c.tgt));
  }
  const auto expect = oracle::mutual_nn(a, b, box.cell_membership(a.geometry()), mask);
  CHECK(as_cells(got, a.geometry(), b.geometry()) == expect);

  for (Index v : nn_match(a, b, mreg)) CHECK(mask[v] == 1);
  CHECK_THROWS_AS(nn_match(a, b, PixelRegion::box(100, 100, 120, 120)), Error);
}

TEST_CASE("similarity floor") {
  Rng rng(8);
  const auto a = oracle::random_grid<FeatureGridD>(rng, 6, 6, 4);
  MnnOptions o;
  o.min_similarity = 1e9;
  CHECK(mutual_nn(a, a, PixelRegion::full(), PixelRegion::full(), o).empty());
}

TEST_CASE("keypoint boxes") {
  const auto e = pairs({{10, 10, 5, 5}, {30, 40, 25, 15}}, Provenance::kAnnotated);
  auto [bs, bt] = bbox_from_keypoints(e, 0.0, {100, 100}, {100, 100});
  const auto& b = std::get<BoxRegion>(bs.kind());
  CHECK(b.min_x == 10);
  CHECK(b.min_y == 10);
  CHECK(b.max_x == 30);
  CHECK(b.max_y == 40);

  auto [cs, ct] = bbox_from_keypoints(e, 1.0, {50, 45}, {100, 100});
  const auto& c = std::get<BoxRegion>(cs.kind());
  CHECK(c.min_x == 0);
  CHECK(c.min_y == 0);
  CHECK(c.max_x == 50);
  CHECK(c.max_y == 45);

  Rng rng(12);
  CorrespondenceSet r;
  double lo_x = 1e9, lo_y = 1e9, hi_x = -1e9, hi_y = -1e9;
  for (int i = 0; i < 5; ++i) {
    const PixelPoint p(rng.uniform(20, 80), rng.uniform(20, 80));
    r.add(p, p, Provenance::kAnnotated);
    lo_x = std::min(lo_x, p.x());
    lo_y = std::min(lo_y, p.y());
    hi_x = std::max(hi_x, p.x());
    hi_y = std::max(hi_y, p.y());
  }
  const double grow = 0.1 * std::hypot(hi_x - lo_x, hi_y - lo_y);
  const auto d = std::get<BoxRegion>(bbox_from_keypoints(r, 0.1, {100, 100}, {100, 100}).first.kind());
  CHECK(d.min_x == doctest::Approx(std::max(0.0, lo_x - grow)));
  CHECK(d.max_y == doctest::Approx(std::min(100.0, hi_y + grow)));

  CHECK_THROWS_AS(bbox_from_keypoints(pairs({{1, 1, 1, 1}}, Provenance::kAnnotated), 0, {9, 9}, {9, 9}), Error);
  CHECK_THROWS_AS(bbox_from_keypoints(pairs({{1, 1, 1, 1}, {1, 5, 3, 3}}, Provenance::kAnnotated), 0,
                                      {9, 9}, {9, 9}),
                  Error);
}

TEST_CASE("seed set assembly") {
  const auto e = pairs({{10, 10, 20, 20}, {30, 30, 40, 40}, {50, 50, 60, 60}}, Provenance::kAnnotated);
  const auto m = pairs({{2, 2, 2, 2}, {6, 6, 6, 6}, {70, 10, 7, 7}, {90, 90, 9, 9}}, Provenance::kMnn);
  CHECK(build_seed_set(e, {}, 4.0).size() == 3);
  const auto s = build_seed_set(e, m, 4.0);
  CHECK(s.size() == 7);
  for (int i = 0; i < 3; ++i) {
    CHECK(s[i].src == e[i].src);
    CHECK(s[i].tgt == e[i].tgt);
    CHECK(s[i].provenance == Provenance::kAnnotated);
  }

  // conflicting source: the annotation wins
  const auto conflict = pairs({{11, 10.5, 90, 90}}, Provenance::kMnn);
  const auto c = build_seed_set(e, conflict, 4.0);
  CHECK(c.size() == 3);
  CHECK(c[0].tgt == PixelPoint(20, 20));
  // just outside half a stride
  CHECK(build_seed_set(e, pairs({{12.01, 10, 1, 1}}, Provenance::kMnn), 4.0).size() == 4);

  // idempotent, and the MNN order does not matter
  const auto again = build_seed_set(s, m, 4.0);
  CHECK(again.size() == s.size());
  const auto reversed = pairs({{90, 90, 9, 9}, {70, 10, 7, 7}, {6, 6, 6, 6}, {2, 2, 2, 2}}, Provenance::kMnn);
  const auto r = build_seed_set(e, reversed, 4.0);
  REQUIRE(r.size() == s.size());
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i].src == s[i].src);
}

TEST_CASE("correspondence sets reject duplicates and non-finite points") {
  CorrespondenceSet s;
  CHECK(s.add({1, 2}, {3, 4}, Provenance::kMnn));
  CHECK_FALSE(s.add({1, 2}, {3, 4}, Provenance::kAnnotated));
  CHECK(s.size() == 1);
  CHECK_THROWS_AS(s.add({NAN, 2}, {3, 4}, Provenance::kMnn), Error);
}
