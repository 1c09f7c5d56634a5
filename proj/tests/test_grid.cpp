#include "doctest.h"

#include "anchorflow/grid.hpp"
#include "oracles.hpp"

using namespace anchorflow;

namespace {

FeatureGridD grid_from(int rows, int cols, double stride, std::initializer_list<double> values,
                       int dim) {
  FeatureGridD::Matrix m(Index(rows) * cols, dim);
  auto it = values.begin();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < dim; ++c) m(r, c) = *it++;
  return FeatureGridD(GridGeometry{rows, cols, stride}, m);
}

}  // namespace

TEST_CASE("cell centers and nearest-cell lookup") {
  const GridGeometry g{5, 6, 14.0};
  CHECK(cell_to_pixel(g, {0, 0}) == PixelPoint(7.0, 7.0));
  CHECK(pixel_to_cell(g, {7.0, 7.0}) == CellIndex{0, 0});
  // halfway between the centers of columns 0 and 1
  CHECK(pixel_to_cell(g, {14.0, 7.0}) == CellIndex{0, 0});
  CHECK(pixel_to_cell(g, {14.0, 14.0}) == CellIndex{0, 0});
  CHECK(pixel_to_cell(g, {14.0001, 7.0}) == CellIndex{0, 1});
  for (Index c = 0; c < g.cells(); ++c) CHECK(g.linear(pixel_to_cell(g, g.center(c))) == c);
  CHECK_THROWS_AS(cell_to_pixel(g, {5, 0}), Error);
  CHECK_THROWS_AS(pixel_to_cell(g, {NAN, 1.0}), Error);
}

TEST_CASE("bilinear interpolation") {
  const FeatureGridD g = grid_from(2, 2, 4.0, {1, 10, 2, 20, 3, 30, 4, 40}, 2);
  CHECK(descriptor_at(g, {2.0, 2.0}).isApprox(Eigen::Vector2d(1, 10)));
  CHECK(descriptor_at(g, {4.0, 2.0}).isApprox(Eigen::Vector2d(1.5, 15)));
  CHECK(descriptor_at(g, {4.0, 4.0}).isApprox(Eigen::Vector2d(2.5, 25)));
  // outside the hull of centers: clamped to the border
  CHECK(descriptor_at(g, {0.0, 0.0}).isApprox(Eigen::Vector2d(1, 10)));
  CHECK_THROWS_AS(descriptor_at(g, {-1.0, 0.0}), Error);
  CHECK_THROWS_AS(descriptor_at(g, {INFINITY, 0.0}), Error);

  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = 2 + int(rng.below(6)), cols = 2 + int(rng.below(6));
    const auto grid = oracle::random_grid<FeatureGrid>(rng, rows, cols, 5, 3.5);
    for (int q = 0; q < 50; ++q) {
      const PixelPoint p(rng.uniform(0, cols * 3.5), rng.uniform(0, rows * 3.5));
      worst = std::max(worst, (descriptor_at(grid, p) - oracle::bilinear(grid, p)).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("bilinear taps sum to one") {
  const GridGeometry g{3, 3, 2.0};
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    double s = 0;
    for (const auto& t : bilinear_taps(g, {rng.uniform(0, 6), rng.uniform(0, 6)})) s += t.weight;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("normalization") {
  const FeatureGridD g = grid_from(2, 2, 1.0, {3, 4, 0, 0, 1, 0, 0, 2}, 2);
  const auto n = normalize_descriptors(g);
  CHECK(n.grid.normalized());
  CHECK(n.grid.descriptor(0).isApprox(Eigen::RowVector2d(0.6, 0.8)));
  CHECK(n.grid.descriptor(1).isZero());
  CHECK(n.degenerate_cells == std::vector<Index>{1});
  const auto twice = normalize_descriptors(n.grid);
  CHECK((twice.grid.data() - n.grid.data()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("similarity maps") {
  Rng rng(11);
  const auto grid = oracle::random_grid<FeatureGridD>(rng, 4, 4, 8);
  const Eigen::VectorXd s = Eigen::VectorXd::Random(8);
  const SimilarityMap m = similarity_map(s, grid);
  for (Index c = 0; c < grid.cells(); ++c) {
    double d = 0;
    for (int k = 0; k < 8; ++k) d += s[k] * grid.data()(c, k);
    CHECK(m.scores[c] == doctest::Approx(d).epsilon(1e-12));
  }
  CHECK(similarity_map(Eigen::VectorXd(Eigen::VectorXd::Zero(8)), grid).scores.isZero());
  const SimilarityMap m3 = similarity_map(Eigen::VectorXd(3.0 * s), grid);
  CHECK(m3.scores.isApprox(3.0 * m.scores));
  CHECK_THROWS_AS(similarity_map(Eigen::VectorXd(Eigen::VectorXd::Zero(3)), grid), Error);

  const auto n = normalize_descriptors(grid).grid;
  for (Index c = 0; c < n.cells(); ++c) {
    const auto sc = similarity_map(n.descriptor(c).transpose(), n).scores;
    CHECK(sc.maxCoeff() <= 1 + 1e-12);
    CHECK(sc.minCoeff() >= -1 - 1e-12);
    CHECK(sc[c] == doctest::Approx(1.0));
  }
}

TEST_CASE("grid construction guards") {
  FeatureGridD::Matrix m = FeatureGridD::Matrix::Zero(4, 2);
  CHECK_THROWS_AS(FeatureGridD(GridGeometry{2, 3, 1.0}, m), Error);
  CHECK_THROWS_AS(FeatureGridD(GridGeometry{1, 4, 1.0}, m), Error);
  CHECK_THROWS_AS(FeatureGridD(GridGeometry{2, 2, 0.0}, m), Error);
  m(0, 0) = NAN;
  CHECK_THROWS_AS(FeatureGridD(GridGeometry{2, 2, 1.0}, m), Error);
}

TEST_CASE("regions") {
  const GridGeometry g{3, 3, 2.0};
  const auto box = PixelRegion::box(0, 0, 3, 3).cell_membership(g);
  CHECK(box == std::vector<std::uint8_t>{1, 1, 0, 1, 1, 0, 0, 0, 0});
  CHECK_THROWS_AS(PixelRegion::box(1, 1, 1, 2), Error);
  CHECK_THROWS_AS(PixelRegion::mask(3, 3, std::vector<std::uint8_t>(8, 1)), Error);
  const auto mask = PixelRegion::mask(2, 2, {1, 0, 0, 1});
  CHECK_THROWS_AS(mask.cell_membership(g), Error);
  CHECK(PixelRegion::full().cell_membership(g) == std::vector<std::uint8_t>(9, 1));
}
