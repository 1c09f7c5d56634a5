#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "anchorflow/error.hpp"

namespace anchorflow {

using Index = Eigen::Index;

/// Image-pixel coordinate (x right, y down).
using PixelPoint = Eigen::Vector2d;

struct CellIndex {
  int row = 0;
  int col = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Lattice shape and pixel stride of a descriptor grid. Cell (i, j) has its
/// center at ((j + 0.5) * stride, (i + 0.5) * stride).
struct GridGeometry {
  int rows = 0;
  int cols = 0;
  double stride = 1.0;

  Index cells() const { return Index(rows) * cols; }
  double width_px() const { return cols * stride; }
  double height_px() const { return rows * stride; }

  Index linear(CellIndex c) const { return Index(c.row) * cols + c.col; }
  CellIndex cell(Index linear) const {
    return {static_cast<int>(linear / cols), static_cast<int>(linear % cols)};
  }
  PixelPoint center(Index linear) const {
    return {(double(linear % cols) + 0.5) * stride,
            (double(linear / cols) + 0.5) * stride};
  }
  bool in_image(const PixelPoint& p) const {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width_px() &&
           p.y() <= height_px();
  }

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

inline void validate_geometry(const GridGeometry& g) {
  if (g.rows < 2 || g.cols < 2)
    fail(ErrorCode::kInvalidInput, "grid must have at least 2x2 cells");
  if (!std::isfinite(g.stride) || g.stride <= 0.0)
    fail(ErrorCode::kInvalidInput, "stride must be positive and finite");
}

inline bool is_finite(const PixelPoint& p) {
  return std::isfinite(p.x()) && std::isfinite(p.y());
}

/// Dense D-dimensional descriptor field, one row per cell in row-major cell
/// order. Immutable after construction.
template <typename Scalar>
class BasicFeatureGrid {
 public:
  using Matrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BasicFeatureGrid() = default;

  BasicFeatureGrid(GridGeometry geometry, Matrix data, bool normalized = false)
      : geometry_(geometry), data_(std::move(data)), normalized_(normalized) {
    validate_geometry(geometry_);
    if (data_.cols() < 1)
      fail(ErrorCode::kInvalidInput, "descriptor dim must be >= 1");
    if (data_.rows() != geometry_.cells())
      fail(ErrorCode::kInvalidInput,
           "descriptor rows (" + std::to_string(data_.rows()) +
               ") != cell count (" + std::to_string(geometry_.cells()) + ")");
    if (!data_.allFinite())
      fail(ErrorCode::kInvalidInput, "descriptor grid contains NaN/Inf");
  }

  const GridGeometry& geometry() const { return geometry_; }
  int rows() const { return geometry_.rows; }
  int cols() const { return geometry_.cols; }
  int dim() const { return static_cast<int>(data_.cols()); }
  Index cells() const { return geometry_.cells(); }
  double stride() const { return geometry_.stride; }
  bool normalized() const { return normalized_; }

  const Matrix& data() const { return data_; }
  auto descriptor(Index cell) const { return data_.row(cell); }

  template <typename Other>
  BasicFeatureGrid<Other> cast() const {
    return BasicFeatureGrid<Other>(geometry_, data_.template cast<Other>(),
                                   normalized_);
  }

 private:
  GridGeometry geometry_;
  Matrix data_;
  bool normalized_ = false;
};

using FeatureGrid = BasicFeatureGrid<float>;
using FeatureGridD = BasicFeatureGrid<double>;

// ---------------------------------------------------------------------------
// Coordinates

inline PixelPoint cell_to_pixel(const GridGeometry& g, CellIndex c) {
  if (c.row < 0 || c.col < 0 || c.row >= g.rows || c.col >= g.cols)
    fail(ErrorCode::kInvalidInput, "cell index out of grid");
  return g.center(g.linear(c));
}

/// Nearest cell center; exact midpoints resolve to the lower index.
inline CellIndex pixel_to_cell(const GridGeometry& g, const PixelPoint& p) {
  if (!is_finite(p)) fail(ErrorCode::kInvalidInput, "non-finite pixel point");
  auto nearest = [](double v, int n) {
    const int i = static_cast<int>(std::ceil(v - 0.5));
    return std::clamp(i, 0, n - 1);
  };
  return {nearest(p.y() / g.stride - 0.5, g.rows),
          nearest(p.x() / g.stride - 0.5, g.cols)};
}

// ---------------------------------------------------------------------------
// Interpolation

struct BilinearTap {
  Index cell;
  double weight;
};

/// Up to four (cell, weight) taps of the bilinear interpolant at p. Points
/// outside the hull of cell centers clamp to the border cells.
inline std::vector<BilinearTap> bilinear_taps(const GridGeometry& g,
                                              const PixelPoint& p) {
  if (!is_finite(p)) fail(ErrorCode::kInvalidInput, "non-finite pixel point");
  constexpr double kSlack = 1e-9;
  if (p.x() < -kSlack || p.y() < -kSlack || p.x() > g.width_px() + kSlack ||
      p.y() > g.height_px() + kSlack)
    fail(ErrorCode::kInvalidInput, "point outside image extent");

  const double fx = std::clamp(p.x() / g.stride - 0.5, 0.0, double(g.cols - 1));
  const double fy = std::clamp(p.y() / g.stride - 0.5, 0.0, double(g.rows - 1));
  const int j0 = std::min(static_cast<int>(std::floor(fx)), g.cols - 2);
  const int i0 = std::min(static_cast<int>(std::floor(fy)), g.rows - 2);
  const double tx = fx - j0;
  const double ty = fy - i0;

  const std::array<BilinearTap, 4> all{{
      {g.linear({i0, j0}), (1.0 - tx) * (1.0 - ty)},
      {g.linear({i0, j0 + 1}), tx * (1.0 - ty)},
      {g.linear({i0 + 1, j0}), (1.0 - tx) * ty},
      {g.linear({i0 + 1, j0 + 1}), tx * ty},
  }};
  std::vector<BilinearTap> taps;
  taps.reserve(4);
  for (const auto& t : all)
    if (t.weight != 0.0) taps.push_back(t);
  return taps;
}

/// Bilinearly interpolated descriptor at pixel p, accumulated in double.
template <typename Scalar>
Eigen::VectorXd descriptor_at(const BasicFeatureGrid<Scalar>& grid,
                              const PixelPoint& p) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(grid.dim());
  for (const auto& t : bilinear_taps(grid.geometry(), p))
    out += t.weight * grid.descriptor(t.cell).transpose().template cast<double>();
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

template <typename Scalar>
struct NormalizedGrid {
  BasicFeatureGrid<Scalar> grid;
  std::vector<Index> degenerate_cells;
};

/// Scales every descriptor to unit L2 norm. All-zero descriptors stay zero and
/// are reported in degenerate_cells.
template <typename Scalar>
NormalizedGrid<Scalar> normalize_descriptors(const BasicFeatureGrid<Scalar>& grid) {
  typename BasicFeatureGrid<Scalar>::Matrix out = grid.data();
  std::vector<Index> degenerate;
  for (Index c = 0; c < out.rows(); ++c) {
    const double n = out.row(c).template cast<double>().norm();
    if (n == 0.0) {
      degenerate.push_back(c);
      continue;
    }
    out.row(c) =
        (out.row(c).template cast<double>() / n).template cast<Scalar>();
  }
  return {BasicFeatureGrid<Scalar>(grid.geometry(), std::move(out), true),
          std::move(degenerate)};
}

// ---------------------------------------------------------------------------
// Similarity

/// One score per target cell for a single source descriptor.
struct SimilarityMap {
  GridGeometry geometry;
  Eigen::VectorXd scores;
  PixelPoint source_point = PixelPoint::Zero();
};

/// Inner product of src_desc with every descriptor of tgt (no softmax).
template <typename Scalar, typename Derived>
SimilarityMap similarity_map(const Eigen::MatrixBase<Derived>& src_desc,
                             const BasicFeatureGrid<Scalar>& tgt,
                             const PixelPoint& source_point = PixelPoint::Zero()) {
  if (src_desc.size() != tgt.dim())
    fail(ErrorCode::kInvalidInput,
         "descriptor dim " + std::to_string(src_desc.size()) +
             " != grid dim " + std::to_string(tgt.dim()));
  const Eigen::VectorXd s = src_desc.template cast<double>();
  SimilarityMap out{tgt.geometry(), Eigen::VectorXd(tgt.cells()), source_point};
  if constexpr (std::is_same_v<Scalar, double>) {
    out.scores.noalias() = tgt.data() * s;
  } else {
    out.scores.noalias() = tgt.data().template cast<double>() * s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Regions

struct FullRegion {};

struct BoxRegion {
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

/// Per-cell membership bytes at the resolution of the paired grid.
struct MaskRegion {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> cells;
};

/// Spatial prior restricting where correspondences may live.
class PixelRegion {
 public:
  using Kind = std::variant<FullRegion, BoxRegion, MaskRegion>;

  PixelRegion() : kind_(FullRegion{}) {}

  static PixelRegion full() { return PixelRegion(); }

  static PixelRegion box(double min_x, double min_y, double max_x, double max_y) {
    if (!(max_x > min_x) || !(max_y > min_y))
      fail(ErrorCode::kDegenerateRegion, "bbox must have max > min on both axes");
    PixelRegion r;
    r.kind_ = BoxRegion{min_x, min_y, max_x, max_y};
    return r;
  }

  static PixelRegion mask(int rows, int cols, std::vector<std::uint8_t> cells) {
    if (rows < 1 || cols < 1 || cells.size() != std::size_t(rows) * cols)
      fail(ErrorCode::kMaskMismatch, "mask byte count does not match its dims");
    PixelRegion r;
    r.kind_ = MaskRegion{rows, cols, std::move(cells)};
    return r;
  }

  const Kind& kind() const { return kind_; }
  bool is_full() const { return std::holds_alternative<FullRegion>(kind_); }

  /// Membership of every cell center of a grid with geometry g.
  std::vector<std::uint8_t> cell_membership(const GridGeometry& g) const {
    std::vector<std::uint8_t> in(std::size_t(g.cells()), 1);
    if (const auto* b = std::get_if<BoxRegion>(&kind_)) {
      for (Index c = 0; c < g.cells(); ++c) in[c] = inside_box(*b, g.center(c));
    } else if (const auto* m = std::get_if<MaskRegion>(&kind_)) {
      check_mask_dims(*m, g);
      for (Index c = 0; c < g.cells(); ++c) in[c] = m->cells[c] != 0;
    }
    return in;
  }

  bool contains(const GridGeometry& g, const PixelPoint& p) const {
    if (const auto* b = std::get_if<BoxRegion>(&kind_)) return inside_box(*b, p);
    if (const auto* m = std::get_if<MaskRegion>(&kind_)) {
      check_mask_dims(*m, g);
      return m->cells[g.linear(pixel_to_cell(g, p))] != 0;
    }
    return true;
  }

 private:
  static bool inside_box(const BoxRegion& b, const PixelPoint& p) {
    return p.x() >= b.min_x && p.x() <= b.max_x && p.y() >= b.min_y &&
           p.y() <= b.max_y;
  }
  static void check_mask_dims(const MaskRegion& m, const GridGeometry& g) {
    if (m.rows != g.rows || m.cols != g.cols)
      fail(ErrorCode::kMaskMismatch, "mask dims differ from grid dims");
  }

  Kind kind_;
};

}  // namespace anchorflow
