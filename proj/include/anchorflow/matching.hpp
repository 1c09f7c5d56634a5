#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "anchorflow/correspondence.hpp"
#include "anchorflow/grid.hpp"
#include "anchorflow/parallel.hpp"

namespace anchorflow {

/// Marks a source cell that has no match (outside its region).
inline constexpr Index kNoMatch = -1;

namespace detail {

using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
RowMatrixXd to_double(const BasicFeatureGrid<Scalar>& g) {
  return g.data().template cast<double>();
}

// Fixed summation order, so dot(a, b) == dot(b, a) bit for bit and the value
// does not depend on how work is split across threads.
inline double dot_fixed(const double* a, const double* b, Index dim) {
  double acc = 0.0;
  for (Index d = 0; d < dim; ++d) acc += a[d] * b[d];
  return acc;
}

struct ArgmaxResult {
  std::vector<Index> index;
  std::vector<double> score;
};

/// For each row of `from` (where from_in is set) the best row of `to` among
/// rows with to_in set. Ties go to the lowest row index.
inline ArgmaxResult directional_argmax(const RowMatrixXd& from,
                                       const std::vector<std::uint8_t>& from_in,
                                       const RowMatrixXd& to,
                                       const std::vector<std::uint8_t>& to_in,
                                       int threads) {
  const Index n = from.rows();
  const Index dim = from.cols();
  ArgmaxResult out{std::vector<Index>(n, kNoMatch), std::vector<double>(n, 0.0)};
  parallel_for(n, threads, [&](std::ptrdiff_t b, std::ptrdiff_t e) {
    for (Index u = b; u < e; ++u) {
      if (!from_in[u]) continue;
      Index best = kNoMatch;
      double best_score = 0.0;
      for (Index v = 0; v < to.rows(); ++v) {
        if (!to_in[v]) continue;
        const double s = dot_fixed(from.row(u).data(), to.row(v).data(), dim);
        if (best == kNoMatch || s > best_score) {
          best = v;
          best_score = s;
        }
      }
      out.index[u] = best;
      out.score[u] = best_score;
    }
  });
  return out;
}

inline bool any_set(const std::vector<std::uint8_t>& m) {
  for (auto v : m)
    if (v) return true;
  return false;
}

}  // namespace detail

/// Nearest neighbour (max inner product) of every source cell among the
/// target cells inside region_tgt. Ties resolve to the lowest row-major index.
template <typename Scalar>
std::vector<Index> nn_match(const BasicFeatureGrid<Scalar>& src,
                            const BasicFeatureGrid<Scalar>& tgt,
                            const PixelRegion& region_tgt = PixelRegion::full(),
                            int threads = 1) {
  if (src.dim() != tgt.dim())
    fail(ErrorCode::kInvalidInput, "source/target descriptor dims differ");
  const auto tgt_in = region_tgt.cell_membership(tgt.geometry());
  if (!detail::any_set(tgt_in))
    fail(ErrorCode::kInvalidInput, "target region contains no cells");
  const std::vector<std::uint8_t> src_in(std::size_t(src.cells()), 1);
  return detail::directional_argmax(detail::to_double(src), src_in,
                                    detail::to_double(tgt), tgt_in, threads)
      .index;
}

struct MnnOptions {
  /// Drop reciprocal pairs whose similarity is below this floor.
  std::optional<double> min_similarity;
  int threads = 1;
};

/// Mutual nearest neighbours between cells of src (inside region_src) and
/// cells of tgt (inside region_tgt), returned as cell-center pixel pairs
/// ordered by source cell.
template <typename Scalar>
CorrespondenceSet mutual_nn(const BasicFeatureGrid<Scalar>& src,
                            const BasicFeatureGrid<Scalar>& tgt,
                            const PixelRegion& region_src,
                            const PixelRegion& region_tgt,
                            const MnnOptions& options = {}) {
  if (src.dim() != tgt.dim())
    fail(ErrorCode::kInvalidInput, "source/target descriptor dims differ");
  const auto src_in = region_src.cell_membership(src.geometry());
  const auto tgt_in = region_tgt.cell_membership(tgt.geometry());
  if (!detail::any_set(src_in) || !detail::any_set(tgt_in))
    fail(ErrorCode::kInvalidInput, "matching region contains no cells");

  const auto a = detail::to_double(src);
  const auto b = detail::to_double(tgt);
  const auto fwd = detail::directional_argmax(a, src_in, b, tgt_in, options.threads);
  const auto bwd = detail::directional_argmax(b, tgt_in, a, src_in, options.threads);

  CorrespondenceSet out;
  for (Index u = 0; u < src.cells(); ++u) {
    const Index v = fwd.index[u];
    if (v == kNoMatch || bwd.index[v] != u) continue;
    if (options.min_similarity && fwd.score[u] < *options.min_similarity) continue;
    out.add(src.geometry().center(u), tgt.geometry().center(v), Provenance::kMnn);
  }
  return out;
}

/// Width/height of an image in pixels.
struct ImageExtent {
  double width = 0;
  double height = 0;
};

/// Tight per-image boxes around the keypoints of E, grown by margin_frac of
/// the box diagonal on every side and clipped to the image.
std::pair<PixelRegion, PixelRegion> bbox_from_keypoints(const CorrespondenceSet& E,
                                                        double margin_frac,
                                                        ImageExtent src_image,
                                                        ImageExtent tgt_image);

/// E united with the MNN pairs. An MNN pair whose source lies within
/// 0.5 * stride of an annotated source is dropped; annotated pairs are kept
/// verbatim and first, MNN pairs follow in canonical (sorted) order.
CorrespondenceSet build_seed_set(const CorrespondenceSet& E,
                                 const CorrespondenceSet& mnn, double stride);

}  // namespace anchorflow
