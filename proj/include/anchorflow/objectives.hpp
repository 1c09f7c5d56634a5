#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "anchorflow/correspondence.hpp"
#include "anchorflow/grid.hpp"

namespace anchorflow {

// ---------------------------------------------------------------------------
// Bandwidth schedule

/// Cosine decay of the target bandwidth (in lattice cells) over T steps.
struct SigmaSchedule {
  double sigma_min = 1.0;
  double sigma_max = 3.0;
  int total_steps = 1;

  static SigmaSchedule fixed(double sigma, int total_steps) {
    return {sigma, sigma, total_steps};
  }
};

inline double sigma_at(const SigmaSchedule& s, int t) {
  if (!(s.sigma_min > 0.0) || !(s.sigma_min <= s.sigma_max) || s.total_steps < 1)
    fail(ErrorCode::kInvalidInput, "schedule needs 0 < sigma_min <= sigma_max and T >= 1");
  if (t < 0 || t > s.total_steps) fail(ErrorCode::kInvalidInput, "step outside [0, T]");
  if (t == 0) return s.sigma_max;
  if (t == s.total_steps) return s.sigma_min;
  return s.sigma_min + 0.5 * (s.sigma_max - s.sigma_min) *
                           (1.0 + std::cos(std::numbers::pi * double(t) / s.total_steps));
}

// ---------------------------------------------------------------------------
// Targets and softmax

/// Normalized Gaussian RBF over the cell centers of a lattice.
struct TargetHeatmap {
  GridGeometry geometry;
  Eigen::VectorXd prob;
  PixelPoint center = PixelPoint::Zero();
  double sigma_cells = 1.0;
};

inline TargetHeatmap gaussian_target(const PixelPoint& center, double sigma_cells,
                                     const GridGeometry& lattice) {
  if (!(sigma_cells > 0.0)) fail(ErrorCode::kInvalidInput, "sigma must be positive");
  if (!is_finite(center)) fail(ErrorCode::kInvalidInput, "non-finite target center");
  TargetHeatmap h{lattice, Eigen::VectorXd(lattice.cells()), center, sigma_cells};
  // Work in log space relative to the largest term so tiny sigmas stay finite.
  Eigen::VectorXd logits(lattice.cells());
  for (Index c = 0; c < lattice.cells(); ++c) {
    const double d2 = (lattice.center(c) - center).squaredNorm() / (lattice.stride * lattice.stride);
    logits[c] = -d2 / (2.0 * sigma_cells * sigma_cells);
  }
  h.prob = (logits.array() - logits.maxCoeff()).exp();
  h.prob /= h.prob.sum();
  return h;
}

/// softmax(scores / temperature), numerically stable.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& scores, double temperature) {
  Eigen::VectorXd p = ((scores.array() - scores.maxCoeff()) / temperature).exp();
  return p / p.sum();
}

inline double log_sum_exp(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

struct ScoreLoss {
  double value = 0.0;
  /// d value / d score, one entry per cell.
  Eigen::VectorXd grad_scores;
};

/// Cross-entropy between a target heatmap and softmax(S / temperature).
inline ScoreLoss ce_loss(const SimilarityMap& sim, const TargetHeatmap& target,
                         double temperature) {
  if (!(temperature > 0.0)) fail(ErrorCode::kInvalidInput, "temperature must be positive");
  if (sim.scores.size() != target.prob.size())
    fail(ErrorCode::kInvalidInput, "similarity map and target differ in size");
  if (!sim.scores.allFinite()) fail(ErrorCode::kInvalidInput, "non-finite similarity scores");
  const Eigen::VectorXd logits = sim.scores / temperature;
  const double lse = log_sum_exp(logits);
  ScoreLoss out;
  out.value = -(target.prob.array() * (logits.array() - lse)).sum();
  out.grad_scores = (softmax(sim.scores, temperature) - target.prob) / temperature;
  return out;
}

// ---------------------------------------------------------------------------
// Soft-argmax

/// Expected cell center under softmax(S / temperature).
inline PixelPoint soft_argmax(const SimilarityMap& sim, double temperature) {
  const Eigen::VectorXd p = softmax(sim.scores, temperature);
  PixelPoint m = PixelPoint::Zero();
  for (Index c = 0; c < p.size(); ++c) m += p[c] * sim.geometry.center(c);
  return m;
}

/// Soft-argmax restricted to the window_cells x window_cells box (clipped at
/// the borders) around the global argmax; ties go to the lowest index.
inline PixelPoint windowed_soft_argmax(const SimilarityMap& sim, int window_cells,
                                       double temperature) {
  if (window_cells < 1 || window_cells % 2 == 0)
    fail(ErrorCode::kInvalidInput, "window must be a positive odd number of cells");
  const auto& g = sim.geometry;
  Index peak = 0;
  for (Index c = 1; c < sim.scores.size(); ++c)
    if (sim.scores[c] > sim.scores[peak]) peak = c;
  const CellIndex pc = g.cell(peak);
  const int half = window_cells / 2;
  const int r0 = std::max(0, pc.row - half), r1 = std::min(g.rows - 1, pc.row + half);
  const int c0 = std::max(0, pc.col - half), c1 = std::min(g.cols - 1, pc.col + half);

  const double top = sim.scores[peak];
  double z = 0.0;
  PixelPoint m = PixelPoint::Zero();
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const Index cell = g.linear({r, c});
      const double w = std::exp((sim.scores[cell] - top) / temperature);
      z += w;
      m += w * g.center(cell);
    }
  return m / z;
}

// ---------------------------------------------------------------------------
// Feature-space losses

/// Gradient rows for a sorted set of touched cells.
struct CellGradient {
  std::vector<Index> cells;
  Eigen::MatrixXd rows;

  bool empty() const { return cells.empty(); }

  /// Builds from a dense per-cell gradient, keeping the listed cells.
  static CellGradient from_dense(const Eigen::MatrixXd& dense, std::vector<Index> touched) {
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    CellGradient g;
    g.rows.resize(static_cast<Index>(touched.size()), dense.cols());
    for (std::size_t i = 0; i < touched.size(); ++i) g.rows.row(i) = dense.row(touched[i]);
    g.cells = std::move(touched);
    return g;
  }

  /// dense.row(cell) += scale * gradient for every touched cell.
  template <typename Derived>
  void add_to(Eigen::MatrixBase<Derived>& dense, double scale = 1.0) const {
    using S = typename Derived::Scalar;
    for (std::size_t i = 0; i < cells.size(); ++i)
      dense.row(cells[i]) += (scale * rows.row(i)).template cast<S>();
  }
};

struct LossOutput {
  double value = 0.0;
  CellGradient source;
  CellGradient target;
  /// Set when the loss had nothing to average over (defined as 0).
  bool empty = false;
};

namespace detail {

template <typename Scalar>
Eigen::MatrixXd as_double(const BasicFeatureGrid<Scalar>& g) {
  return g.data().template cast<double>();
}

inline std::vector<Index> all_cells(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace detail

/// Supervised cross-entropy term for one annotated pair: the source
/// descriptor is interpolated at p_src, scored against every target cell and
/// compared with the Gaussian target. Gradients flow into the source taps and
/// all target cells.
template <typename Scalar>
LossOutput supervised_loss(const BasicFeatureGrid<Scalar>& src,
                           const BasicFeatureGrid<Scalar>& tgt, const PixelPoint& p_src,
                           const TargetHeatmap& target, double temperature) {
  const auto taps = bilinear_taps(src.geometry(), p_src);
  const Eigen::VectorXd s = descriptor_at(src, p_src);
  const Eigen::MatrixXd ft = detail::as_double(tgt);
  const SimilarityMap sim{tgt.geometry(), ft * s, p_src};
  const ScoreLoss l = ce_loss(sim, target, temperature);

  LossOutput out;
  out.value = l.value;
  out.target = CellGradient{detail::all_cells(tgt.cells()), l.grad_scores * s.transpose()};
  const Eigen::RowVectorXd ds = l.grad_scores.transpose() * ft;
  Eigen::MatrixXd src_dense = Eigen::MatrixXd::Zero(src.cells(), src.dim());
  std::vector<Index> touched;
  for (const auto& t : taps) {
    src_dense.row(t.cell) += t.weight * ds;
    touched.push_back(t.cell);
  }
  out.source = CellGradient::from_dense(src_dense, std::move(touched));
  return out;
}

/// Mean squared distance between the soft-argmax of each pair's similarity
/// map and its target point, with gradients through softmax and soft-argmax.
template <typename Scalar>
LossOutput l2_self_loss(const CorrespondenceSet& pairs, const BasicFeatureGrid<Scalar>& src,
                        const BasicFeatureGrid<Scalar>& tgt, double temperature) {
  LossOutput out;
  if (pairs.empty()) {
    out.empty = true;
    return out;
  }
  if (!(temperature > 0.0)) fail(ErrorCode::kInvalidInput, "temperature must be positive");
  if (src.dim() != tgt.dim()) fail(ErrorCode::kInvalidInput, "descriptor dims differ");

  const auto& g = tgt.geometry();
  const Index n_pairs = static_cast<Index>(pairs.size());
  const Eigen::MatrixXd ft = detail::as_double(tgt);
  Eigen::MatrixXd centers(g.cells(), 2);
  for (Index c = 0; c < g.cells(); ++c) centers.row(c) = g.center(c).transpose();

  std::vector<std::vector<BilinearTap>> taps(n_pairs);
  Eigen::MatrixXd sources(n_pairs, src.dim());
  for (Index i = 0; i < n_pairs; ++i) {
    taps[i] = bilinear_taps(src.geometry(), pairs[i].src);
    sources.row(i) = descriptor_at(src, pairs[i].src).transpose();
  }

  const Eigen::MatrixXd scores = sources * ft.transpose();  // pairs x cells
  Eigen::MatrixXd grad_scores(n_pairs, g.cells());
  const double inv = 1.0 / double(n_pairs);
  for (Index i = 0; i < n_pairs; ++i) {
    const Eigen::VectorXd p = softmax(scores.row(i).transpose(), temperature);
    const Eigen::Vector2d m = centers.transpose() * p;
    const Eigen::Vector2d r = m - pairs[i].tgt;
    out.value += inv * r.squaredNorm();
    // d|m - v|^2 / dS_u = 2 r . (c_u - m) p_u / T
    const Eigen::VectorXd proj = (centers * r).array() - r.dot(m);
    grad_scores.row(i) = (inv * 2.0 / temperature) * (p.array() * proj.array()).transpose();
  }

  out.target = CellGradient{detail::all_cells(g.cells()), grad_scores.transpose() * sources};
  const Eigen::MatrixXd d_sources = grad_scores * ft;  // pairs x dim
  Eigen::MatrixXd src_dense = Eigen::MatrixXd::Zero(src.cells(), src.dim());
  std::vector<Index> touched;
  for (Index i = 0; i < n_pairs; ++i)
    for (const auto& t : taps[i]) {
      src_dense.row(t.cell) += t.weight * d_sources.row(i);
      touched.push_back(t.cell);
    }
  out.source = CellGradient::from_dense(src_dense, std::move(touched));
  return out;
}

/// teacher <- beta * teacher + (1 - beta) * student, elementwise.
template <typename Scalar>
BasicFeatureGrid<Scalar> ema_update(const BasicFeatureGrid<Scalar>& teacher,
                                    const BasicFeatureGrid<Scalar>& student, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) fail(ErrorCode::kInvalidInput, "beta must lie in [0, 1]");
  if (!(teacher.geometry() == student.geometry()) || teacher.dim() != student.dim())
    fail(ErrorCode::kInvalidInput, "teacher/student shapes differ");
  typename BasicFeatureGrid<Scalar>::Matrix blended =
      (beta * teacher.data().template cast<double>() +
       (1.0 - beta) * student.data().template cast<double>())
          .template cast<Scalar>();
  return BasicFeatureGrid<Scalar>(teacher.geometry(), std::move(blended),
                                  teacher.normalized() && student.normalized() &&
                                      (beta == 0.0 || beta == 1.0));
}

}  // namespace anchorflow
