#pragma once

// Finite-difference checks of the analytic loss gradients on random small
// instances. Each function draws one instance and returns the worst relative
// error over every gradient entry.

#include "anchorflow/objectives.hpp"
#include "oracles.hpp"

namespace gradcheck {

using namespace anchorflow;

struct Instance {
  FeatureGridD src;
  FeatureGridD tgt;
  double temperature = 0.1;
};

inline Instance random_instance(Rng& rng) {
  const int rows = 2 + int(rng.below(5)), cols = 2 + int(rng.below(5));
  const int dim = 2 + int(rng.below(5));
  const double stride = rng.uniform(1.0, 8.0);
  Instance in{oracle::random_grid<FeatureGridD>(rng, rows, cols, dim, stride),
              oracle::random_grid<FeatureGridD>(rng, rows, cols, dim, stride),
              rng.uniform(0.2, 1.0)};
  return in;
}

inline PixelPoint random_point(Rng& rng, const GridGeometry& g) {
  return {rng.uniform(0, g.width_px()), rng.uniform(0, g.height_px())};
}

inline Eigen::MatrixXd dense(const CellGradient& g, Index cells, Index dim) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(cells, dim);
  g.add_to(d);
  return d;
}

template <typename Loss>
double check_features(const Instance& in, Loss&& loss) {
  const GridGeometry gs = in.src.geometry(), gt = in.tgt.geometry();
  const Eigen::MatrixXd s0 = in.src.data(), t0 = in.tgt.data();
  const LossOutput out = loss(in.src, in.tgt);
  auto wrt_src = [&](const Eigen::MatrixXd& s) {
    return loss(FeatureGridD(gs, s), in.tgt).value;
  };
  auto wrt_tgt = [&](const Eigen::MatrixXd& t) {
    return loss(in.src, FeatureGridD(gt, t)).value;
  };
  const double es = oracle::max_relative_error(dense(out.source, s0.rows(), s0.cols()),
                                               oracle::numeric_gradient(wrt_src, s0));
  const double et = oracle::max_relative_error(dense(out.target, t0.rows(), t0.cols()),
                                               oracle::numeric_gradient(wrt_tgt, t0));
  return std::max(es, et);
}

// Cross-entropy against a Gaussian target: gradient with respect to the
// scores and, through the bilinear similarity, to both feature grids.
inline double ce_error(Rng& rng) {
  const Instance in = random_instance(rng);
  const PixelPoint p = random_point(rng, in.src.geometry());
  const TargetHeatmap target =
      gaussian_target(random_point(rng, in.tgt.geometry()), rng.uniform(0.5, 3.0), in.tgt.geometry());

  SimilarityMap sim{in.tgt.geometry(), Eigen::VectorXd::Random(in.tgt.cells()), p};
  const ScoreLoss l = ce_loss(sim, target, in.temperature);
  auto f = [&](const Eigen::MatrixXd& s) {
    SimilarityMap m = sim;
    m.scores = s;
    return ce_loss(m, target, in.temperature).value;
  };
  const double e_scores = oracle::max_relative_error(l.grad_scores, oracle::numeric_gradient(f, sim.scores));
  const double e_feat = check_features(in, [&](const FeatureGridD& a, const FeatureGridD& b) {
    return supervised_loss(a, b, p, target, in.temperature);
  });
  return std::max(e_scores, e_feat);
}

inline double l2_error(Rng& rng) {
  const Instance in = random_instance(rng);
  CorrespondenceSet pairs;
  const int n = 1 + int(rng.below(5));
  while (int(pairs.size()) < n)
    pairs.add(random_point(rng, in.src.geometry()), random_point(rng, in.tgt.geometry()),
              Provenance::kPseudo);
  return check_features(in, [&](const FeatureGridD& a, const FeatureGridD& b) {
    return l2_self_loss(pairs, a, b, in.temperature);
  });
}

}  // namespace gradcheck
