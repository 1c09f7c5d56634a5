#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/SparseCore>

#include "anchorflow/anchor.hpp"
#include "anchorflow/objectives.hpp"
#include "anchorflow/pck.hpp"
#include "anchorflow/synthetic.hpp"

namespace anchorflow {

struct TrainConfig {
  bool use_dense_loss = true;
  /// Evaluated at min(t, total_steps).
  SigmaSchedule schedule{1.0, 3.0, 600};
  /// Weight of the self-distillation term measured in squared cells.
  double lambda_self = 1.0;
  double lr = 0.1;
  int steps = 600;
  double beta = 0.99;
  std::uint64_t seed = 0;
  double temperature = 0.05;
  int window = 15;
  /// Std of the Gaussian offsets added to mined targets, in pixels.
  double pseudo_noise_px = 0.0;
  MiningConfig mining;
  /// Evaluate every this many steps (0: only before and after training).
  int eval_every = 0;
  std::vector<double> alphas{0.025, 0.05, 0.10};
  /// Parameter grid stride in lattice cells; descriptors are its bilinear
  /// upsampling (1: one parameter row per cell).
  int param_stride = 1;
  /// Worker threads for the mutual-NN pass; results do not depend on it.
  int threads = 1;
};

/// Student and teacher parameter grids, one row-major matrix per instance.
struct TrainState {
  std::vector<FeatureGridD::Matrix> student;
  std::vector<FeatureGridD::Matrix> teacher;
  int step = 0;
  SigmaSchedule schedule;
  std::uint64_t seed = 0;
  /// Lattice cells x parameter cells interpolation weights.
  Eigen::SparseMatrix<double, Eigen::RowMajor> upsample;

  /// Descriptor field of a parameter grid.
  FeatureGridD::Matrix features(const FeatureGridD::Matrix& params) const {
    return upsample * params;
  }
};

/// Normalized rendered features as student; the teacher starts as a copy.
TrainState init_state(const SyntheticScene& scene, const TrainConfig& config);

struct StepMetrics {
  int step = 0;
  int src = 0;
  int tgt = 0;
  double sigma = 0.0;
  double loss_sup = 0.0;
  double loss_self = 0.0;
  std::size_t pseudo_pairs = 0;
};

/// PCK in percent per alpha. `seen` covers every seen keypoint of every
/// pair; `heldout` only seen keypoints not annotated on both instances (empty
/// when every keypoint is annotated); `unseen` the unseen split.
struct PckTable {
  std::vector<double> alphas;
  std::vector<double> seen;
  std::vector<double> heldout;
  std::vector<double> unseen;
};

struct EvalPoint {
  int step = 0;
  PckTable pck;
};

struct TrainResult {
  TrainState state;
  std::vector<StepMetrics> trace;
  std::vector<EvalPoint> evals;
};

/// Predicts every keypoint of every ordered instance pair with the windowed
/// soft-argmax of the student fields and scores it against the target
/// instance's object box.
PckTable eval_unseen(const TrainState& state, const SyntheticScene& scene,
                     const std::vector<double>& alphas, int window = 15,
                     double temperature = 0.05);

/// Seen keypoints annotated on both instances, as annotated pairs.
CorrespondenceSet seen_pairs(const SyntheticScene& scene, int a, int b);

/// Object mask of an instance as a region.
PixelRegion instance_region(const SyntheticScene& scene, int i);

/// One-pair-per-step gradient descent on the student fields with an EMA
/// teacher. Throws kNumericalGuard naming the step when the loss diverges.
TrainResult train_toy(const SyntheticScene& scene, const TrainConfig& config);

}  // namespace anchorflow
