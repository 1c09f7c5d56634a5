#pragma once

#include <cstdint>
#include <vector>

#include "anchorflow/correspondence.hpp"
#include "anchorflow/densify.hpp"

namespace anchorflow {

/// Correct iff |pred - gt| <= alpha * max(h, w). The boundary counts as correct.
bool pck_point(const PixelPoint& pred, const PixelPoint& gt, double bbox_h, double bbox_w,
               double alpha);

struct PckKeypoint {
  int id = 0;
  PixelPoint pred = PixelPoint::Zero();
  PixelPoint gt = PixelPoint::Zero();
};

/// Keypoints of one evaluated image together with the object box size.
struct PckRecord {
  std::vector<PckKeypoint> keypoints;
  double bbox_h = 0.0;
  double bbox_w = 0.0;

  /// Fraction of keypoints correct at alpha.
  double fraction(double alpha) const;
};

/// Per-image PCK averaged over images, in percent, one value per alpha.
std::vector<double> pck_aggregate(const std::vector<PckRecord>& records,
                                  const std::vector<double>& alphas);

/// Same records pooled over all keypoints (reference only).
std::vector<double> pck_pooled(const std::vector<PckRecord>& records,
                               const std::vector<double>& alphas);

struct PseudoQuality {
  double precision = 0.0;
  double coverage = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

/// Scores pseudo-pairs against a reference field on the same lattice. Each
/// pair's source must sit on a cell center; pairs on cells without a valid
/// reference target count as wrong. Coverage is relative to `valid_cells`.
PseudoQuality pseudo_quality(const CorrespondenceSet& pseudo, const DisplacementField& reference,
                             double tol_px, Index valid_cells);

/// Adds iid N(0, sigma^2) offsets to the target coordinates.
CorrespondenceSet perturb_pseudo_labels(const CorrespondenceSet& pseudo, double noise_sigma_px,
                                        std::uint64_t seed);

}  // namespace anchorflow
