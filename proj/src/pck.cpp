#include "anchorflow/pck.hpp"

#include <algorithm>

#include "anchorflow/random.hpp"

namespace anchorflow {

bool pck_point(const PixelPoint& pred, const PixelPoint& gt, double bbox_h, double bbox_w,
               double alpha) {
  if (!(bbox_h > 0.0) || !(bbox_w > 0.0) || !(alpha > 0.0))
    fail(ErrorCode::kInvalidInput, "PCK needs positive bbox and alpha");
  return (pred - gt).norm() <= alpha * std::max(bbox_h, bbox_w);
}

double PckRecord::fraction(double alpha) const {
  if (keypoints.empty()) fail(ErrorCode::kInvalidInput, "PCK record without keypoints");
  int hits = 0;
  for (const auto& k : keypoints) hits += pck_point(k.pred, k.gt, bbox_h, bbox_w, alpha);
  return double(hits) / double(keypoints.size());
}

std::vector<double> pck_aggregate(const std::vector<PckRecord>& records,
                                  const std::vector<double>& alphas) {
  if (records.empty()) fail(ErrorCode::kInvalidInput, "no PCK records");
  std::vector<double> out;
  for (double a : alphas) {
    double sum = 0.0;
    for (const auto& r : records) sum += r.fraction(a);
    out.push_back(100.0 * sum / double(records.size()));
  }
  return out;
}

std::vector<double> pck_pooled(const std::vector<PckRecord>& records,
                               const std::vector<double>& alphas) {
  if (records.empty()) fail(ErrorCode::kInvalidInput, "no PCK records");
  std::vector<double> out;
  for (double a : alphas) {
    std::size_t hits = 0, total = 0;
    for (const auto& r : records)
      for (const auto& k : r.keypoints) {
        hits += pck_point(k.pred, k.gt, r.bbox_h, r.bbox_w, a);
        ++total;
      }
    if (total == 0) fail(ErrorCode::kInvalidInput, "no keypoints");
    out.push_back(100.0 * double(hits) / double(total));
  }
  return out;
}

PseudoQuality pseudo_quality(const CorrespondenceSet& pseudo, const DisplacementField& reference,
                             double tol_px, Index valid_cells) {
  PseudoQuality q;
  q.total = pseudo.size();
  const auto& g = reference.geometry;
  for (const auto& c : pseudo) {
    const Index cell = g.linear(pixel_to_cell(g, c.src));
    if ((g.center(cell) - c.src).norm() > 1e-6 * g.stride)
      fail(ErrorCode::kInvalidInput, "pseudo-pair source is not a cell center");
    if (!reference.valid[cell]) continue;
    if ((reference.target(cell) - c.tgt).norm() <= tol_px) ++q.correct;
  }
  q.precision = q.total ? double(q.correct) / double(q.total) : 0.0;
  q.coverage = valid_cells > 0 ? double(q.total) / double(valid_cells) : 0.0;
  return q;
}

CorrespondenceSet perturb_pseudo_labels(const CorrespondenceSet& pseudo, double noise_sigma_px,
                                        std::uint64_t seed) {
  if (!(noise_sigma_px >= 0.0)) fail(ErrorCode::kInvalidInput, "noise sigma must be >= 0");
  if (noise_sigma_px == 0.0) return pseudo;
  Rng rng(seed);
  CorrespondenceSet out;
  for (const auto& c : pseudo) {
    const double dx = noise_sigma_px * rng.normal();
    const double dy = noise_sigma_px * rng.normal();
    out.add(c.src, c.tgt + PixelPoint(dx, dy), c.provenance);
  }
  return out;
}

}  // namespace anchorflow
