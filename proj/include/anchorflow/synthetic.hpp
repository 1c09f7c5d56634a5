#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "anchorflow/densify.hpp"
#include "anchorflow/grid.hpp"

namespace anchorflow {

/// Generation parameters of a synthetic multi-instance scene. Lengths are in
/// pixels unless noted; the canonical object lives in the unit square.
struct SceneSpec {
  int rows = 24;
  int cols = 24;
  double stride = 4.0;
  int dim = 16;
  int n_instances = 8;

  /// Object extent in pixels (canonical unit length).
  double object_px = 64.0;
  /// Correlation length of the canonical field, in cells of the lattice.
  double correlation_cells = 3.0;
  /// Per-instance global pose perturbation.
  double rotation_deg = 12.0;
  double scale_jitter = 0.08;
  double translation_px = 4.0;
  /// Std of the control-mesh vertex jitter (warp complexity).
  double jitter_px = 1.5;
  int mesh_vertices = 5;

  /// Additive descriptor noise, relative to the unit per-channel RMS of the
  /// canonical field.
  double noise = 0.35;
  /// Amplitude of the per-instance background field.
  double clutter = 1.0;
  /// Right outer part of the object mirrors the left outer part.
  bool symmetric = true;
  /// Mirrored parts are those with |x - 0.5| >= symmetric_from.
  double symmetric_from = 0.3;

  int n_seen = 10;
  int n_unseen = 10;
  /// Probability that a seen keypoint is annotated on a given instance.
  double seen_visibility = 1.0;
  /// Std of the offset between annotated and true seen keypoints, in pixels.
  double annotation_noise_px = 0.0;
};

void validate_spec(const SceneSpec& spec);

/// Piecewise-affine map from canonical coordinates to instance pixels, given
/// by a regular control mesh and the pixel position of each vertex.
class MeshWarp {
 public:
  MeshWarp() = default;
  /// `vertices` holds n x n pixel positions in row-major mesh order; the mesh
  /// spans [-margin, 1 + margin]^2 in canonical units.
  MeshWarp(int n, double margin, std::vector<PixelPoint> vertices);

  int n() const { return n_; }
  double margin() const { return margin_; }
  const std::vector<PixelPoint>& vertices() const { return vertices_; }
  std::vector<PixelPoint> canonical_vertices() const;

  /// Canonical -> pixel; nullopt outside the mesh.
  std::optional<PixelPoint> forward(const PixelPoint& x) const;
  /// Pixel -> canonical; nullopt outside the warped mesh.
  std::optional<PixelPoint> inverse(const PixelPoint& q) const;

  /// The same warp shifted by t pixels.
  MeshWarp translated(const PixelPoint& t) const;
  /// True when no warped triangle is folded or degenerate.
  bool is_fold_free() const;

 private:
  std::array<int, 3> triangle(int t) const;
  int n_ = 0;
  double margin_ = 0.0;
  std::vector<PixelPoint> vertices_;
};

/// Smooth random descriptor field over canonical coordinates: a sum of
/// isotropic Gaussian bumps with random coefficient vectors.
class CanonicalField {
 public:
  CanonicalField() = default;
  CanonicalField(int dim, double length, bool symmetric, double symmetric_from,
                 std::uint64_t seed);

  int dim() const { return dim_; }
  bool symmetric() const { return symmetric_; }
  Eigen::VectorXd operator()(const PixelPoint& x) const;

 private:
  Eigen::VectorXd raw(const PixelPoint& x) const;
  int dim_ = 0;
  double length_ = 1.0;
  bool symmetric_ = false;
  double symmetric_from_ = 0.3;
  double scale_ = 1.0;
  std::vector<PixelPoint> centers_;
  Eigen::MatrixXd coeffs_;  // bumps x dim
};

/// Canonical object support: an axis-aligned ellipse in the unit square.
bool in_object(const PixelPoint& x);

struct Instance {
  MeshWarp warp;
  /// Rendered descriptors (not normalized).
  FeatureGridD features;
  std::vector<std::uint8_t> mask;
  /// Object bounding box in pixels: min x, min y, max x, max y.
  std::array<double, 4> bbox{};
  std::vector<PixelPoint> seen;
  std::vector<PixelPoint> unseen;
  /// Per seen keypoint: annotated on this instance (usable for training).
  std::vector<std::uint8_t> annotated;
  /// Annotated (possibly noisy) positions of the seen keypoints.
  std::vector<PixelPoint> labels;

  double bbox_w() const { return bbox[2] - bbox[0]; }
  double bbox_h() const { return bbox[3] - bbox[1]; }
};

struct SyntheticScene {
  SceneSpec spec;
  std::uint64_t seed = 0;
  GridGeometry geometry;
  CanonicalField field;
  std::vector<PixelPoint> seen_canonical;
  std::vector<PixelPoint> unseen_canonical;
  std::vector<Instance> instances;

  int size() const { return static_cast<int>(instances.size()); }
};

/// Deterministic scene from (spec, seed). Throws kInvalidInput for malformed
/// specs, including n_seen < 3.
SyntheticScene synth_scene(const SceneSpec& spec, std::uint64_t seed);

/// Renders a scene from explicitly given warps instead of random ones.
SyntheticScene render_scene(const SceneSpec& spec, std::uint64_t seed,
                            const std::vector<MeshWarp>& warps);

/// Pose of an unperturbed instance: the canonical square scaled to object_px
/// and centered in the image.
MeshWarp base_warp(const SceneSpec& spec);

/// Ground-truth flow from instance a to instance b on a's lattice,
/// warp_b(warp_a^-1(u)); valid on a's object cells.
DisplacementField ground_truth_flow(const SyntheticScene& scene, int a, int b);

/// Mirror of a canonical point about the vertical symmetry axis.
inline PixelPoint mirror_canonical(const PixelPoint& x) { return {1.0 - x.x(), x.y()}; }

}  // namespace anchorflow
