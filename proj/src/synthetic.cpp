#include "anchorflow/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "anchorflow/predicates.hpp"
#include "anchorflow/random.hpp"

namespace anchorflow {

namespace {

constexpr double kMeshMargin = 0.15;
constexpr double kEllipseRx = 0.45;
constexpr double kEllipseRy = 0.38;
constexpr int kMaxWarpDraws = 50;
constexpr double kBlendWidth = 0.06;

enum Stream : std::uint64_t {
  kFieldStream = 1,
  kKeypointStream = 2,
  kBackgroundStream = 3,
  kWarpStream = 100,
  kNoiseStream = 1000,
  kClutterStream = 2000,
  kVisibilityStream = 3000,
};

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

void validate_spec(const SceneSpec& s) {
  if (s.rows < 4 || s.cols < 4) fail(ErrorCode::kInvalidInput, "scene lattice must be >= 4x4");
  if (!(s.stride > 0.0)) fail(ErrorCode::kInvalidInput, "stride must be positive");
  if (s.dim < 1) fail(ErrorCode::kInvalidInput, "dim must be >= 1");
  if (s.n_instances < 2) fail(ErrorCode::kInvalidInput, "need at least two instances");
  if (s.n_seen < 3) fail(ErrorCode::kInvalidInput, "need at least 3 seen keypoints");
  if (s.n_unseen < 0) fail(ErrorCode::kInvalidInput, "n_unseen must be >= 0");
  if (!(s.annotation_noise_px >= 0.0))
    fail(ErrorCode::kInvalidInput, "annotation_noise_px must be >= 0");
  if (!(s.seen_visibility > 0.0 && s.seen_visibility <= 1.0))
    fail(ErrorCode::kInvalidInput, "seen_visibility must lie in (0, 1]");
  if (!(s.object_px > 0.0) || !(s.correlation_cells > 0.0))
    fail(ErrorCode::kInvalidInput, "object size and correlation length must be positive");
  if (s.mesh_vertices < 2) fail(ErrorCode::kInvalidInput, "mesh needs >= 2 vertices per side");
  if (s.noise < 0.0 || s.clutter < 0.0 || s.jitter_px < 0.0 || s.translation_px < 0.0 ||
      s.rotation_deg < 0.0 || s.scale_jitter < 0.0 || s.scale_jitter >= 1.0)
    fail(ErrorCode::kInvalidInput, "scene perturbation parameters out of range");
  if (!(s.symmetric_from >= kBlendWidth && s.symmetric_from < 0.5))
    fail(ErrorCode::kInvalidInput, "symmetric_from must lie in [0.06, 0.5)");
}

bool in_object(const PixelPoint& x) {
  const double u = (x.x() - 0.5) / kEllipseRx, v = (x.y() - 0.5) / kEllipseRy;
  return u * u + v * v <= 1.0;
}

// ---------------------------------------------------------------------------
// MeshWarp

MeshWarp::MeshWarp(int n, double margin, std::vector<PixelPoint> vertices)
    : n_(n), margin_(margin), vertices_(std::move(vertices)) {
  if (n < 2 || vertices_.size() != std::size_t(n) * n)
    fail(ErrorCode::kInvalidInput, "mesh vertex count must be n*n with n >= 2");
}

std::vector<PixelPoint> MeshWarp::canonical_vertices() const {
  std::vector<PixelPoint> out;
  const double h = (1.0 + 2.0 * margin_) / (n_ - 1);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) out.emplace_back(-margin_ + j * h, -margin_ + i * h);
  return out;
}

std::array<int, 3> MeshWarp::triangle(int t) const {
  const int sq = t / 2, i = sq / (n_ - 1), j = sq % (n_ - 1);
  const int v00 = i * n_ + j, v01 = v00 + 1, v10 = v00 + n_, v11 = v10 + 1;
  if (t % 2 == 0) return {v00, v01, v11};
  return {v00, v11, v10};
}

std::optional<PixelPoint> MeshWarp::forward(const PixelPoint& x) const {
  const double h = (1.0 + 2.0 * margin_) / (n_ - 1);
  const double ux = (x.x() + margin_) / h, uy = (x.y() + margin_) / h;
  const double lim = n_ - 1;
  if (!(ux >= -1e-12 && uy >= -1e-12 && ux <= lim + 1e-12 && uy <= lim + 1e-12))
    return std::nullopt;
  const int j = std::clamp(int(std::floor(ux)), 0, n_ - 2);
  const int i = std::clamp(int(std::floor(uy)), 0, n_ - 2);
  const double fx = ux - j, fy = uy - i;
  const PixelPoint& v00 = vertices_[i * n_ + j];
  const PixelPoint& v01 = vertices_[i * n_ + j + 1];
  const PixelPoint& v10 = vertices_[(i + 1) * n_ + j];
  const PixelPoint& v11 = vertices_[(i + 1) * n_ + j + 1];
  if (fx >= fy) return PixelPoint((1.0 - fx) * v00 + (fx - fy) * v01 + fy * v11);
  return PixelPoint((1.0 - fy) * v00 + (fy - fx) * v10 + fx * v11);
}

std::optional<PixelPoint> MeshWarp::inverse(const PixelPoint& q) const {
  const auto canon = canonical_vertices();
  const int n_tri = 2 * (n_ - 1) * (n_ - 1);
  for (int t = 0; t < n_tri; ++t) {
    const auto [a, b, c] = triangle(t);
    const PixelPoint& pa = vertices_[a];
    const PixelPoint& pb = vertices_[b];
    const PixelPoint& pc = vertices_[c];
    const double det = geom::signed_area2(pa, pb, pc);
    if (det == 0.0) continue;
    const double wb = geom::signed_area2(pa, q, pc) / det;
    const double wc = geom::signed_area2(pa, pb, q) / det;
    const double wa = 1.0 - wb - wc;
    constexpr double tol = -1e-12;
    if (wa >= tol && wb >= tol && wc >= tol)
      return PixelPoint(wa * canon[a] + wb * canon[b] + wc * canon[c]);
  }
  return std::nullopt;
}

MeshWarp MeshWarp::translated(const PixelPoint& t) const {
  std::vector<PixelPoint> v = vertices_;
  for (auto& p : v) p += t;
  return MeshWarp(n_, margin_, std::move(v));
}

bool MeshWarp::is_fold_free() const {
  const auto canon = canonical_vertices();
  const int n_tri = 2 * (n_ - 1) * (n_ - 1);
  for (int t = 0; t < n_tri; ++t) {
    const auto [a, b, c] = triangle(t);
    const double s0 = geom::signed_area2(canon[a], canon[b], canon[c]);
    const double s1 = geom::signed_area2(vertices_[a], vertices_[b], vertices_[c]);
    if (!(s0 * s1 > 0.0)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// CanonicalField

CanonicalField::CanonicalField(int dim, double length, bool symmetric, double symmetric_from,
                               std::uint64_t seed)
    : dim_(dim), length_(length), symmetric_(symmetric), symmetric_from_(symmetric_from) {
  Rng rng(seed);
  const double spacing = 0.8 * length;
  const double lo = -3.0 * length, hi = 1.0 + 3.0 * length;
  const int n = static_cast<int>(std::ceil((hi - lo) / spacing)) + 1;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      centers_.emplace_back(lo + (j + rng.uniform(-0.4, 0.4)) * spacing,
                            lo + (i + rng.uniform(-0.4, 0.4)) * spacing);
  coeffs_.resize(static_cast<Index>(centers_.size()), dim);
  for (Index r = 0; r < coeffs_.rows(); ++r)
    for (int c = 0; c < dim; ++c) coeffs_(r, c) = rng.normal();

  // Unit per-channel RMS over the unit square.
  double ss = 0.0;
  int count = 0;
  for (int i = 0; i <= 40; ++i)
    for (int j = 0; j <= 40; ++j) {
      ss += raw(PixelPoint(j / 40.0, i / 40.0)).squaredNorm();
      ++count;
    }
  scale_ = 1.0 / std::sqrt(ss / (double(count) * dim));
}

Eigen::VectorXd CanonicalField::raw(const PixelPoint& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
  const double inv = 1.0 / (2.0 * length_ * length_);
  for (std::size_t m = 0; m < centers_.size(); ++m) {
    const double d2 = (x - centers_[m]).squaredNorm();
    if (d2 > 16.0 * length_ * length_) continue;
    out += std::exp(-d2 * inv) * coeffs_.row(Index(m)).transpose();
  }
  return out * scale_;
}

Eigen::VectorXd CanonicalField::operator()(const PixelPoint& x) const {
  const double d = x.x() - 0.5;
  if (!symmetric_ || d <= 0.0) return raw(x);
  const double w = smoothstep((d - symmetric_from_ + kBlendWidth) / kBlendWidth);
  if (w == 0.0) return raw(x);
  if (w == 1.0) return raw(mirror_canonical(x));
  return (1.0 - w) * raw(x) + w * raw(mirror_canonical(x));
}

// ---------------------------------------------------------------------------
// Scene

MeshWarp base_warp(const SceneSpec& spec) {
  MeshWarp unit(spec.mesh_vertices, kMeshMargin,
                std::vector<PixelPoint>(std::size_t(spec.mesh_vertices) * spec.mesh_vertices));
  const PixelPoint center(0.5 * spec.cols * spec.stride, 0.5 * spec.rows * spec.stride);
  std::vector<PixelPoint> v;
  for (const auto& x : unit.canonical_vertices())
    v.push_back(center + spec.object_px * (x - PixelPoint(0.5, 0.5)));
  return MeshWarp(spec.mesh_vertices, kMeshMargin, std::move(v));
}

namespace {

MeshWarp random_warp(const SceneSpec& spec, Rng& rng) {
  const MeshWarp base = base_warp(spec);
  const PixelPoint center(0.5 * spec.cols * spec.stride, 0.5 * spec.rows * spec.stride);
  for (int attempt = 0; attempt < kMaxWarpDraws; ++attempt) {
    const double th = rng.uniform(-spec.rotation_deg, spec.rotation_deg) * std::numbers::pi / 180;
    const double sx = 1.0 + rng.uniform(-spec.scale_jitter, spec.scale_jitter);
    const double sy = 1.0 + rng.uniform(-spec.scale_jitter, spec.scale_jitter);
    const PixelPoint t(rng.uniform(-spec.translation_px, spec.translation_px),
                       rng.uniform(-spec.translation_px, spec.translation_px));
    Eigen::Matrix2d a;
    a << std::cos(th) * sx, -std::sin(th) * sy, std::sin(th) * sx, std::cos(th) * sy;
    std::vector<PixelPoint> v;
    for (const auto& p : base.vertices()) {
      PixelPoint j(rng.normal(), rng.normal());
      j = j.cwiseMax(-3.0).cwiseMin(3.0) * spec.jitter_px;
      v.push_back(center + a * (p - center) + t + j);
    }
    MeshWarp w(spec.mesh_vertices, kMeshMargin, std::move(v));
    if (w.is_fold_free()) return w;
  }
  fail(ErrorCode::kInvalidInput, "could not draw a fold-free warp; lower jitter_px");
}

std::vector<PixelPoint> sample_keypoints(int count, Rng& rng) {
  // Farthest-point subset of random interior points.
  std::vector<PixelPoint> cand;
  while (cand.size() < 1500) {
    const PixelPoint x(rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
    const PixelPoint shrunk = PixelPoint(0.5, 0.5) + (x - PixelPoint(0.5, 0.5)) / 0.8;
    if (in_object(shrunk)) cand.push_back(x);
  }
  std::vector<PixelPoint> out{cand[0]};
  std::vector<double> d(cand.size());
  for (std::size_t i = 0; i < cand.size(); ++i) d[i] = (cand[i] - out[0]).squaredNorm();
  while (static_cast<int>(out.size()) < count) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cand.size(); ++i)
      if (d[i] > d[best]) best = i;
    out.push_back(cand[best]);
    for (std::size_t i = 0; i < cand.size(); ++i)
      d[i] = std::min(d[i], (cand[i] - cand[best]).squaredNorm());
  }
  return out;
}

std::array<double, 4> object_bbox(const MeshWarp& w) {
  std::array<double, 4> b{1e300, 1e300, -1e300, -1e300};
  for (int k = 0; k < 720; ++k) {
    const double t = 2.0 * std::numbers::pi * k / 720.0;
    const PixelPoint x(0.5 + kEllipseRx * std::cos(t), 0.5 + kEllipseRy * std::sin(t));
    const PixelPoint p = *w.forward(x);
    b[0] = std::min(b[0], p.x());
    b[1] = std::min(b[1], p.y());
    b[2] = std::max(b[2], p.x());
    b[3] = std::max(b[3], p.y());
  }
  return b;
}

}  // namespace

SyntheticScene render_scene(const SceneSpec& spec, std::uint64_t seed,
                            const std::vector<MeshWarp>& warps) {
  validate_spec(spec);
  if (static_cast<int>(warps.size()) != spec.n_instances)
    fail(ErrorCode::kInvalidInput, "one warp per instance required");

  SyntheticScene scene;
  scene.spec = spec;
  scene.seed = seed;
  scene.geometry = GridGeometry{spec.rows, spec.cols, spec.stride};
  const double length = spec.correlation_cells * spec.stride / spec.object_px;
  scene.field = CanonicalField(spec.dim, length, spec.symmetric, spec.symmetric_from,
                               derive_seed(seed, kFieldStream));

  Rng kp_rng(derive_seed(seed, kKeypointStream));
  std::vector<PixelPoint> kps = sample_keypoints(spec.n_seen + spec.n_unseen, kp_rng);
  for (std::size_t i = kps.size(); i > 1; --i)
    std::swap(kps[i - 1], kps[kp_rng.below(i)]);
  scene.seen_canonical.assign(kps.begin(), kps.begin() + spec.n_seen);
  scene.unseen_canonical.assign(kps.begin() + spec.n_seen, kps.end());

  Rng bg_rng(derive_seed(seed, kBackgroundStream));
  Eigen::VectorXd background(spec.dim);
  for (int c = 0; c < spec.dim; ++c) background[c] = bg_rng.normal();

  const GridGeometry& g = scene.geometry;
  const double width = g.width_px(), height = g.height_px();
  for (int i = 0; i < spec.n_instances; ++i) {
    Instance inst;
    inst.warp = warps[i];
    const CanonicalField clutter(spec.dim, length, false, spec.symmetric_from,
                                 derive_seed(seed, kClutterStream + i));
    Rng noise(derive_seed(seed, kNoiseStream + i));
    FeatureGridD::Matrix data(g.cells(), spec.dim);
    inst.mask.assign(std::size_t(g.cells()), 0);
    for (Index c = 0; c < g.cells(); ++c) {
      const PixelPoint q = g.center(c);
      const auto x = inst.warp.inverse(q);
      Eigen::VectorXd f;
      if (x && in_object(*x)) {
        f = scene.field(*x);
        inst.mask[c] = 1;
      } else {
        f = background + spec.clutter * clutter(q / spec.object_px);
      }
      for (int d = 0; d < spec.dim; ++d) f[d] += spec.noise * noise.normal();
      data.row(c) = f.transpose();
    }
    inst.features = FeatureGridD(g, std::move(data));
    inst.bbox = object_bbox(inst.warp);
    for (const auto& k : scene.seen_canonical) inst.seen.push_back(*inst.warp.forward(k));
    for (const auto& k : scene.unseen_canonical) inst.unseen.push_back(*inst.warp.forward(k));
    Rng vis(derive_seed(seed, kVisibilityStream + i));
    for (int k = 0; k < spec.n_seen; ++k) {
      inst.annotated.push_back(spec.seen_visibility >= 1.0 || vis.uniform() < spec.seen_visibility);
      PixelPoint off = PixelPoint::Zero();
      if (spec.annotation_noise_px > 0.0)
        off = spec.annotation_noise_px * PixelPoint(vis.normal(), vis.normal());
      inst.labels.push_back(inst.seen[k] + off);
    }
    for (const auto* set : {&inst.seen, &inst.unseen})
      for (const auto& p : *set)
        if (!(p.x() >= 0 && p.y() >= 0 && p.x() <= width && p.y() <= height))
          fail(ErrorCode::kInvalidInput, "keypoint warped outside the image");
    scene.instances.push_back(std::move(inst));
  }
  return scene;
}

SyntheticScene synth_scene(const SceneSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  std::vector<MeshWarp> warps;
  for (int i = 0; i < spec.n_instances; ++i) {
    Rng rng(derive_seed(seed, kWarpStream + i));
    warps.push_back(random_warp(spec, rng));
  }
  return render_scene(spec, seed, warps);
}

DisplacementField ground_truth_flow(const SyntheticScene& scene, int a, int b) {
  if (a < 0 || b < 0 || a >= scene.size() || b >= scene.size())
    fail(ErrorCode::kInvalidInput, "instance index out of range");
  const GridGeometry& g = scene.geometry;
  DisplacementField f(g);
  const auto& ia = scene.instances[a];
  const auto& ib = scene.instances[b];
  for (Index c = 0; c < g.cells(); ++c) {
    if (!ia.mask[c]) continue;
    const auto x = ia.warp.inverse(g.center(c));
    if (!x) continue;
    const auto y = ib.warp.forward(*x);
    if (!y) continue;
    f.displacement.row(c) = (*y - g.center(c)).transpose();
    f.valid[c] = 1;
  }
  return f;
}

}  // namespace anchorflow
