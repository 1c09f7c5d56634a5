#include "anchorflow/anchor.hpp"

namespace anchorflow {

ClusterRegions cluster_regions(const FlowClustering& clustering, const DisplacementField& field) {
  ClusterRegions out;
  const int k = clustering.k();
  out.source_cells.resize(k);
  out.source_points.resize(k);
  out.target_points.resize(k);
  for (Index i = 0; i < clustering.size(); ++i) {
    const int c = clustering.assignment[i];
    const Index cell = clustering.cells[i];
    out.source_cells[c].push_back(cell);
    out.source_points[c].push_back(field.source(cell));
    out.target_points[c].push_back(field.target(cell));
  }
  return out;
}

namespace {

bool near_any(const PixelPoint& p, const std::vector<PixelPoint>& pts, double r) {
  const double r2 = r * r;
  for (const auto& q : pts)
    if ((q - p).squaredNorm() <= r2) return true;
  return false;
}

}  // namespace

AnchorResult anchor_filter(const ClusterRegions& regions, const DisplacementField& field,
                           const CorrespondenceSet& E, double r_anchor_px) {
  if (!(r_anchor_px > 0.0)) fail(ErrorCode::kInvalidInput, "r_anchor must be positive");
  AnchorResult out;
  out.anchored.assign(regions.size(), 0);
  for (int n = 0; n < regions.size(); ++n)
    for (const auto& e : E)
      if (near_any(e.src, regions.source_points[n], r_anchor_px) &&
          near_any(e.tgt, regions.target_points[n], r_anchor_px)) {
        out.anchored[n] = 1;
        break;
      }

  // Emit in ascending cell order regardless of cluster numbering.
  std::vector<std::uint8_t> keep(std::size_t(field.cells()), 0);
  for (int n = 0; n < regions.size(); ++n)
    if (out.anchored[n])
      for (Index c : regions.source_cells[n]) keep[c] = 1;
  for (Index c = 0; c < field.cells(); ++c)
    if (keep[c]) out.pairs.add(field.source(c), field.target(c), Provenance::kPseudo);
  return out;
}

MiningResult mine_from_seeds(const CorrespondenceSet& seed, const CorrespondenceSet& E,
                             const GridGeometry& src_lattice, ImageExtent target_image,
                             const MiningConfig& config) {
  MiningResult r;
  auto& d = r.diagnostics;
  d.seed_pairs = seed.size();

  Densified dense = densify(seed, src_lattice, target_image);
  d.collinear_seeds = dense.collinear;
  d.triangles = dense.warp.triangulation().triangles.size();
  d.skipped_triangles = dense.warp.skipped_triangles();
  r.field = std::move(dense.field);
  d.valid_cells = r.field.valid_count();

  if (d.valid_cells == 0) {
    d.no_anchored_cluster = true;
    return r;
  }
  FlowClustering raw = kmeans_flow(r.field, config.k_init, config.seed);
  d.k_lowered = raw.k_lowered;
  d.clusters_before_merge = raw.k();
  r.clustering = config.use_bic ? bic_merge(raw) : std::move(raw);
  d.clusters_after_merge = r.clustering.k();
  d.dense_pairs = static_cast<std::size_t>(r.clustering.size());

  r.regions = cluster_regions(r.clustering, r.field);
  AnchorResult anchored =
      anchor_filter(r.regions, r.field, E, config.r_anchor_cells * src_lattice.stride);
  r.pseudo = std::move(anchored.pairs);
  r.anchored = std::move(anchored.anchored);
  d.anchored_clusters = 0;
  for (auto a : r.anchored) d.anchored_clusters += a != 0;
  d.anchored_pairs = r.pseudo.size();
  d.no_anchored_cluster = d.anchored_clusters == 0;
  return r;
}

}  // namespace anchorflow
