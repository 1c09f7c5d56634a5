#include "anchorflow/toy_lab.hpp"

#include <cmath>
#include <string>

#include "anchorflow/random.hpp"

namespace anchorflow {

namespace {

enum Stream : std::uint64_t {
  kPairStream = 0x70000000,
  kMiningStream = 0x71000000,
  kNoiseStream = 0x72000000,
};

void normalize_rows(FeatureGridD::Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 0.0) m.row(r) /= n;
  }
}

FeatureGridD grid_of(const SyntheticScene& scene, const TrainState& st,
                     const FeatureGridD::Matrix& params) {
  return FeatureGridD(scene.geometry, st.features(params));
}

PckRecord predict(const FeatureGridD& src, const FeatureGridD& tgt,
                  const std::vector<PixelPoint>& from, const std::vector<PixelPoint>& to,
                  const std::vector<int>& ids, const Instance& target, int window,
                  double temperature) {
  PckRecord rec;
  rec.bbox_h = target.bbox_h();
  rec.bbox_w = target.bbox_w();
  for (int k : ids) {
    const Eigen::VectorXd s = descriptor_at(src, from[k]);
    const SimilarityMap sim = similarity_map(s, tgt, from[k]);
    rec.keypoints.push_back({k, windowed_soft_argmax(sim, window, temperature), to[k]});
  }
  return rec;
}

std::vector<int> common_annotations(const Instance& a, const Instance& b) {
  std::vector<int> ids;
  for (std::size_t k = 0; k < a.seen.size(); ++k)
    if (a.annotated[k] && b.annotated[k]) ids.push_back(int(k));
  return ids;
}

}  // namespace

TrainState init_state(const SyntheticScene& scene, const TrainConfig& config) {
  if (config.param_stride < 1) fail(ErrorCode::kInvalidInput, "param_stride must be >= 1");
  TrainState s;
  const GridGeometry& g = scene.geometry;
  const int ps = config.param_stride;
  const GridGeometry pg{(g.rows + ps - 1) / ps, (g.cols + ps - 1) / ps, g.stride * ps};
  std::vector<Eigen::Triplet<double>> w;
  for (Index c = 0; c < g.cells(); ++c)
    for (const auto& t : bilinear_taps(pg, g.center(c).cwiseMin(pg.width_px()).cwiseMin(pg.height_px())))
      w.emplace_back(c, t.cell, t.weight);
  s.upsample.resize(g.cells(), pg.cells());
  s.upsample.setFromTriplets(w.begin(), w.end());
  for (const auto& inst : scene.instances) {
    FeatureGridD::Matrix m(pg.cells(), inst.features.dim());
    for (Index c = 0; c < pg.cells(); ++c)
      m.row(c) = descriptor_at(inst.features, pg.center(c).cwiseMin(g.width_px() - 1e-9)).transpose();
    normalize_rows(m);
    s.student.push_back(m);
    s.teacher.push_back(std::move(m));
  }
  s.schedule = config.schedule;
  s.seed = config.seed;
  return s;
}

CorrespondenceSet seen_pairs(const SyntheticScene& scene, int a, int b) {
  CorrespondenceSet e;
  const auto& ia = scene.instances[a];
  const auto& ib = scene.instances[b];
  for (int k : common_annotations(ia, ib)) e.add(ia.labels[k], ib.labels[k], Provenance::kAnnotated);
  return e;
}

PixelRegion instance_region(const SyntheticScene& scene, int i) {
  return PixelRegion::mask(scene.spec.rows, scene.spec.cols, scene.instances[i].mask);
}

PckTable eval_unseen(const TrainState& state, const SyntheticScene& scene,
                     const std::vector<double>& alphas, int window, double temperature) {
  std::vector<PckRecord> seen, heldout, unseen;
  for (int a = 0; a < scene.size(); ++a) {
    const FeatureGridD src = grid_of(scene, state, state.student[a]);
    for (int b = 0; b < scene.size(); ++b) {
      if (a == b) continue;
      const FeatureGridD tgt = grid_of(scene, state, state.student[b]);
      const auto& ia = scene.instances[a];
      const auto& ib = scene.instances[b];
      std::vector<int> all(ia.seen.size()), held, uns(ia.unseen.size());
      for (std::size_t k = 0; k < all.size(); ++k) {
        all[k] = int(k);
        if (!(ia.annotated[k] && ib.annotated[k])) held.push_back(int(k));
      }
      for (std::size_t k = 0; k < uns.size(); ++k) uns[k] = int(k);
      seen.push_back(predict(src, tgt, ia.seen, ib.seen, all, ib, window, temperature));
      if (!held.empty())
        heldout.push_back(predict(src, tgt, ia.seen, ib.seen, held, ib, window, temperature));
      if (!uns.empty())
        unseen.push_back(predict(src, tgt, ia.unseen, ib.unseen, uns, ib, window, temperature));
    }
  }
  PckTable t;
  t.alphas = alphas;
  t.seen = pck_aggregate(seen, alphas);
  if (!heldout.empty()) t.heldout = pck_aggregate(heldout, alphas);
  if (!unseen.empty()) t.unseen = pck_aggregate(unseen, alphas);
  return t;
}

TrainResult train_toy(const SyntheticScene& scene, const TrainConfig& config) {
  if (config.steps < 0) fail(ErrorCode::kInvalidInput, "steps must be >= 0");
  if (!(config.lr > 0.0 && std::isfinite(config.lr)))
    fail(ErrorCode::kInvalidInput, "lr must be positive and finite");
  if (!(config.lambda_self >= 0.0)) fail(ErrorCode::kInvalidInput, "lambda_self must be >= 0");
  if (!(config.pseudo_noise_px >= 0.0))
    fail(ErrorCode::kInvalidInput, "pseudo_noise_px must be >= 0");
  if (config.eval_every < 0) fail(ErrorCode::kInvalidInput, "eval_every must be >= 0");
  sigma_at(config.schedule, 0);  // validates the schedule
  if (scene.size() < 2) fail(ErrorCode::kInvalidInput, "scene needs two instances");

  TrainResult out;
  out.state = init_state(scene, config);
  TrainState& st = out.state;
  const int n = scene.size();
  const double stride = scene.geometry.stride;
  const double self_weight = config.lambda_self / (stride * stride);

  std::vector<PixelRegion> regions;
  for (int i = 0; i < n; ++i) regions.push_back(instance_region(scene, i));

  auto evaluate = [&](int step) {
    out.evals.push_back(
        {step, eval_unseen(st, scene, config.alphas, config.window, config.temperature)});
  };
  evaluate(0);

  for (int t = 0; t < config.steps; ++t) {
    Rng pick(derive_seed(config.seed, kPairStream + std::uint64_t(t)));
    const int a = static_cast<int>(pick.below(n));
    int b = static_cast<int>(pick.below(n - 1));
    if (b >= a) ++b;

    StepMetrics m;
    m.step = t;
    m.src = a;
    m.tgt = b;
    m.sigma = sigma_at(config.schedule, std::min(t, config.schedule.total_steps));

    const FeatureGridD sa = grid_of(scene, st, st.student[a]);
    const FeatureGridD sb = grid_of(scene, st, st.student[b]);
    FeatureGridD::Matrix ga = FeatureGridD::Matrix::Zero(sa.cells(), sa.dim());
    FeatureGridD::Matrix gb = FeatureGridD::Matrix::Zero(sb.cells(), sb.dim());

    const auto& ia = scene.instances[a];
    const auto& ib = scene.instances[b];
    const std::vector<int> ids = common_annotations(ia, ib);
    const double inv_k = ids.empty() ? 0.0 : 1.0 / double(ids.size());
    for (int k : ids) {
      const TargetHeatmap target = gaussian_target(ib.labels[k], m.sigma, scene.geometry);
      const LossOutput l = supervised_loss(sa, sb, ia.labels[k], target, config.temperature);
      m.loss_sup += inv_k * l.value;
      l.source.add_to(ga, inv_k);
      l.target.add_to(gb, inv_k);
    }

    if (config.use_dense_loss && config.lambda_self > 0.0) {
      MiningConfig mc = config.mining;
      mc.seed = derive_seed(config.seed, kMiningStream + std::uint64_t(t));
      mc.mnn.threads = config.threads;
      const MiningResult mined =
          mine_pseudo_labels(grid_of(scene, st, st.teacher[a]), grid_of(scene, st, st.teacher[b]),
                             seen_pairs(scene, a, b), regions[a], regions[b], mc);
      const CorrespondenceSet pseudo = perturb_pseudo_labels(
          mined.pseudo, config.pseudo_noise_px,
          derive_seed(config.seed, kNoiseStream + std::uint64_t(t)));
      m.pseudo_pairs = pseudo.size();
      if (!pseudo.empty()) {
        const LossOutput l = l2_self_loss(pseudo, sa, sb, config.temperature);
        m.loss_self = l.value;
        l.source.add_to(ga, self_weight);
        l.target.add_to(gb, self_weight);
      }
    }

    const double total = m.loss_sup + self_weight * m.loss_self;
    if (!std::isfinite(total) || !ga.allFinite() || !gb.allFinite())
      throw Error(ErrorCode::kNumericalGuard,
                  "training diverged at step " + std::to_string(t));

    st.student[a] -= config.lr * (st.upsample.transpose() * ga);
    st.student[b] -= config.lr * (st.upsample.transpose() * gb);
    normalize_rows(st.student[a]);
    normalize_rows(st.student[b]);
    for (int i = 0; i < n; ++i)
      st.teacher[i] = config.beta * st.teacher[i] + (1.0 - config.beta) * st.student[i];
    st.step = t + 1;
    out.trace.push_back(m);

    if (config.eval_every > 0 && st.step % config.eval_every == 0 && st.step != config.steps)
      evaluate(st.step);
  }
  if (config.steps > 0) evaluate(config.steps);
  return out;
}

}  // namespace anchorflow
