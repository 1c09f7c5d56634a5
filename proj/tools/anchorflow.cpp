#include <charconv>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "anchorflow/io.hpp"
#include "anchorflow/objectives.hpp"
#include "anchorflow/pck.hpp"
#include "anchorflow/synthetic.hpp"
#include "anchorflow/toy_lab.hpp"

namespace af = anchorflow;
namespace io = anchorflow::io;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kInputFormat = 3, kNumerical = 4, kIoFailure = 5 };

int exit_code(af::ErrorCode code) {
  switch (code) {
    case af::ErrorCode::kInvalidInput: return kUsage;
    case af::ErrorCode::kNumericalGuard: return kNumerical;
    case af::ErrorCode::kIo: return kIoFailure;
    default: return kInputFormat;
  }
}

// Shortest representation that reads back to the same double.
std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::vector<double> parse_alphas(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double a = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), a);
    if (ec != std::errc() || p != item.data() + item.size() || !(a > 0.0) || !std::isfinite(a))
      af::fail(af::ErrorCode::kInvalidInput, "bad alpha '" + item + "'");
    out.push_back(a);
  }
  if (out.empty()) af::fail(af::ErrorCode::kInvalidInput, "--alphas is empty");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) af::fail(af::ErrorCode::kIo, "cannot create " + dir.string());
}

std::string instance_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "instance_%03d", i);
  return buf;
}

// ---------------------------------------------------------------------------
// mine

struct MineArgs {
  std::string src, tgt, ann, out, region = "bbox";
  int kinit = 15;
  double r_anchor = 1.5;
  double margin = 0.1;
  std::uint64_t seed = 0;
  bool raw = false;
  bool no_bic = false;
};

af::FeatureGrid prepared(const af::FeatureGrid& g, bool raw) {
  if (raw || g.normalized()) return g;
  return af::normalize_descriptors(g).grid;
}

void run_mine(const MineArgs& a, int threads) {
  const io::FeatureFile src = io::read_feature_file(a.src);
  const io::FeatureFile tgt = io::read_feature_file(a.tgt);
  if (src.grid.dim() != tgt.grid.dim())
    af::fail(af::ErrorCode::kFormat, "source and target descriptor dims differ");
  io::CorrespondenceFile ann = io::correspondence_from_json(io::read_json(a.ann));
  const af::CorrespondenceSet anchors = ann.anchors();
  const af::GridGeometry& gs = src.grid.geometry();
  const af::GridGeometry& gt = tgt.grid.geometry();
  for (const auto& c : anchors)
    if (!gs.in_image(c.src) || !gt.in_image(c.tgt))
      af::fail(af::ErrorCode::kFormat, "annotated pair outside the feature grid extent");

  af::PixelRegion rs, rt;
  if (a.region == "mask") {
    if (!src.has_mask() || !tgt.has_mask())
      af::fail(af::ErrorCode::kMaskMismatch, "--region mask needs a mask block in both files");
    rs = af::PixelRegion::mask(gs.rows, gs.cols, src.mask);
    rt = af::PixelRegion::mask(gt.rows, gt.cols, tgt.mask);
  } else if (a.region == "bbox") {
    if (ann.bbox_src && ann.bbox_tgt) {
      const auto& s = *ann.bbox_src;
      const auto& t = *ann.bbox_tgt;
      rs = af::PixelRegion::box(s[0], s[1], s[2], s[3]);
      rt = af::PixelRegion::box(t[0], t[1], t[2], t[3]);
    } else {
      std::tie(rs, rt) = af::bbox_from_keypoints(
          anchors, a.margin, af::ImageExtent{gs.width_px(), gs.height_px()},
          af::ImageExtent{gt.width_px(), gt.height_px()});
    }
  }

  af::MiningConfig mc;
  mc.k_init = a.kinit;
  mc.r_anchor_cells = a.r_anchor;
  mc.seed = a.seed;
  mc.use_bic = !a.no_bic;
  mc.mnn.threads = threads;
  const af::MiningResult r = af::mine_pseudo_labels(prepared(src.grid, a.raw),
                                                    prepared(tgt.grid, a.raw), anchors, rs, rt, mc);

  io::CorrespondenceFile out;
  out.src = ann.src.empty() ? fs::path(a.src).filename().string() : ann.src;
  out.tgt = ann.tgt.empty() ? fs::path(a.tgt).filename().string() : ann.tgt;
  out.src_hw = ann.src_hw ? ann.src_hw
                          : io::ImageSize{int(std::ceil(gs.height_px())), int(std::ceil(gs.width_px()))};
  out.tgt_hw = ann.tgt_hw ? ann.tgt_hw
                          : io::ImageSize{int(std::ceil(gt.height_px())), int(std::ceil(gt.width_px()))};
  out.bbox_src = ann.bbox_src;
  out.bbox_tgt = ann.bbox_tgt;
  for (const auto& c : r.pseudo) {
    if (out.src_hw && (c.tgt.x() > out.tgt_hw->width || c.tgt.y() > out.tgt_hw->height)) continue;
    out.pairs.add(c);
  }
  json diag = io::diagnostics_to_json(r.diagnostics);
  diag["config"] = {{"region", a.region},   {"kinit", a.kinit}, {"r_anchor_cells", a.r_anchor},
                    {"seed", a.seed},       {"bic", !a.no_bic}, {"normalized", !a.raw}};
  out.diagnostics = diag;
  io::write_json(a.out, io::correspondence_to_json(out));
  std::cout << "mined " << out.pairs.size() << " pairs (" << r.diagnostics.anchored_clusters << "/"
            << r.diagnostics.clusters_after_merge << " clusters anchored)\n";
}

// ---------------------------------------------------------------------------
// schedule

struct ScheduleArgs {
  double sigma_max = 3.0;
  double sigma_min = 1.0;
  int steps = 1000;
  std::string dump = "csv";
  std::string out;
};

void run_schedule(const ScheduleArgs& a) {
  const af::SigmaSchedule s{a.sigma_min, a.sigma_max, a.steps};
  std::string text = "step,sigma\n";
  for (int t = 0; t <= a.steps; ++t) text += std::to_string(t) + "," + num(af::sigma_at(s, t)) + "\n";
  if (a.out.empty())
    std::cout << text;
  else
    io::write_atomic(a.out, text);
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string spec, out;
  std::uint64_t seed = 0;
};

json keypoint_json(int id, const af::PixelPoint& p, const char* split) {
  return {{"id", id}, {"x", p.x()}, {"y", p.y()}, {"split", split}};
}

void run_synth(const SynthArgs& a) {
  const af::SceneSpec spec = a.spec.empty() ? af::SceneSpec{} : io::spec_from_json(io::read_json(a.spec));
  const af::SyntheticScene scene = af::synth_scene(spec, a.seed);
  const fs::path dir(a.out);
  ensure_dir(dir);
  ensure_dir(dir / "pairs");
  io::write_json(dir / "scene.json", {{"spec", io::spec_to_json(spec)},
                                      {"seed", a.seed},
                                      {"instances", scene.size()}});

  const int n_seen = spec.n_seen;
  json images = json::array();
  for (int i = 0; i < scene.size(); ++i) {
    const auto& in = scene.instances[i];
    io::FeatureFile f{in.features.cast<float>(), in.mask};
    io::write_feature_file(f, dir / (instance_name(i) + ".mrcf"));
    json kps = json::array();
    for (int k = 0; k < int(in.seen.size()); ++k) kps.push_back(keypoint_json(k, in.seen[k], "seen"));
    for (int k = 0; k < int(in.unseen.size()); ++k)
      kps.push_back(keypoint_json(n_seen + k, in.unseen[k], "unseen"));
    images.push_back({{"id", instance_name(i)}, {"bbox", in.bbox}, {"keypoints", kps}});
  }
  io::write_json(dir / "keypoints.json", {{"images", images}});

  const auto& g = scene.geometry;
  const io::ImageSize hw{int(std::ceil(g.height_px())), int(std::ceil(g.width_px()))};
  for (int s = 0; s < scene.size(); ++s)
    for (int t = 0; t < scene.size(); ++t) {
      if (s == t) continue;
      const auto& is = scene.instances[s];
      const auto& it = scene.instances[t];
      io::CorrespondenceFile pf;
      pf.src = instance_name(s);
      pf.tgt = instance_name(t);
      pf.src_hw = hw;
      pf.tgt_hw = hw;
      pf.bbox_src = is.bbox;
      pf.bbox_tgt = it.bbox;
      for (int k = 0; k < n_seen; ++k) {
        if (!(is.annotated[k] && it.annotated[k])) continue;
        if (pf.pairs.add(is.labels[k], it.labels[k], af::Provenance::kAnnotated))
          pf.seen.push_back(int(pf.pairs.size()) - 1);
      }
      for (std::size_t k = 0; k < is.unseen.size(); ++k)
        if (pf.pairs.add(is.unseen[k], it.unseen[k], af::Provenance::kAnnotated))
          pf.unseen.push_back(int(pf.pairs.size()) - 1);
      io::write_json(dir / "pairs" / (std::to_string(s) + "-" + std::to_string(t) + ".json"),
                     io::correspondence_to_json(pf));
    }
  std::cout << "wrote " << scene.size() << " instances to " << dir.string() << "\n";
}

// ---------------------------------------------------------------------------
// train-toy

struct TrainArgs {
  std::string scene, out, dense = "on", alphas = "0.025,0.05,0.10";
  double lambda_self = 1.0;
  int steps = 600;
  std::uint64_t seed = 0;
  double sigma_max = 3.0;
  double sigma_min = 1.0;
  double lr = 0.1;
  double beta = 0.99;
  double pseudo_noise = 0.0;
  int eval_every = 0;
  bool no_students = false;
};

std::string pck_header(const std::vector<double>& alphas) {
  std::string s;
  for (double a : alphas) s += ",pck@" + num(a);
  return s;
}

json pck_json(const af::PckTable& t) {
  auto one = [&](const std::vector<double>& v) {
    json j = json::object();
    for (std::size_t i = 0; i < v.size(); ++i) j[num(t.alphas[i])] = v[i];
    return j;
  };
  json j = {{"seen", one(t.seen)}, {"unseen", one(t.unseen)}};
  if (!t.heldout.empty()) j["heldout"] = one(t.heldout);
  return j;
}

void run_train(const TrainArgs& a, int threads) {
  const fs::path scene_dir(a.scene);
  const json sj = io::read_json(scene_dir / "scene.json");
  if (!sj.is_object() || !sj.contains("spec") || !sj.contains("seed") ||
      !sj.at("seed").is_number_unsigned())
    af::fail(af::ErrorCode::kFormat, "scene.json needs \"spec\" and an unsigned \"seed\"");
  const af::SceneSpec spec = io::spec_from_json(sj.at("spec"));
  const af::SyntheticScene scene = af::synth_scene(spec, sj.at("seed").get<std::uint64_t>());

  af::TrainConfig cfg;
  cfg.use_dense_loss = a.dense == "on";
  cfg.lambda_self = a.lambda_self;
  cfg.steps = a.steps;
  cfg.seed = a.seed;
  cfg.schedule = af::SigmaSchedule{a.sigma_min, a.sigma_max, std::max(a.steps, 1)};
  cfg.lr = a.lr;
  cfg.beta = a.beta;
  cfg.pseudo_noise_px = a.pseudo_noise;
  cfg.eval_every = a.eval_every;
  cfg.alphas = parse_alphas(a.alphas);
  cfg.threads = threads;
  const af::TrainResult r = af::train_toy(scene, cfg);

  const fs::path dir(a.out);
  ensure_dir(dir);
  std::string trace = "step,src,tgt,sigma,loss_sup,loss_self,pseudo_pairs\n";
  for (const auto& m : r.trace)
    trace += std::to_string(m.step) + "," + std::to_string(m.src) + "," + std::to_string(m.tgt) +
             "," + num(m.sigma) + "," + num(m.loss_sup) + "," + num(m.loss_self) + "," +
             std::to_string(m.pseudo_pairs) + "\n";
  io::write_atomic(dir / "trace.csv", trace);

  std::string evals = "step,split" + pck_header(cfg.alphas) + "\n";
  for (const auto& e : r.evals) {
    auto row = [&](const char* split, const std::vector<double>& v) {
      if (v.empty()) return;
      evals += std::to_string(e.step) + "," + split;
      for (double x : v) evals += "," + num(x);
      evals += "\n";
    };
    row("seen", e.pck.seen);
    row("heldout", e.pck.heldout);
    row("unseen", e.pck.unseen);
  }
  io::write_atomic(dir / "eval.csv", evals);

  json summary = {
      {"scene", {{"spec", io::spec_to_json(spec)}, {"seed", scene.seed}}},
      {"config",
       {{"dense", cfg.use_dense_loss}, {"lambda_self", cfg.lambda_self}, {"steps", cfg.steps},
        {"seed", cfg.seed}, {"sigma_max", a.sigma_max}, {"sigma_min", a.sigma_min},
        {"lr", cfg.lr}, {"beta", cfg.beta}, {"temperature", cfg.temperature},
        {"window", cfg.window}, {"pseudo_noise_px", cfg.pseudo_noise_px}}},
      {"initial", pck_json(r.evals.front().pck)},
      {"final", pck_json(r.evals.back().pck)}};
  io::write_json(dir / "summary.json", summary);

  if (!a.no_students)
    for (int i = 0; i < scene.size(); ++i) {
      af::FeatureGridD::Matrix f = r.state.features(r.state.student[i]);
      io::FeatureFile ff{af::FeatureGrid(scene.geometry, f.cast<float>()), scene.instances[i].mask};
      io::write_feature_file(ff, dir / ("student_" + instance_name(i) + ".mrcf"));
    }

  const auto& fin = r.evals.back().pck;
  std::cout << "final PCK@" << num(cfg.alphas.back()) << ": seen " << num(fin.seen.back())
            << ", unseen " << num(fin.unseen.back()) << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string pred, ann, out, alphas = "0.01,0.05,0.10";
};

void run_eval(const EvalArgs& a) {
  const std::vector<double> alphas = parse_alphas(a.alphas);
  const io::PckInputs in = io::pck_inputs_from_json(io::read_json(a.pred), io::read_json(a.ann));
  std::string csv = "split,alpha,pck,images\n";
  for (const auto& [split, records] : in.splits) {
    const std::vector<double> pck = af::pck_aggregate(records, alphas);
    for (std::size_t i = 0; i < alphas.size(); ++i)
      csv += split + "," + num(alphas[i]) + "," + num(pck[i]) + "," + std::to_string(records.size()) + "\n";
  }
  if (a.out.empty())
    std::cout << csv;
  else
    io::write_atomic(a.out, csv);
}

// ---------------------------------------------------------------------------

void report(bool as_json, const std::string& code, const std::string& message, int exit,
            std::optional<std::size_t> offset = std::nullopt) {
  if (as_json) {
    json j = {{"error", {{"code", code}, {"message", message}, {"exit", exit}}}};
    if (offset) j["error"]["offset"] = *offset;
    std::cerr << j.dump() << "\n";
  } else {
    std::cerr << "error [" << code << "]: " << message << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  bool errors_json = false;
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--errors-json") errors_json = true;

  CLI::App app{"Dense correspondence mining, toy training and PCK evaluation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  int threads = 1;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Worker threads (outputs do not depend on it)")
        ->check(CLI::Range(1, 1024));
    sub->add_flag("--errors-json", errors_json, "Report errors as JSON on stderr");
  };

  MineArgs mine;
  auto* m = app.add_subcommand("mine", "Mine dense pseudo-labels between two feature files");
  m->add_option("--src", mine.src, "Source feature file")->required();
  m->add_option("--tgt", mine.tgt, "Target feature file")->required();
  m->add_option("--ann", mine.ann, "Annotated pairs (correspondence JSON)")->required();
  m->add_option("--region", mine.region, "Matching region")
      ->check(CLI::IsMember({"bbox", "mask", "full"}));
  m->add_option("--kinit", mine.kinit, "Initial flow cluster count")->check(CLI::Range(1, 1000));
  m->add_option("--r-anchor", mine.r_anchor, "Anchoring radius in cells")
      ->check(CLI::PositiveNumber);
  m->add_option("--bbox-margin", mine.margin, "Keypoint box margin (fraction of diagonal)")
      ->check(CLI::NonNegativeNumber);
  m->add_option("--seed", mine.seed, "Clustering seed");
  m->add_flag("--raw", mine.raw, "Match unnormalized descriptors");
  m->add_flag("--no-bic", mine.no_bic, "Keep k_init clusters without merging");
  m->add_option("--out", mine.out, "Output correspondence JSON")->required();
  common(m);

  ScheduleArgs sched;
  auto* s = app.add_subcommand("schedule", "Print the target-width schedule");
  s->add_option("--sigma-max", sched.sigma_max)->check(CLI::PositiveNumber);
  s->add_option("--sigma-min", sched.sigma_min)->check(CLI::PositiveNumber);
  s->add_option("--steps", sched.steps)->check(CLI::Range(1, 100000000));
  s->add_option("--dump", sched.dump, "Output format")->check(CLI::IsMember({"csv"}));
  s->add_option("--out", sched.out, "Write to a file instead of stdout");
  common(s);

  SynthArgs synth;
  auto* y = app.add_subcommand("synth", "Generate a synthetic scene");
  y->add_option("--spec", synth.spec, "Scene spec JSON (defaults when omitted)");
  y->add_option("--seed", synth.seed);
  y->add_option("--out", synth.out, "Output directory")->required();
  common(y);

  TrainArgs train;
  auto* t = app.add_subcommand("train-toy", "Train descriptor fields on a synthetic scene");
  t->add_option("--scene", train.scene, "Scene directory written by synth")->required();
  t->add_option("--dense", train.dense, "Dense self-distillation loss")
      ->check(CLI::IsMember({"on", "off"}));
  t->add_option("--lambda-self", train.lambda_self)->check(CLI::NonNegativeNumber);
  t->add_option("--steps", train.steps)->check(CLI::Range(0, 10000000));
  t->add_option("--seed", train.seed);
  t->add_option("--sigma-max", train.sigma_max)->check(CLI::PositiveNumber);
  t->add_option("--sigma-min", train.sigma_min)->check(CLI::PositiveNumber);
  t->add_option("--lr", train.lr)->check(CLI::PositiveNumber);
  t->add_option("--beta", train.beta)->check(CLI::Range(0.0, 1.0));
  t->add_option("--pseudo-noise", train.pseudo_noise, "Pseudo-label noise std in pixels")
      ->check(CLI::NonNegativeNumber);
  t->add_option("--eval-every", train.eval_every)->check(CLI::NonNegativeNumber);
  t->add_option("--alphas", train.alphas, "Comma-separated PCK thresholds");
  t->add_flag("--no-students", train.no_students, "Skip writing the trained feature files");
  t->add_option("--out", train.out, "Run directory")->required();
  common(t);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "PCK of predictions against annotations");
  e->add_option("--pred", ev.pred, "Predictions JSON")->required();
  e->add_option("--ann", ev.ann, "Annotations JSON")->required();
  e->add_option("--alphas", ev.alphas, "Comma-separated PCK thresholds");
  e->add_option("--out", ev.out, "Output CSV (stdout when omitted)");
  common(e);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    report(errors_json, "usage", err.what(), kUsage);
    return kUsage;
  }

  try {
    if (*m) run_mine(mine, threads);
    if (*s) run_schedule(sched);
    if (*y) run_synth(synth);
    if (*t) run_train(train, threads);
    if (*e) run_eval(ev);
  } catch (const af::ParseError& err) {
    const int code = exit_code(err.code());
    report(errors_json, std::string(af::to_string(err.code())), err.what(), code, err.offset());
    return code;
  } catch (const af::Error& err) {
    const int code = exit_code(err.code());
    report(errors_json, std::string(af::to_string(err.code())), err.what(), code);
    return code;
  } catch (const std::exception& err) {
    report(errors_json, "internal", err.what(), 1);
    return 1;
  }
  return kOk;
}
