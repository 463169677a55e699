#include <cmath>
#include <iostream>
#include <memory>

#include "common.hpp"
#include "fetalpose/checkpoint.hpp"
#include "fetalpose/dataset.hpp"
#include "fetalpose/metrics.hpp"
#include "fetalpose/pipeline.hpp"
#include "fetalpose/volume_io.hpp"

namespace fetalpose::cli {

namespace {

void check_ga(const BoneStats& stats, double ga) {
  if (!(ga >= stats.ga_range[0] && ga <= stats.ga_range[1]))
    throw std::invalid_argument("--ga " + std::to_string(ga) + " outside the bone-stats range [" +
                                std::to_string(stats.ga_range[0]) + ", " + std::to_string(stats.ga_range[1]) + "]");
}

json energy_json(const EnergyBreakdown& e) {
  return {{"total", e.total}, {"unary", e.unary}, {"pairwise", e.pairwise}};
}

void write_refined(const std::filesystem::path& file, const MapResult& r, const EnergyBreakdown& terms) {
  write_json(file, {{"pose", pose_json(r.pose)}, {"config", r.config}, {"energy", energy_json(terms)}});
}

struct PredictOptions {
  std::filesystem::path model;
  std::filesystem::path volume;
  bool refine = false;
  std::filesystem::path stats;
  std::optional<double> ga;
};

int predict(const PredictOptions& o, const GlobalOptions& g) {
  if (o.refine && o.stats.empty()) throw std::invalid_argument("--refine needs --stats");
  if (o.refine && !o.ga) throw std::invalid_argument("--refine needs --ga");
  echo_config("predict", {{"model", o.model.string()},
                          {"volume", o.volume.string()},
                          {"refine", o.refine},
                          {"stats", o.stats.string()},
                          {"ga", o.ga.value_or(0.0)},
                          {"out_dir", g.out_dir.string()}});
  std::optional<BoneStats> stats;
  if (o.refine) {
    stats = read_bone_stats(o.stats);
    stats->validate(fetal_skeleton());
    check_ga(*stats, *o.ga);
  }
  const Hourglass<float> model = load_checkpoint(o.model);
  const Volume volume = read_volume(o.volume);
  const Prediction p = run_pipeline(model, volume, stats ? &*stats : nullptr, o.ga.value_or(30.0));

  const std::string name = volume_base(o.volume).filename().string();
  std::filesystem::create_directories(g.out_dir);
  write_heatmaps(g.out_dir / (name + ".heatmaps"), p.heatmaps);
  write_pose(g.out_dir / (name + ".baseline.pose.json"), p.baseline);
  Log("pad").kv("x", p.pad.x).kv("y", p.pad.y).kv("z", p.pad.z);
  if (p.refined) {
    write_pose(g.out_dir / (name + ".refined.pose.json"), p.refined->pose);
    const auto terms = energy_terms(p.candidates, p.refined->config, fetal_skeleton(), *stats, *o.ga);
    write_refined(g.out_dir / (name + ".refined.json"), *p.refined, terms);
    Log("refined").kv("energy", p.refined->energy);
  }
  Log("timing")
      .kv("stage1_ms", static_cast<long>(std::lround(p.stage1_ms)))
      .kv("stage2_ms", static_cast<long>(std::lround(p.stage2_ms)));
  return kOk;
}

struct RefineOptions {
  std::filesystem::path heatmaps;
  std::filesystem::path stats;
  double ga = 30.0;
  double alpha = 1.0;
  int L = 3;
};

int refine(const RefineOptions& o, const GlobalOptions& g) {
  EnergyParams params;
  params.alpha = o.alpha;
  params.L = o.L;
  params.validate();
  echo_config("refine", {{"heatmaps", o.heatmaps.string()},
                         {"stats", o.stats.string()},
                         {"ga", o.ga},
                         {"alpha", o.alpha},
                         {"L", o.L},
                         {"out_dir", g.out_dir.string()}});
  const BoneStats stats = read_bone_stats(o.stats);
  stats.validate(fetal_skeleton());
  check_ga(stats, o.ga);
  const HeatmapStack h = read_heatmaps(o.heatmaps);
  CandidateSet candidates;
  const MapResult r = refine_pose(h, stats, o.ga, params, fetal_skeleton(), &candidates);
  const auto terms = energy_terms(candidates, r.config, fetal_skeleton(), stats, o.ga, params);
  const std::string name = volume_base(o.heatmaps).filename().string();
  write_pose(g.out_dir / (name + ".refined.pose.json"), r.pose);
  write_refined(g.out_dir / (name + ".refined.json"), r, terms);
  Log log("refined");
  log.kv("energy", r.energy);
  double unary = 0.0, pairwise = 0.0;
  for (double e : terms.unary) unary += e;
  for (double e : terms.pairwise) pairwise += e;
  log.kv("unary", unary).kv("pairwise", pairwise);
  return kOk;
}

struct EvalOptions {
  std::filesystem::path manifest;
  std::filesystem::path predictions;
  std::string suffix = ".refined.pose.json";
};

int eval(const EvalOptions& o, const GlobalOptions& g) {
  echo_config("eval", {{"manifest", o.manifest.string()},
                       {"predictions", o.predictions.string()},
                       {"suffix", o.suffix},
                       {"out_dir", g.out_dir.string()}});
  const DatasetManifest m = read_manifest(o.manifest);
  check_subject_disjoint(m.entries);
  std::vector<std::string> ids;
  std::vector<std::vector<double>> errors;
  for (const auto& e : m.entries) {
    if (e.split != Split::kTest) continue;
    const Pose truth = read_pose(m.root / e.pose);
    const Pose pred = read_pose(o.predictions / (e.id + o.suffix));
    errors.push_back(keypoint_errors(pred, truth, m.phantom.spacing_mm));
    ids.push_back(e.id);
  }
  if (errors.empty()) throw std::invalid_argument("test split of " + o.manifest.string() + " is empty");
  const EvalReport r = summarize(errors, fetal_grouping());
  std::filesystem::create_directories(g.out_dir);
  write_error_csv(g.out_dir / "errors.csv", ids, errors);
  write_json(g.out_dir / "eval_report.json", json::parse(report_json(r)));
  std::cout << report_table(r, "eval");
  Log("eval").kv("samples", r.samples).kv("mean_mm", r.overall.mean_mm).kv("pck_10mm", r.overall.pck_10mm);
  return kOk;
}

struct E2eOptions {
  std::filesystem::path manifest;
  std::filesystem::path model;
  std::filesystem::path stats;
  bool train = false;
  std::filesystem::path train_config;
  int limit = 0;
};

int e2e(const E2eOptions& o, const GlobalOptions& g) {
  echo_config("e2e", {{"manifest", o.manifest.string()},
                      {"model", o.model.string()},
                      {"stats", o.stats.string()},
                      {"train", o.train},
                      {"limit", o.limit},
                      {"threads", g.threads},
                      {"out_dir", g.out_dir.string()}});
  const DatasetManifest m = read_manifest(o.manifest);
  try {
    check_subject_disjoint(m.entries);
  } catch (const std::runtime_error& e) {
    throw CheckFailure(e.what());
  }
  std::vector<const ManifestEntry*> test;
  for (const auto& e : m.entries)
    if (e.split == Split::kTest) test.push_back(&e);
  if (o.limit > 0 && static_cast<int>(test.size()) > o.limit) test.resize(static_cast<std::size_t>(o.limit));
  if (test.empty()) throw std::invalid_argument("test split of " + o.manifest.string() + " is empty");

  std::filesystem::path model_file = o.model, stats_file = o.stats;
  if (o.train) {
    TrainConfig cfg;
    if (!o.train_config.empty()) merge_json(cfg, read_json(o.train_config));
    cfg.validate();
    const auto trained = train_from_manifest(o.manifest, cfg, HourglassConfig{}, g.out_dir, 0, to_json(cfg));
    model_file = trained.checkpoint;
    stats_file = trained.stats;
  } else if (model_file.empty() || stats_file.empty()) {
    throw std::invalid_argument("e2e needs --model and --stats, or --train");
  }
  const Hourglass<float> model = load_checkpoint(model_file);
  const BoneStats stats = read_bone_stats(stats_file);
  stats.validate(fetal_skeleton());

  const std::size_t n = test.size();
  std::vector<std::vector<double>> base(n), refined(n);
  std::vector<double> stage1(n), stage2(n);
  parallel_for(static_cast<int>(n), g.threads, [&](int i) {
    const ManifestEntry& e = *test[static_cast<std::size_t>(i)];
    const Volume v = read_volume(m.root / e.volume);
    const Pose truth = read_pose(m.root / e.pose);
    const double ga = std::clamp(e.ga_weeks, stats.ga_range[0], stats.ga_range[1]);
    const Prediction p = run_pipeline(model, v, &stats, ga);
    base[static_cast<std::size_t>(i)] = keypoint_errors(p.baseline, truth, v.spacing_mm());
    refined[static_cast<std::size_t>(i)] = keypoint_errors(p.refined->pose, truth, v.spacing_mm());
    stage1[static_cast<std::size_t>(i)] = p.stage1_ms;
    stage2[static_cast<std::size_t>(i)] = p.stage2_ms;
  });
  for (std::size_t i = 0; i < n; ++i)
    Log("volume")
        .kv("id", test[i]->id)
        .kv("hg_mean_mm", mean(base[i]))
        .kv("hgm_mean_mm", mean(refined[i]))
        .kv("stage1_ms", static_cast<long>(std::lround(stage1[i])))
        .kv("stage2_ms", static_cast<long>(std::lround(stage2[i])));

  const auto groups = fetal_grouping();
  const EvalReport hg = summarize(base, groups), hgm = summarize(refined, groups);
  std::cout << report_table({{"HG", hg}, {"HG-M", hgm}});
  std::printf("reference (real data, not a gate): HG-M mean %.2f mm, median %.2f mm, PCK@10mm %.1f%%; HG mean %.2f mm\n",
              PublishedReference::kMeanErrorMm, PublishedReference::kMedianErrorMm, 100.0 * PublishedReference::kPck10,
              PublishedReference::kBaselineMeanErrorMm);

  std::vector<std::string> ids;
  for (const auto* e : test) ids.push_back(e->id);
  std::filesystem::create_directories(g.out_dir);
  write_error_csv(g.out_dir / "errors_hg.csv", ids, base);
  write_error_csv(g.out_dir / "errors_hgm.csv", ids, refined);
  write_json(g.out_dir / "e2e_report.json",
             {{"HG", json::parse(report_json(hg))}, {"HG-M", json::parse(report_json(hgm))}});
  double s2 = 0.0;
  for (double t : stage2) s2 += t;
  Log("e2e")
      .kv("samples", n)
      .kv("hg_mean_mm", hg.overall.mean_mm)
      .kv("hgm_mean_mm", hgm.overall.mean_mm)
      .kv("hgm_pck_10mm", hgm.overall.pck_10mm)
      .kv("mean_stage2_ms", s2 / static_cast<double>(n));
  return kOk;
}

}  // namespace

void register_infer_commands(CLI::App& app, GlobalOptions& global, std::function<int()>& run) {
  auto pr = std::make_shared<PredictOptions>();
  CLI::App* p = app.add_subcommand("predict", "Stage 1 heatmaps, argmax pose and optional MRF refinement");
  p->add_option("--model", pr->model, "Checkpoint (base or .ckpt.json)")->required();
  p->add_option("--volume", pr->volume, "Volume (base or .vol.json)")->required();
  p->add_flag("--refine", pr->refine, "Run stage 2");
  p->add_option("--stats", pr->stats, "Bone statistics JSON");
  p->add_option("--ga", pr->ga, "Gestational age in weeks");
  p->callback([pr, &global, &run] { run = [pr, &global] { return predict(*pr, global); }; });

  auto rf = std::make_shared<RefineOptions>();
  CLI::App* r = app.add_subcommand("refine", "MRF refinement of a stored heatmap stack");
  r->add_option("--heatmaps", rf->heatmaps, "Heatmap stack (base or .vol.json)")->required();
  r->add_option("--stats", rf->stats, "Bone statistics JSON")->required()->check(CLI::ExistingFile);
  r->add_option("--ga", rf->ga, "Gestational age in weeks")->required();
  r->add_option("--alpha", rf->alpha, "Pairwise weight")->capture_default_str();
  r->add_option("--L", rf->L, "Candidates per keypoint")->capture_default_str();
  r->callback([rf, &global, &run] { run = [rf, &global] { return refine(*rf, global); }; });

  auto ev = std::make_shared<EvalOptions>();
  CLI::App* e = app.add_subcommand("eval", "Score stored test-split predictions");
  e->add_option("--manifest", ev->manifest, "Dataset manifest.json")->required()->check(CLI::ExistingFile);
  e->add_option("--predictions", ev->predictions, "Directory with <id><suffix> pose files")->required();
  e->add_option("--suffix", ev->suffix, "Prediction file suffix")->capture_default_str();
  e->callback([ev, &global, &run] { run = [ev, &global] { return eval(*ev, global); }; });

  auto ee = std::make_shared<E2eOptions>();
  CLI::App* x = app.add_subcommand("e2e", "HG vs HG-M comparison on the test split");
  x->add_option("--manifest", ee->manifest, "Dataset manifest.json")->required()->check(CLI::ExistingFile);
  x->add_option("--model", ee->model, "Checkpoint");
  x->add_option("--stats", ee->stats, "Bone statistics JSON")->check(CLI::ExistingFile);
  x->add_flag("--train", ee->train, "Train first and evaluate the result");
  x->add_option("--train-config", ee->train_config, "JSON training config for --train")->check(CLI::ExistingFile);
  x->add_option("--limit", ee->limit, "Evaluate at most this many test volumes (0 = all)");
  x->callback([ee, &global, &run] { run = [ee, &global] { return e2e(*ee, global); }; });
}

}  // namespace fetalpose::cli
