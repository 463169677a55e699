#include <chrono>
#include <iostream>
#include <memory>
#include <random>

#include "common.hpp"
#include "fetalpose/heatmap.hpp"
#include "fetalpose/layers.hpp"
#include "fetalpose/mrf.hpp"
#include "fetalpose/phantom.hpp"
#include "fetalpose/pipeline.hpp"

namespace fetalpose::cli {

namespace {

struct Instance {
  SkeletonSpec skeleton;
  CandidateSet candidates;
  BoneStats stats;
  double ga = 30.0;
};

// Random tree (node k hangs off an earlier node), random candidates and statistics.
Instance random_instance(int J, int max_l, std::mt19937_64& rng) {
  Instance m;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < J; ++k) {
    m.skeleton.keypoints.push_back("k" + std::to_string(k));
    m.skeleton.mirror_map.push_back(k);
  }
  for (int k = 1; k < J; ++k) {
    const int parent = std::uniform_int_distribution<int>(0, k - 1)(rng);
    if (u(rng) < 0.5)
      m.skeleton.edges.emplace_back(parent, k);
    else
      m.skeleton.edges.emplace_back(k, parent);
  }
  m.candidates.spacing_mm = {1.0 + 3.0 * u(rng), 1.0 + 3.0 * u(rng), 1.0 + 3.0 * u(rng)};
  for (int k = 0; k < J; ++k) {
    const int L = std::uniform_int_distribution<int>(1, max_l)(rng);
    std::vector<Candidate> states;
    for (int s = 0; s < L; ++s) states.push_back({{40.0 * u(rng), 40.0 * u(rng), 40.0 * u(rng)}, 0.02 + 0.98 * u(rng)});
    std::sort(states.begin(), states.end(), [](const Candidate& a, const Candidate& b) { return a.value > b.value; });
    m.candidates.states.push_back(std::move(states));
  }
  m.stats.slope = 1.0 + u(rng);
  m.stats.intercept = 10.0 + 20.0 * u(rng);
  for (auto [i, j] : m.skeleton.edges) m.stats.edges.push_back({i, j, 0.5 + u(rng), 0.05 + 0.5 * u(rng)});
  m.ga = 25.0 + 10.0 * u(rng);
  return m;
}

json instance_json(const Instance& m) {
  json states = json::array();
  for (const auto& s : m.candidates.states) {
    json list = json::array();
    for (const auto& c : s) list.push_back({{"location", {c.location.x, c.location.y, c.location.z}}, {"value", c.value}});
    states.push_back(list);
  }
  json edges = json::array();
  for (const auto& e : m.stats.edges) edges.push_back({{"i", e.i}, {"j", e.j}, {"mu", e.mu}, {"var", e.var}});
  const Vec3 sp = m.candidates.spacing_mm;
  return {{"keypoints", m.skeleton.size()},
          {"spacing_mm", {sp.x, sp.y, sp.z}},
          {"states", states},
          {"edges", edges},
          {"ga_model", {{"slope", m.stats.slope}, {"intercept", m.stats.intercept}}},
          {"ga", m.ga}};
}

Instance instance_from(const json& j) {
  Instance m;
  const int J = j.at("keypoints");
  for (int k = 0; k < J; ++k) {
    m.skeleton.keypoints.push_back("k" + std::to_string(k));
    m.skeleton.mirror_map.push_back(k);
  }
  const auto sp = j.at("spacing_mm").get<std::array<double, 3>>();
  m.candidates.spacing_mm = {sp[0], sp[1], sp[2]};
  for (const json& list : j.at("states")) {
    std::vector<Candidate> states;
    for (const json& c : list) {
      const auto p = c.at("location").get<std::array<double, 3>>();
      states.push_back({{p[0], p[1], p[2]}, c.at("value").get<double>()});
    }
    m.candidates.states.push_back(std::move(states));
  }
  for (const json& e : j.at("edges")) {
    m.stats.edges.push_back({e.at("i"), e.at("j"), e.at("mu"), e.at("var")});
    m.skeleton.edges.emplace_back(e.at("i").get<int>(), e.at("j").get<int>());
  }
  m.stats.slope = j.at("ga_model").at("slope");
  m.stats.intercept = j.at("ga_model").at("intercept");
  m.stats.ga_range = {0.0, 1e9};
  m.ga = j.at("ga");
  return m;
}

/// Empty string when BP and exhaustive search agree exactly.
std::string compare(const Instance& m) {
  const MapResult bp = map_inference_bp(m.candidates, m.skeleton, m.stats, m.ga);
  const MapResult bf = brute_force_map(m.candidates, m.skeleton, m.stats, m.ga);
  if (bp.config == bf.config && bp.energy == bf.energy) return {};
  char buf[128];
  std::snprintf(buf, sizeof buf, "bp energy %.17g vs brute force %.17g", bp.energy, bf.energy);
  return buf;
}

struct OracleOptions {
  int instances = 1000;
  int max_j = 8;
  int min_j = 4;
  int max_l = 4;
  std::filesystem::path replay;
};

int oracle_check(const OracleOptions& o, const GlobalOptions& g) {
  echo_config("oracle-check", {{"instances", o.instances},
                               {"min_j", o.min_j},
                               {"max_j", o.max_j},
                               {"max_l", o.max_l},
                               {"seed", g.seed},
                               {"replay", o.replay.string()}});
  if (!o.replay.empty()) {
    const Instance m = instance_from(read_json(o.replay));
    const std::string diff = compare(m);
    Log("oracle_replay").kv("file", o.replay.string()).kv("match", diff.empty() ? "yes" : "no");
    if (!diff.empty()) throw CheckFailure(diff);
    return kOk;
  }
  if (o.min_j < 1 || o.max_j < o.min_j) throw std::invalid_argument("need 1 <= --min-j <= --max-j");
  if (o.max_l < 1) throw std::invalid_argument("--max-l must be >= 1");
  std::mt19937_64 rng(g.seed);
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < o.instances; ++k) {
    const int J = std::uniform_int_distribution<int>(o.min_j, o.max_j)(rng);
    const Instance m = random_instance(J, o.max_l, rng);
    const std::string diff = compare(m);
    if (!diff.empty()) {
      const auto file = g.out_dir / "oracle_failure.json";
      write_json(file, instance_json(m));
      Log("oracle_mismatch").kv("instance", k).kv("detail", diff).kv("replay", file.string());
      throw CheckFailure("mismatch on instance " + std::to_string(k));
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Log("oracle_check").kv("checked", o.instances).kv("mismatches", 0).kv("seconds", secs);
  std::cout << o.instances << " checked\n";
  return kOk;
}

template <typename F>
double best_ms(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

struct BenchOptions {
  int reps = 3;
  bool full_forward = false;
};

int bench(const BenchOptions& o, const GlobalOptions& g) {
  echo_config("bench", {{"reps", o.reps}, {"full_forward", o.full_forward}, {"seed", g.seed}});
  std::mt19937_64 rng(g.seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);

  Tensor<float> x({16, 48, 48, 48}), w({16, 16, 3, 3, 3}), b({16});
  for (float& v : x.values()) v = u(rng);
  for (float& v : w.values()) v = 0.1f * u(rng);
  Log("bench").kv("name", "conv3d_16x48^3_k3").kv("ms", best_ms(o.reps, [&] { (void)conv3d_forward(x, w, b); }));

  PhantomConfig cfg;
  const Pose pose = sample_pose(cfg, GeneratorTruth::fetal_default(), fetal_skeleton(), rng);
  const HeatmapStack h = render_heatmaps(pose, cfg.dims);
  Log("bench").kv("name", "local_maxima_15x120x120x80").kv("ms", best_ms(o.reps, [&] { (void)extract_candidates(h); }));

  std::vector<LabeledPose> poses;
  for (int i = 0; i < 50; ++i) {
    PhantomConfig c = cfg;
    c.ga_weeks = 25.0 + 10.0 * (i % 11) / 10.0;
    poses.push_back({sample_pose(c, GeneratorTruth::fetal_default(), fetal_skeleton(), rng), c.ga_weeks, cfg.spacing_mm});
  }
  const BoneStats stats = estimate_bone_stats(poses);
  const CandidateSet cands = extract_candidates(h);
  Log("bench").kv("name", "bp_J15").kv("ms", best_ms(o.reps, [&] {
    (void)map_inference_bp(cands, fetal_skeleton(), stats, 30.0);
  }));
  Log("bench").kv("name", "stage2_full").kv("ms", best_ms(o.reps, [&] { (void)refine_pose(h, stats, 30.0); }));
  Log("bench_reference").kv("name", "stage2_full").kv("ms", 290.0);

  if (o.full_forward) {
    std::mt19937_64 init(g.seed);
    const auto model = Hourglass<float>::build(HourglassConfig{}, init);
    const Volume v(cfg.dims, cfg.spacing_mm);
    Log("bench").kv("name", "stage1_120x120x80").kv("ms", best_ms(1, [&] { (void)predict_heatmaps(model, v); }));
  }
  return kOk;
}

}  // namespace

void register_check_commands(CLI::App& app, GlobalOptions& global, std::function<int()>& run) {
  auto oc = std::make_shared<OracleOptions>();
  CLI::App* c = app.add_subcommand("oracle-check", "Cross-check BP against exhaustive MAP on random trees");
  c->add_option("--instances", oc->instances, "Number of random instances")->check(CLI::NonNegativeNumber)->capture_default_str();
  c->add_option("--min-j", oc->min_j, "Smallest keypoint count")->capture_default_str();
  c->add_option("--max-j", oc->max_j, "Largest keypoint count")->capture_default_str();
  c->add_option("--max-l", oc->max_l, "Largest candidate count per keypoint")->capture_default_str();
  c->add_option("--replay", oc->replay, "Re-check a serialized failing instance")->check(CLI::ExistingFile);
  c->callback([oc, &global, &run] { run = [oc, &global] { return oracle_check(*oc, global); }; });

  auto bo = std::make_shared<BenchOptions>();
  CLI::App* b = app.add_subcommand("bench", "Quick wall-clock timings of the hot paths");
  b->add_option("--reps", bo->reps, "Repetitions (best is reported)")->check(CLI::PositiveNumber)->capture_default_str();
  b->add_flag("--full-forward", bo->full_forward, "Also time a full-volume stage 1 pass");
  b->callback([bo, &global, &run] { run = [bo, &global] { return bench(*bo, global); }; });
}

}  // namespace fetalpose::cli
