#include "fetalpose/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "fetalpose/volume_io.hpp"
#include "json_util.hpp"

namespace fetalpose {

using detail::json;
namespace fs = std::filesystem;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

namespace {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw std::runtime_error("unknown split '" + s + "'");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

json vec3_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json phantom_json(const PhantomConfig& c) {
  return {{"dims", {c.dims.x, c.dims.y, c.dims.z}},
          {"spacing_mm", vec3_json(c.spacing_mm)},
          {"blob_radius_mm", c.blob_radius_mm},
          {"limb_intensity", c.limb_intensity},
          {"limb_radius_mm", c.limb_radius_mm},
          {"background_noise_sigma", c.background_noise_sigma},
          {"margin_voxels", c.margin_voxels}};
}

PhantomConfig phantom_from(const json& j) {
  PhantomConfig c;
  const auto d = j.at("dims").get<std::vector<int>>();
  c.dims = {d.at(0), d.at(1), d.at(2)};
  c.spacing_mm = vec3_from(j.at("spacing_mm"));
  c.blob_radius_mm = j.at("blob_radius_mm");
  c.limb_intensity = j.at("limb_intensity");
  c.limb_radius_mm = j.at("limb_radius_mm");
  c.background_noise_sigma = j.at("background_noise_sigma");
  c.margin_voxels = j.at("margin_voxels");
  return c;
}

json truth_json(const GeneratorTruth& t, const SkeletonSpec& sk) {
  json edges = json::array();
  for (std::size_t e = 0; e < sk.edges.size(); ++e)
    edges.push_back({{"i", sk.edges[e].first},
                     {"j", sk.edges[e].second},
                     {"proportion", t.proportions[e]},
                     {"direction", vec3_json(t.directions[e])},
                     {"cone_deg", t.cone_deg[e]}});
  json kps = json::array();
  for (std::size_t k = 0; k < sk.keypoints.size(); ++k)
    kps.push_back({{"name", sk.keypoints[k]},
                   {"amplitude", t.keypoint_amplitude[k]},
                   {"radius_scale", t.keypoint_radius_scale[k]}});
  return {{"edges", edges},
          {"keypoints", kps},
          {"scale_law", {{"base_mm", t.scale_base_mm}, {"slope", t.scale_slope}, {"ref_ga", t.scale_ref_ga}}},
          {"length_jitter", t.length_jitter}};
}

GeneratorTruth truth_from(const json& j) {
  GeneratorTruth t;
  for (const json& e : j.at("edges")) {
    t.proportions.push_back(e.at("proportion"));
    t.directions.push_back(vec3_from(e.at("direction")));
    t.cone_deg.push_back(e.at("cone_deg"));
  }
  for (const json& k : j.at("keypoints")) {
    t.keypoint_amplitude.push_back(k.at("amplitude"));
    t.keypoint_radius_scale.push_back(k.at("radius_scale"));
  }
  const json& s = j.at("scale_law");
  t.scale_base_mm = s.at("base_mm");
  t.scale_slope = s.at("slope");
  t.scale_ref_ga = s.at("ref_ga");
  t.length_jitter = j.at("length_jitter");
  return t;
}

std::string sample_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phantom_%05d", index);
  return buf;
}

Split split_of(int index, const std::array<int, 3>& counts) {
  if (index < counts[0]) return Split::kTrain;
  if (index < counts[0] + counts[1]) return Split::kVal;
  return Split::kTest;
}

void check_fractions(std::array<double, 3> f) {
  for (double x : f)
    if (!(x >= 0)) throw std::invalid_argument("split fractions must be non-negative");
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
}

}  // namespace

std::array<int, 3> split_counts(int n, std::array<double, 3> fractions) {
  check_fractions(fractions);
  if (n < 0) throw std::invalid_argument("sample count must be non-negative");
  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int s = 0; s < 3; ++s) {
    const double exact = n * fractions[static_cast<std::size_t>(s)];
    counts[static_cast<std::size_t>(s)] = static_cast<int>(std::floor(exact + 1e-9));
    rem[static_cast<std::size_t>(s)] = exact - counts[static_cast<std::size_t>(s)];
    assigned += counts[static_cast<std::size_t>(s)];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[static_cast<std::size_t>(a)] > rem[static_cast<std::size_t>(b)]; });
  for (int k = 0; assigned < n; ++k, ++assigned) ++counts[static_cast<std::size_t>(order[static_cast<std::size_t>(k % 3)])];
  return counts;
}

std::uint64_t subject_seed(std::uint64_t dataset_seed, int index) {
  return splitmix64(splitmix64(dataset_seed) ^ static_cast<std::uint64_t>(index));
}

namespace {

SubjectPose draw_subject(std::mt19937_64& rng, std::array<double, 2> ga_range, const PhantomConfig& cfg,
                         const GeneratorTruth& truth, const SkeletonSpec& skeleton) {
  if (!(ga_range[0] >= kMinGestationalAge && ga_range[1] <= kMaxGestationalAge && ga_range[0] <= ga_range[1]))
    throw std::invalid_argument("GA range must lie within [25, 35] weeks");
  std::uniform_real_distribution<double> ga(ga_range[0], ga_range[1]);
  PhantomConfig c = cfg;
  c.ga_weeks = ga_range[0] == ga_range[1] ? ga_range[0] : ga(rng);
  return {sample_pose(c, truth, skeleton, rng), c.ga_weeks};
}

}  // namespace

SubjectPose sample_subject(std::uint64_t seed, std::array<double, 2> ga_range, const PhantomConfig& cfg,
                           const GeneratorTruth& truth, const SkeletonSpec& skeleton) {
  std::mt19937_64 rng(seed);
  return draw_subject(rng, ga_range, cfg, truth, skeleton);
}

Sample generate_sample(const std::string& id, std::uint64_t seed, std::array<double, 2> ga_range,
                       const PhantomConfig& cfg, const GeneratorTruth& truth, const SkeletonSpec& skeleton) {
  std::mt19937_64 rng(seed);
  SubjectPose sp = draw_subject(rng, ga_range, cfg, truth, skeleton);
  PhantomConfig c = cfg;
  c.ga_weeks = sp.ga_weeks;
  Sample s;
  s.id = id;
  s.ga_weeks = sp.ga_weeks;
  s.subject_seed = seed;
  s.pose = std::move(sp.pose);
  s.volume = render_phantom(s.pose, skeleton, truth, c, rng);
  return s;
}

Dataset generate_dataset(int n, std::array<double, 3> fractions, const PhantomConfig& cfg,
                         const GeneratorTruth& truth, std::uint64_t seed, std::array<double, 2> ga_range) {
  const auto counts = split_counts(n, fractions);
  Dataset data;
  for (int i = 0; i < n; ++i) {
    Sample s = generate_sample(sample_id(i), subject_seed(seed, i), ga_range, cfg, truth);
    switch (split_of(i, counts)) {
      case Split::kTrain: data.train.push_back(std::move(s)); break;
      case Split::kVal: data.val.push_back(std::move(s)); break;
      case Split::kTest: data.test.push_back(std::move(s)); break;
    }
  }
  return data;
}

DatasetManifest make_dataset(int n, std::array<double, 3> fractions, const PhantomConfig& cfg,
                             const GeneratorTruth& truth, std::uint64_t seed, const fs::path& out_dir,
                             std::array<double, 2> ga_range) {
  const auto counts = split_counts(n, fractions);
  DatasetManifest m;
  m.root = out_dir;
  m.fractions = fractions;
  m.ga_range = ga_range;
  m.seed = seed;
  m.phantom = cfg;
  m.truth = truth;
  fs::create_directories(out_dir);
  for (int i = 0; i < n; ++i) {
    const std::string id = sample_id(i);
    const Sample s = generate_sample(id, subject_seed(seed, i), ga_range, cfg, truth);
    ManifestEntry e;
    e.id = id;
    e.split = split_of(i, counts);
    e.volume = std::string(split_name(e.split)) + "/" + id;
    e.pose = std::string(split_name(e.split)) + "/" + id + ".pose.json";
    e.ga_weeks = s.ga_weeks;
    e.subject_seed = s.subject_seed;
    write_volume(out_dir / e.volume, s.volume);
    write_pose(out_dir / e.pose, s.pose);
    m.entries.push_back(std::move(e));
  }
  check_subject_disjoint(m.entries);
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

void write_manifest(const fs::path& file, const DatasetManifest& m) {
  json samples = json::array();
  for (const auto& e : m.entries)
    samples.push_back({{"id", e.id},
                       {"split", split_name(e.split)},
                       {"volume", e.volume},
                       {"pose", e.pose},
                       {"ga_weeks", e.ga_weeks},
                       {"subject_seed", e.subject_seed}});
  json splits = json::object();
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    json ids = json::array();
    for (const auto& e : m.entries)
      if (e.split == s) ids.push_back(e.id);
    splits[std::string(split_name(s))] = ids;
  }
  json j{{"seed", m.seed},
         {"fractions", m.fractions},
         {"ga_range", m.ga_range},
         {"keypoints", fetal_skeleton().keypoints},
         {"phantom", phantom_json(m.phantom)},
         {"generator_truth", truth_json(m.truth, fetal_skeleton())},
         {"splits", splits},
         {"samples", samples}};
  detail::write_json_file(file, j);
}

DatasetManifest read_manifest(const fs::path& file) {
  const json j = detail::read_json_file(file);
  DatasetManifest m;
  m.root = file.parent_path();
  try {
    m.seed = j.at("seed");
    m.fractions = j.at("fractions").get<std::array<double, 3>>();
    m.ga_range = j.at("ga_range").get<std::array<double, 2>>();
    m.phantom = phantom_from(j.at("phantom"));
    m.truth = truth_from(j.at("generator_truth"));
    for (const json& s : j.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id");
      e.split = parse_split(s.at("split"));
      e.volume = s.at("volume");
      e.pose = s.at("pose");
      e.ga_weeks = s.at("ga_weeks");
      e.subject_seed = s.at("subject_seed");
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("bad dataset manifest " + file.string() + ": " + e.what());
  }
  return m;
}

void check_subject_disjoint(const std::vector<ManifestEntry>& entries) {
  std::map<std::uint64_t, Split> owner;
  for (const auto& e : entries) {
    auto [it, inserted] = owner.emplace(e.subject_seed, e.split);
    if (!inserted && it->second != e.split)
      throw std::runtime_error("split leakage: sampler seed " + std::to_string(e.subject_seed) + " appears in both " +
                               std::string(split_name(it->second)) + " and " + std::string(split_name(e.split)));
  }
}

Dataset load_dataset(const DatasetManifest& m, bool train, bool val, bool test) {
  check_subject_disjoint(m.entries);
  Dataset d;
  for (const auto& e : m.entries) {
    const bool want = (e.split == Split::kTrain && train) || (e.split == Split::kVal && val) ||
                      (e.split == Split::kTest && test);
    if (!want) continue;
    Sample s;
    s.id = e.id;
    s.ga_weeks = e.ga_weeks;
    s.subject_seed = e.subject_seed;
    s.volume = read_volume(m.root / e.volume);
    s.pose = read_pose(m.root / e.pose);
    (e.split == Split::kTrain ? d.train : e.split == Split::kVal ? d.val : d.test).push_back(std::move(s));
  }
  return d;
}

}  // namespace fetalpose
