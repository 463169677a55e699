#include "fetalpose/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace fetalpose {

void PhantomConfig::validate() const {
  if (!(ga_weeks >= kMinGestationalAge && ga_weeks <= kMaxGestationalAge))
    throw std::invalid_argument("gestational age must lie in [25, 35] weeks, got " + std::to_string(ga_weeks));
  if (!dims.positive()) throw std::invalid_argument("phantom dims must be positive");
  if (!(spacing_mm.x > 0 && spacing_mm.y > 0 && spacing_mm.z > 0)) throw std::invalid_argument("spacing must be positive");
  if (!(blob_radius_mm > 0) || !(limb_radius_mm > 0)) throw std::invalid_argument("blob and limb radii must be positive");
  if (!(background_noise_sigma >= 0)) throw std::invalid_argument("noise sigma must be non-negative");
  if (margin_voxels < 0) throw std::invalid_argument("margin must be non-negative");
}

void GeneratorTruth::validate(const SkeletonSpec& skeleton) const {
  const std::size_t e = skeleton.edges.size(), k = skeleton.keypoints.size();
  if (proportions.size() != e || directions.size() != e || cone_deg.size() != e)
    throw std::invalid_argument("generator truth does not match the skeleton's edge count");
  if (keypoint_amplitude.size() != k || keypoint_radius_scale.size() != k)
    throw std::invalid_argument("generator truth does not match the skeleton's keypoint count");
  for (double p : proportions)
    if (!(p > 0)) throw std::invalid_argument("bone proportions must be positive");
  if (!(r_t(kMinGestationalAge) > 0 && r_t(kMaxGestationalAge) > 0)) throw std::invalid_argument("scale law must stay positive");
  if (!(length_jitter >= 0)) throw std::invalid_argument("length jitter must be non-negative");
}

GeneratorTruth GeneratorTruth::fetal_default() {
  const SkeletonSpec& sk = fetal_skeleton();
  GeneratorTruth t;
  struct Bone {
    double proportion;
    Vec3 left_direction;
    double cone;
  };
  auto bone_of = [](std::string_view child) -> Bone {
    const auto g = group_of(child);
    if (g == "hip") return {0.60, {1.0, 0.0, -0.4}, 10.0};
    if (g == "knee") return {1.15, {0.25, 1.0, 0.3}, 30.0};
    if (g == "ankle") return {1.00, {0.0, -0.3, -1.0}, 30.0};
    if (g == "shoulder") return {1.65, {0.45, 0.0, 1.0}, 10.0};
    if (g == "elbow") return {0.85, {0.4, 0.7, -0.6}, 30.0};
    if (g == "wrist") return {0.75, {-0.4, 0.8, 0.4}, 35.0};
    if (g == "eye") return {1.00, {-0.2, 0.5, 1.0}, 12.0};
    throw std::logic_error("unexpected bone child");
  };
  for (auto [parent, child] : sk.edges) {
    const std::string& name = sk.keypoints[static_cast<std::size_t>(child)];
    Bone b = bone_of(name);
    Vec3 d = b.left_direction;
    if (name.ends_with("_R")) d.x = -d.x;
    t.proportions.push_back(b.proportion);
    t.directions.push_back(normalized(d));
    t.cone_deg.push_back(b.cone);
  }
  // proportions average to one so r_t is the mean bone length
  const double mean = std::accumulate(t.proportions.begin(), t.proportions.end(), 0.0) / double(t.proportions.size());
  for (double& p : t.proportions) p /= mean;

  for (const auto& name : sk.keypoints) {
    const auto g = group_of(name);
    // no two groups share an (amplitude, radius) signature
    double amp = 1.0, radius = 1.0;
    if (g == "bladder") amp = 1.5, radius = 1.6;
    if (g == "eye") amp = 1.3, radius = 0.7;
    if (g == "shoulder") amp = 1.15, radius = 1.25;
    if (g == "elbow") amp = 0.95, radius = 1.0;
    if (g == "wrist") amp = 0.8, radius = 0.75;
    if (g == "hip") amp = 0.7, radius = 1.15;
    if (g == "knee") amp = 1.05, radius = 0.85;
    if (g == "ankle") amp = 0.6, radius = 0.9;
    if (name.ends_with("_L")) radius *= 1.2;
    if (name.ends_with("_R")) radius *= 0.85;
    t.keypoint_amplitude.push_back(amp);
    t.keypoint_radius_scale.push_back(radius);
  }
  return t;
}

namespace {

// Unit vector drawn uniformly from the spherical cap of half-angle `cone_deg` around `axis`.
Vec3 sample_in_cone(Vec3 axis, double cone_deg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double cos_max = std::cos(cone_deg * std::numbers::pi / 180.0);
  const double cos_t = 1.0 - unit(rng) * (1.0 - cos_max);
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  const double phi = 2.0 * std::numbers::pi * unit(rng);
  const Vec3 helper = std::abs(axis.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 u = normalized(cross(axis, helper));
  const Vec3 v = cross(axis, u);
  return axis * cos_t + u * (sin_t * std::cos(phi)) + v * (sin_t * std::sin(phi));
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double w = n(rng), x = n(rng), y = n(rng), z = n(rng);
  const double len = std::sqrt(w * w + x * x + y * y + z * z);
  w /= len, x /= len, y /= len, z /= len;
  return {{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),  //
           2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),  //
           2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
}

int root_of(const SkeletonSpec& sk) {
  std::vector<bool> is_child(static_cast<std::size_t>(sk.size()), false);
  for (auto [p, c] : sk.edges) is_child[static_cast<std::size_t>(c)] = true;
  for (auto [p, c] : sk.edges)
    if (!is_child[static_cast<std::size_t>(p)]) return p;
  return 0;
}

}  // namespace

Pose sample_pose(const PhantomConfig& cfg, const GeneratorTruth& truth, const SkeletonSpec& skeleton,
                 std::mt19937_64& rng) {
  cfg.validate();
  truth.validate(skeleton);
  const int n = skeleton.size();
  const double r = truth.r_t(cfg.ga_weeks);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // children in traversal order from the root
  const int root = root_of(skeleton);
  std::vector<std::vector<int>> out_edges(static_cast<std::size_t>(n));
  for (std::size_t e = 0; e < skeleton.edges.size(); ++e)
    out_edges[static_cast<std::size_t>(skeleton.edges[e].first)].push_back(static_cast<int>(e));

  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<Vec3> body(static_cast<std::size_t>(n));
    std::vector<int> stack{root};
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      for (int e : out_edges[static_cast<std::size_t>(p)]) {
        const auto ue = static_cast<std::size_t>(e);
        const Vec3 dir = truth.cone_deg[ue] > 0 ? sample_in_cone(truth.directions[ue], truth.cone_deg[ue], rng)
                                                 : truth.directions[ue];
        const double j = truth.length_jitter > 0 ? truth.length_jitter * jitter(rng) : 0.0;
        const double length_mm = truth.proportions[ue] * r * (1.0 + j);
        const int c = skeleton.edges[ue].second;
        body[static_cast<std::size_t>(c)] = body[static_cast<std::size_t>(p)] + dir * length_mm;
        stack.push_back(c);
      }
    }
    const Mat3 rot = random_rotation(rng);
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    std::vector<Vec3> vox(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const Vec3 mm = rot * body[static_cast<std::size_t>(i)];
      Vec3 v{mm.x / cfg.spacing_mm.x, mm.y / cfg.spacing_mm.y, mm.z / cfg.spacing_mm.z};
      vox[static_cast<std::size_t>(i)] = v;
      for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], v[a]), hi[a] = std::max(hi[a], v[a]);
    }
    Vec3 shift;
    bool fits = true;
    for (int a = 0; a < 3; ++a) {
      const double min_t = cfg.margin_voxels - lo[a];
      const double max_t = (cfg.dims[a] - 1 - cfg.margin_voxels) - hi[a];
      if (max_t < min_t) {
        fits = false;
        break;
      }
      shift[a] = min_t + unit(rng) * (max_t - min_t);
    }
    if (!fits) continue;
    Pose pose;
    for (const Vec3& v : vox) pose.coords.push_back(v + shift);
    return pose;
  }
  throw std::runtime_error("could not place a GA " + std::to_string(cfg.ga_weeks) + " pose inside a " +
                           to_string(cfg.dims) + " volume after 100 tries; volume too small for this GA");
}

namespace {

double segment_distance_sq(Vec3 p, Vec3 a, Vec3 b) {
  const Vec3 ab = b - a;
  const double len_sq = dot(ab, ab);
  double t = len_sq > 0 ? dot(p - a, ab) / len_sq : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3 d = p - (a + ab * t);
  return dot(d, d);
}

// Voxel index range [lo, hi] along each axis covering a mm-space box.
struct Box {
  int lo[3];
  int hi[3];
};

Box covering_box(Vec3 lo_mm, Vec3 hi_mm, Vec3 spacing, Dims dims) {
  Box b;
  for (int a = 0; a < 3; ++a) {
    b.lo[a] = std::max(0, static_cast<int>(std::floor(lo_mm[a] / spacing[a])));
    b.hi[a] = std::min(dims[a] - 1, static_cast<int>(std::ceil(hi_mm[a] / spacing[a])));
  }
  return b;
}

}  // namespace

Volume render_phantom(const Pose& pose, const SkeletonSpec& skeleton, const GeneratorTruth& truth,
                      const PhantomConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  truth.validate(skeleton);
  if (pose.size() != skeleton.size()) throw std::invalid_argument("pose does not match skeleton");
  Volume vol(cfg.dims, cfg.spacing_mm);
  const Vec3 sp = cfg.spacing_mm;
  const auto mm = pose.in_mm(sp);
  constexpr double kSupport = 6.0;  // sigmas

  for (int j = 0; j < pose.size(); ++j) {
    const double sigma = cfg.blob_radius_mm * truth.keypoint_radius_scale[static_cast<std::size_t>(j)];
    const double amp = truth.keypoint_amplitude[static_cast<std::size_t>(j)];
    const Vec3 c = mm[static_cast<std::size_t>(j)];
    const Vec3 reach{kSupport * sigma, kSupport * sigma, kSupport * sigma};
    const Box b = covering_box(c - reach, c + reach, sp, cfg.dims);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int z = b.lo[2]; z <= b.hi[2]; ++z)
      for (int y = b.lo[1]; y <= b.hi[1]; ++y)
        for (int x = b.lo[0]; x <= b.hi[0]; ++x) {
          const Vec3 d = Vec3{x * sp.x, y * sp.y, z * sp.z} - c;
          vol.at(x, y, z) += static_cast<float>(amp * std::exp(-dot(d, d) * inv));
        }
  }

  const double w = cfg.limb_radius_mm;
  const double inv_w = 1.0 / (2.0 * w * w);
  for (auto [i, j] : skeleton.edges) {
    const Vec3 a = mm[static_cast<std::size_t>(i)], bb = mm[static_cast<std::size_t>(j)];
    Vec3 lo{std::min(a.x, bb.x), std::min(a.y, bb.y), std::min(a.z, bb.z)};
    Vec3 hi{std::max(a.x, bb.x), std::max(a.y, bb.y), std::max(a.z, bb.z)};
    const Vec3 reach{kSupport * w, kSupport * w, kSupport * w};
    const Box b = covering_box(lo - reach, hi + reach, sp, cfg.dims);
    for (int z = b.lo[2]; z <= b.hi[2]; ++z)
      for (int y = b.lo[1]; y <= b.hi[1]; ++y)
        for (int x = b.lo[0]; x <= b.hi[0]; ++x) {
          const double d2 = segment_distance_sq({x * sp.x, y * sp.y, z * sp.z}, a, bb);
          if (d2 > kSupport * kSupport * w * w) continue;
          vol.at(x, y, z) += static_cast<float>(cfg.limb_intensity * std::exp(-d2 * inv_w));
        }
  }

  if (cfg.background_noise_sigma > 0) {
    std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg.background_noise_sigma));
    for (float& v : vol.data()) v += noise(rng);
  }
  for (float& v : vol.data()) v = std::max(v, 0.0f);
  return vol;
}

}  // namespace fetalpose
