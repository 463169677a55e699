#include "fetalpose/mrf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"

namespace fetalpose {

using detail::json;

void EnergyParams::validate() const {
  if (!(alpha >= 0)) throw std::invalid_argument("alpha must be non-negative");
  if (L < 1) throw std::invalid_argument("L must be >= 1");
  if (!(clamp_eps > 0 && clamp_eps < 1)) throw std::invalid_argument("clamp_eps must lie in (0, 1)");
  if (!(floor_ratio >= 0 && floor_ratio < 1)) throw std::invalid_argument("floor_ratio must lie in [0, 1)");
}

std::uint64_t CandidateSet::configurations() const {
  std::uint64_t n = 1;
  for (const auto& s : states) {
    const auto k = static_cast<std::uint64_t>(s.size());
    if (k != 0 && n > std::numeric_limits<std::uint64_t>::max() / k) return std::numeric_limits<std::uint64_t>::max();
    n *= k;
  }
  return n;
}

void CandidateSet::validate() const {
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].empty()) throw std::invalid_argument("keypoint " + std::to_string(i) + " has no candidate states");
    for (const auto& c : states[i])
      if (!c.location.finite() || !std::isfinite(c.value))
        throw std::invalid_argument("keypoint " + std::to_string(i) + " has a non-finite candidate");
  }
}

void BoneStats::validate(const SkeletonSpec& skeleton) const {
  if (edges.size() != skeleton.edges.size())
    throw std::invalid_argument("bone stats list " + std::to_string(edges.size()) + " edges, skeleton has " +
                                std::to_string(skeleton.edges.size()));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [i, j] = skeleton.edges[e];
    if (edges[e].i != i || edges[e].j != j)
      throw std::invalid_argument("bone stats edge " + std::to_string(e) + " does not match the skeleton");
    if (!(edges[e].var > 0) || !std::isfinite(edges[e].mu))
      throw std::invalid_argument("bone stats edge " + std::to_string(e) + " needs finite mu and var > 0");
  }
  if (!(ga_range[0] <= ga_range[1]) || !(r_t(ga_range[0]) > 0 && r_t(ga_range[1]) > 0))
    throw std::invalid_argument("scale model r_t must be positive over the GA range");
}

double unary_energy(double heatmap_value, const EnergyParams& params) {
  double v = heatmap_value;
  if (!(v >= params.clamp_eps)) v = params.clamp_eps;  // also catches NaN
  if (v > 1.0) v = 1.0;
  return -std::log(v);
}

double pairwise_energy(Vec3 xi_mm, Vec3 xj_mm, int edge, const BoneStats& stats, double ga_weeks,
                       const EnergyParams& params) {
  if (edge < 0 || static_cast<std::size_t>(edge) >= stats.edges.size())
    throw std::out_of_range("unknown edge " + std::to_string(edge));
  if (!(ga_weeks >= stats.ga_range[0] && ga_weeks <= stats.ga_range[1]))
    throw std::invalid_argument("gestational age " + std::to_string(ga_weeks) + " outside the scale model range [" +
                                std::to_string(stats.ga_range[0]) + ", " + std::to_string(stats.ga_range[1]) + "]");
  const EdgeStats& s = stats.edges[static_cast<std::size_t>(edge)];
  const double dev = (xi_mm - xj_mm).norm() / stats.r_t(ga_weeks) - s.mu;
  return params.alpha * dev * dev / s.var;
}

namespace {

struct Tables {
  std::vector<std::vector<double>> unary;          // [node][state]
  std::vector<std::vector<double>> pair;           // [edge][s_i * |S_j| + s_j]
  std::vector<std::size_t> width;                  // |S_j| per edge
};

void check_problem(const CandidateSet& c, const SkeletonSpec& sk, const BoneStats& stats, double ga,
                   const EnergyParams& params) {
  params.validate();
  c.validate();
  if (c.keypoints() != sk.size())
    throw std::invalid_argument("candidate set covers " + std::to_string(c.keypoints()) + " keypoints, skeleton " +
                                std::to_string(sk.size()));
  stats.validate(sk);
  if (!(ga >= stats.ga_range[0] && ga <= stats.ga_range[1]))
    throw std::invalid_argument("gestational age " + std::to_string(ga) + " outside the scale model range");
}

Vec3 to_mm(const Candidate& c, Vec3 spacing) { return hadamard(c.location, spacing); }

Tables build_tables(const CandidateSet& c, const SkeletonSpec& sk, const BoneStats& stats, double ga,
                    const EnergyParams& params) {
  Tables t;
  for (const auto& states : c.states) {
    std::vector<double> u;
    for (const auto& s : states) u.push_back(unary_energy(s.value, params));
    t.unary.push_back(std::move(u));
  }
  for (std::size_t e = 0; e < sk.edges.size(); ++e) {
    const auto& si = c.states[static_cast<std::size_t>(sk.edges[e].first)];
    const auto& sj = c.states[static_cast<std::size_t>(sk.edges[e].second)];
    std::vector<double> p;
    p.reserve(si.size() * sj.size());
    for (const auto& a : si)
      for (const auto& b : sj)
        p.push_back(pairwise_energy(to_mm(a, c.spacing_mm), to_mm(b, c.spacing_mm), static_cast<int>(e), stats, ga, params));
    t.pair.push_back(std::move(p));
    t.width.push_back(sj.size());
  }
  return t;
}

// Canonical summation order: unaries by keypoint, then pairwise terms by edge.
double config_energy(const Tables& t, const SkeletonSpec& sk, const int* config) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.unary.size(); ++i) s += t.unary[i][static_cast<std::size_t>(config[i])];
  for (std::size_t e = 0; e < sk.edges.size(); ++e)
    s += t.pair[e][static_cast<std::size_t>(config[sk.edges[e].first]) * t.width[e] +
                   static_cast<std::size_t>(config[sk.edges[e].second])];
  return s;
}

double tie_threshold(double best) { return best + kTieTolerance * (1.0 + std::abs(best)); }

Pose pose_of(const CandidateSet& c, const std::vector<int>& config) {
  Pose p;
  for (std::size_t i = 0; i < config.size(); ++i) p.coords.push_back(c.states[i][static_cast<std::size_t>(config[i])].location);
  return p;
}

// Min-sum message passing on a tree rooted at node 0.
class TreeSolver {
 public:
  TreeSolver(const Tables& t, const SkeletonSpec& sk) : t_(t), sk_(sk) {
    const int n = sk.size();
    parent_.assign(static_cast<std::size_t>(n), -1);
    parent_edge_.assign(static_cast<std::size_t>(n), -1);
    std::vector<std::vector<std::pair<int, int>>> adj(static_cast<std::size_t>(n));
    for (std::size_t e = 0; e < sk.edges.size(); ++e) {
      adj[static_cast<std::size_t>(sk.edges[e].first)].push_back({sk.edges[e].second, static_cast<int>(e)});
      adj[static_cast<std::size_t>(sk.edges[e].second)].push_back({sk.edges[e].first, static_cast<int>(e)});
    }
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    order_.push_back(0);
    seen[0] = true;
    for (std::size_t k = 0; k < order_.size(); ++k) {
      const int u = order_[k];
      for (auto [v, e] : adj[static_cast<std::size_t>(u)])
        if (!seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = true;
          parent_[static_cast<std::size_t>(v)] = u;
          parent_edge_[static_cast<std::size_t>(v)] = e;
          order_.push_back(v);
        }
    }
  }

  /// Leaves-to-root pass restricted to fixed[i] (if >= 0); returns the minimum energy.
  double collect(const std::vector<int>& fixed) {
    const std::size_t n = order_.size();
    belief_.assign(n, {});
    best_child_state_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) belief_[i] = t_.unary[i];
    for (std::size_t k = n; k-- > 1;) {
      const auto c = static_cast<std::size_t>(order_[k]);
      const auto p = static_cast<std::size_t>(parent_[c]);
      const auto e = static_cast<std::size_t>(parent_edge_[c]);
      const bool child_first = sk_.edges[e].first == static_cast<int>(c);
      const std::size_t nc = belief_[c].size(), np = belief_[p].size();
      std::vector<int>& arg = best_child_state_[c];
      arg.assign(np, -1);
      for (std::size_t sp = 0; sp < np; ++sp) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t sc = 0; sc < nc; ++sc) {
          if (fixed[c] >= 0 && static_cast<int>(sc) != fixed[c]) continue;
          const double pair = child_first ? t_.pair[e][sc * t_.width[e] + sp] : t_.pair[e][sp * t_.width[e] + sc];
          const double v = belief_[c][sc] + pair;
          if (v < best) {
            best = v;
            arg[sp] = static_cast<int>(sc);
          }
        }
        belief_[p][sp] += best;
      }
    }
    double best = std::numeric_limits<double>::infinity();
    root_state_ = -1;
    for (std::size_t s = 0; s < belief_[0].size(); ++s) {
      if (fixed[0] >= 0 && static_cast<int>(s) != fixed[0]) continue;
      if (belief_[0][s] < best) {
        best = belief_[0][s];
        root_state_ = static_cast<int>(s);
      }
    }
    return best;
  }

  /// Root-to-leaves argmin recovery after collect().
  std::vector<int> backtrack() const {
    std::vector<int> config(order_.size(), -1);
    config[0] = root_state_;
    for (std::size_t k = 1; k < order_.size(); ++k) {
      const auto c = static_cast<std::size_t>(order_[k]);
      config[c] = best_child_state_[c][static_cast<std::size_t>(config[static_cast<std::size_t>(parent_[c])])];
    }
    return config;
  }

 private:
  const Tables& t_;
  const SkeletonSpec& sk_;
  std::vector<int> order_, parent_, parent_edge_;
  std::vector<std::vector<double>> belief_;
  std::vector<std::vector<int>> best_child_state_;
  int root_state_ = -1;
};

}  // namespace

EnergyBreakdown energy_terms(const CandidateSet& c, std::span<const int> config, const SkeletonSpec& sk,
                             const BoneStats& stats, double ga, const EnergyParams& params) {
  if (static_cast<int>(config.size()) != sk.size() || c.keypoints() != sk.size())
    throw std::invalid_argument("configuration length " + std::to_string(config.size()) + " differs from keypoint count " +
                                std::to_string(sk.size()));
  EnergyBreakdown b;
  for (std::size_t i = 0; i < config.size(); ++i) {
    const auto& states = c.states[i];
    if (config[i] < 0 || static_cast<std::size_t>(config[i]) >= states.size())
      throw std::out_of_range("state index out of range for keypoint " + std::to_string(i));
    b.unary.push_back(unary_energy(states[static_cast<std::size_t>(config[i])].value, params));
  }
  for (std::size_t e = 0; e < sk.edges.size(); ++e) {
    const auto [i, j] = sk.edges[e];
    const Candidate& a = c.states[static_cast<std::size_t>(i)][static_cast<std::size_t>(config[static_cast<std::size_t>(i)])];
    const Candidate& d = c.states[static_cast<std::size_t>(j)][static_cast<std::size_t>(config[static_cast<std::size_t>(j)])];
    b.pairwise.push_back(pairwise_energy(to_mm(a, c.spacing_mm), to_mm(d, c.spacing_mm), static_cast<int>(e), stats, ga, params));
  }
  for (double u : b.unary) b.total += u;
  for (double p : b.pairwise) b.total += p;
  return b;
}

double total_energy(const CandidateSet& c, std::span<const int> config, const SkeletonSpec& sk, const BoneStats& stats,
                    double ga, const EnergyParams& params) {
  return energy_terms(c, config, sk, stats, ga, params).total;
}

MapResult map_inference_bp(const CandidateSet& c, const SkeletonSpec& sk, const BoneStats& stats, double ga,
                           const EnergyParams& params) {
  if (!sk.is_tree()) throw std::invalid_argument("skeleton is not a tree; loopy inference is not supported");
  check_problem(c, sk, stats, ga, params);
  const Tables t = build_tables(c, sk, stats, ga, params);
  TreeSolver solver(t, sk);

  std::vector<int> fixed(static_cast<std::size_t>(sk.size()), -1);
  const double best = solver.collect(fixed);
  std::vector<int> config = solver.backtrack();

  // Among minimizers within the tie tolerance, keep the lexicographically
  // smallest tuple: fix keypoints in order to the first state that still
  // admits a completion at the optimum.
  const double limit = tie_threshold(best);
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    const int current = config[i];
    int chosen = current;
    for (int s = 0; s < current; ++s) {
      fixed[i] = s;
      if (solver.collect(fixed) <= limit) {
        chosen = s;
        break;
      }
    }
    fixed[i] = chosen;
    if (chosen != current) {
      solver.collect(fixed);
      config = solver.backtrack();
    }
  }

  MapResult r;
  r.config = config;
  r.pose = pose_of(c, config);
  r.energy = total_energy(c, config, sk, stats, ga, params);
  return r;
}

MapResult brute_force_map(const CandidateSet& c, const SkeletonSpec& sk, const BoneStats& stats, double ga,
                          const EnergyParams& params) {
  check_problem(c, sk, stats, ga, params);
  const std::uint64_t total = c.configurations();
  if (total > kBruteForceLimit)
    throw std::length_error("state space of " + std::to_string(total) + " configurations exceeds the brute-force limit");
  const Tables t = build_tables(c, sk, stats, ga, params);
  const std::size_t n = c.states.size();
  std::vector<int> sizes(n);
  for (std::size_t i = 0; i < n; ++i) sizes[i] = static_cast<int>(c.states[i].size());

  // Lexicographic odometer, last keypoint fastest.
  auto enumerate = [&](auto&& visit) {
    std::vector<int> config(n, 0);
    for (;;) {
      if (visit(config)) return;
      std::size_t k = n;
      while (k > 0) {
        --k;
        if (++config[k] < sizes[k]) break;
        config[k] = 0;
        if (k == 0) return;
      }
      if (n == 0) return;
    }
  };

  double best = std::numeric_limits<double>::infinity();
  enumerate([&](const std::vector<int>& cfg) {
    best = std::min(best, config_energy(t, sk, cfg.data()));
    return false;
  });
  const double limit = tie_threshold(best);
  std::vector<int> chosen;
  enumerate([&](const std::vector<int>& cfg) {
    if (config_energy(t, sk, cfg.data()) <= limit) {
      chosen = cfg;
      return true;
    }
    return false;
  });

  MapResult r;
  r.config = chosen;
  r.pose = pose_of(c, chosen);
  r.energy = total_energy(c, chosen, sk, stats, ga, params);
  return r;
}

Pose argmax_baseline(const HeatmapStack& heatmaps) {
  Pose p;
  for (int j = 0; j < heatmaps.channels(); ++j) p.coords.push_back(argmax_voxel(heatmaps.channel(j), heatmaps.dims()).center());
  return p;
}

CandidateSet extract_candidates(const HeatmapStack& heatmaps, const EnergyParams& params) {
  params.validate();
  CandidateSet c;
  c.spacing_mm = heatmaps.spacing_mm();
  for (int j = 0; j < heatmaps.channels(); ++j) {
    std::vector<Candidate> states;
    for (const auto& m : top_l_local_maxima(heatmaps.channel(j), heatmaps.dims(), params.L, params.floor_ratio))
      states.push_back({m.location.center(), static_cast<double>(m.value)});
    c.states.push_back(std::move(states));
  }
  return c;
}

BoneStats estimate_bone_stats(std::span<const LabeledPose> poses, const SkeletonSpec& sk) {
  if (poses.empty()) throw std::invalid_argument("bone statistics need at least one pose");
  const std::size_t E = sk.edges.size();
  if (E == 0) throw std::invalid_argument("skeleton has no edges");
  std::vector<std::vector<double>> lengths;  // [sample][edge] in mm
  std::vector<double> scale, ga;
  for (const auto& lp : poses) {
    if (lp.pose.size() != sk.size() || !lp.pose.all_finite())
      throw std::invalid_argument("every pose must be complete and finite");
    const auto mm = lp.pose.in_mm(lp.spacing_mm);
    std::vector<double> l;
    for (auto [i, j] : sk.edges) l.push_back((mm[static_cast<std::size_t>(i)] - mm[static_cast<std::size_t>(j)]).norm());
    scale.push_back(std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(E));
    ga.push_back(lp.ga_weeks);
    lengths.push_back(std::move(l));
  }

  BoneStats stats;
  const double n = static_cast<double>(poses.size());
  const double ga_mean = std::accumulate(ga.begin(), ga.end(), 0.0) / n;
  const double scale_mean = std::accumulate(scale.begin(), scale.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < ga.size(); ++k) {
    sxx += (ga[k] - ga_mean) * (ga[k] - ga_mean);
    sxy += (ga[k] - ga_mean) * (scale[k] - scale_mean);
  }
  if (sxx > 1e-12 * n) {
    stats.slope = sxy / sxx;
    stats.intercept = scale_mean - stats.slope * ga_mean;
  } else {
    stats.slope = 0.0;
    stats.intercept = scale_mean;
  }

  for (std::size_t e = 0; e < E; ++e) {
    std::vector<double> normalized;
    for (std::size_t k = 0; k < lengths.size(); ++k) normalized.push_back(lengths[k][e] / stats.r_t(ga[k]));
    const double mu = std::accumulate(normalized.begin(), normalized.end(), 0.0) / n;
    double var = 0.0;
    for (double v : normalized) var += (v - mu) * (v - mu);
    var = normalized.size() > 1 ? var / (n - 1.0) : 0.0;
    stats.edges.push_back({sk.edges[e].first, sk.edges[e].second, mu, std::max(var, kBoneVarianceFloor)});
  }
  return stats;
}

void write_bone_stats(const std::filesystem::path& file, const BoneStats& stats) {
  json edges = json::array();
  for (const auto& e : stats.edges) edges.push_back({{"i", e.i}, {"j", e.j}, {"mu", e.mu}, {"var", e.var}});
  detail::write_json_file(file, json{{"edges", edges},
                                     {"ga_model", {{"slope", stats.slope}, {"intercept", stats.intercept}}},
                                     {"ga_range", stats.ga_range}});
}

BoneStats read_bone_stats(const std::filesystem::path& file) {
  const json j = detail::read_json_file(file);
  BoneStats s;
  try {
    for (const json& e : j.at("edges")) s.edges.push_back({e.at("i"), e.at("j"), e.at("mu"), e.at("var")});
    s.slope = j.at("ga_model").at("slope");
    s.intercept = j.at("ga_model").at("intercept");
    if (j.contains("ga_range")) s.ga_range = j.at("ga_range").get<std::array<double, 2>>();
  } catch (const json::exception& e) {
    throw std::runtime_error("bad bone stats file " + file.string() + ": " + e.what());
  }
  return s;
}

}  // namespace fetalpose
