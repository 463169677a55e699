#include "fetalpose/skeleton.hpp"

#include <numeric>
#include <stdexcept>

namespace fetalpose {

int SkeletonSpec::index_of(std::string_view name) const {
  for (int i = 0; i < size(); ++i)
    if (keypoints[static_cast<std::size_t>(i)] == name) return i;
  return -1;
}

std::vector<std::vector<int>> SkeletonSpec::adjacency() const {
  std::vector<std::vector<int>> adj(keypoints.size());
  for (auto [i, j] : edges) {
    adj[static_cast<std::size_t>(i)].push_back(j);
    adj[static_cast<std::size_t>(j)].push_back(i);
  }
  return adj;
}

bool SkeletonSpec::is_tree() const {
  const int n = size();
  if (n == 0) return false;
  if (static_cast<int>(edges.size()) != n - 1) return false;
  // union-find: n-1 edges and no cycle => spanning tree
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  };
  for (auto [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j) return false;
    const int ri = find(i), rj = find(j);
    if (ri == rj) return false;
    parent[static_cast<std::size_t>(ri)] = rj;
  }
  return true;
}

void SkeletonSpec::validate() const {
  if (!is_tree()) throw std::invalid_argument("skeleton edges do not form a spanning tree");
  if (mirror_map.size() != keypoints.size()) throw std::invalid_argument("mirror map size differs from keypoint count");
  for (int i = 0; i < size(); ++i) {
    const int m = mirror_map[static_cast<std::size_t>(i)];
    if (m < 0 || m >= size() || mirror_map[static_cast<std::size_t>(m)] != i)
      throw std::invalid_argument("mirror map is not an involution at keypoint " + keypoints[static_cast<std::size_t>(i)]);
  }
}

const SkeletonSpec& fetal_skeleton() {
  static const SkeletonSpec spec = [] {
    SkeletonSpec s;
    for (auto name : kFetalKeypoints) s.keypoints.emplace_back(name);
    auto id = [&](std::string_view n) { return s.index_of(n); };
    // parent -> child, rooted at the bladder
    const std::pair<std::string_view, std::string_view> bones[] = {
        {"bladder", "hip_L"},       {"bladder", "hip_R"},     {"hip_L", "knee_L"},        {"hip_R", "knee_R"},
        {"knee_L", "ankle_L"},      {"knee_R", "ankle_R"},    {"bladder", "shoulder_L"},  {"bladder", "shoulder_R"},
        {"shoulder_L", "elbow_L"},  {"shoulder_R", "elbow_R"}, {"elbow_L", "wrist_L"},    {"elbow_R", "wrist_R"},
        {"shoulder_L", "eye_L"},    {"shoulder_R", "eye_R"}};
    for (auto [a, b] : bones) s.edges.emplace_back(id(a), id(b));
    s.mirror_map.resize(s.keypoints.size());
    for (int i = 0; i < s.size(); ++i) {
      std::string name = s.keypoints[static_cast<std::size_t>(i)];
      if (name.ends_with("_L"))
        name.back() = 'R';
      else if (name.ends_with("_R"))
        name.back() = 'L';
      s.mirror_map[static_cast<std::size_t>(i)] = id(name);
    }
    s.validate();
    return s;
  }();
  return spec;
}

std::string_view group_of(std::string_view keypoint) {
  if (keypoint.ends_with("_L") || keypoint.ends_with("_R")) keypoint.remove_suffix(2);
  return keypoint;
}

}  // namespace fetalpose
