#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fetalpose {

/// Keypoint names, tree edges and the left/right mirror involution.
struct SkeletonSpec {
  std::vector<std::string> keypoints;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> mirror_map;

  int size() const { return static_cast<int>(keypoints.size()); }
  int index_of(std::string_view name) const;  // -1 if absent

  /// Throws std::invalid_argument unless edges form a spanning tree and
  /// mirror_map is an involution over the keypoint indices.
  void validate() const;
  bool is_tree() const;

  /// Neighbor lists derived from the edge list.
  std::vector<std::vector<int>> adjacency() const;
};

/// Canonical fetal keypoint order.
inline constexpr std::array<std::string_view, 15> kFetalKeypoints = {
    "ankle_L", "ankle_R", "knee_L",  "knee_R",     "hip_L",      "hip_R",   "bladder", "shoulder_L",
    "shoulder_R", "elbow_L", "elbow_R", "wrist_L", "wrist_R", "eye_L", "eye_R"};

inline constexpr int kFetalKeypointCount = static_cast<int>(kFetalKeypoints.size());

/// 15-node fetal skeleton: legs and shoulders chain to the bladder, arms and
/// eyes hang off the shoulders. 14 edges, bladder is its own mirror.
const SkeletonSpec& fetal_skeleton();

/// Table-1 style keypoint groups (left/right pooled).
inline constexpr std::array<std::string_view, 8> kKeypointGroups = {
    "wrist", "elbow", "shoulder", "eye", "bladder", "hip", "knee", "ankle"};

/// Group name of a keypoint ("wrist_L" -> "wrist").
std::string_view group_of(std::string_view keypoint);

}  // namespace fetalpose
