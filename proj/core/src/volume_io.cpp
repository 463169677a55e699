#include "fetalpose/volume_io.hpp"

#include <stdexcept>

#include "json_util.hpp"

namespace fetalpose {

using detail::json;
using detail::with_suffix;

namespace fs = std::filesystem;

fs::path volume_base(const fs::path& p) {
  std::string s = p.string();
  for (const char* ext : {".vol.json", ".vol.raw", ".vol"})
    if (s.ends_with(ext)) return fs::path(s.substr(0, s.size() - std::string(ext).size()));
  return p;
}

namespace {

json sidecar(Dims d, Vec3 spacing) {
  return json{{"dims", {d.x, d.y, d.z}},
              {"spacing_mm", {spacing.x, spacing.y, spacing.z}},
              {"dtype", "f32"},
              {"byte_order", "little"},
              {"layout", "x-fastest"}};
}

struct Header {
  Dims dims;
  Vec3 spacing;
  int channels = 1;
};

Header parse_sidecar(const fs::path& file) {
  const json j = detail::read_json_file(file);
  try {
    if (j.at("dtype").get<std::string>() != "f32") throw std::runtime_error("unsupported dtype in " + file.string());
    if (j.at("byte_order").get<std::string>() != "little")
      throw std::runtime_error("unsupported byte order in " + file.string());
    if (j.at("layout").get<std::string>() != "x-fastest")
      throw std::runtime_error("unsupported layout in " + file.string());
    const auto d = j.at("dims").get<std::vector<int>>();
    const auto s = j.at("spacing_mm").get<std::vector<double>>();
    if (d.size() != 3 || s.size() != 3) throw std::runtime_error("dims and spacing_mm need 3 entries in " + file.string());
    Header h{{d[0], d[1], d[2]}, {s[0], s[1], s[2]}, j.value("channels", 1)};
    if (!h.dims.positive() || h.channels < 1) throw std::runtime_error("non-positive extents in " + file.string());
    return h;
  } catch (const json::exception& e) {
    throw std::runtime_error("bad volume sidecar " + file.string() + ": " + e.what());
  }
}

}  // namespace

void write_volume(const fs::path& base_in, const Volume& volume) {
  const fs::path base = volume_base(base_in);
  detail::write_json_file(with_suffix(base, ".vol.json"), sidecar(volume.dims(), volume.spacing_mm()));
  detail::write_f32(with_suffix(base, ".vol.raw"), volume.data());
}

Volume read_volume(const fs::path& base_in) {
  const fs::path base = volume_base(base_in);
  const Header h = parse_sidecar(with_suffix(base, ".vol.json"));
  if (h.channels != 1) throw std::runtime_error(base.string() + " is a multi-channel stack, not a volume");
  auto data = detail::read_f32(with_suffix(base, ".vol.raw"), h.dims.voxels());
  return Volume(h.dims, h.spacing, std::move(data));
}

void write_heatmaps(const fs::path& base_in, const HeatmapStack& heatmaps, const SkeletonSpec& skeleton) {
  const fs::path base = volume_base(base_in);
  json j = sidecar(heatmaps.dims(), heatmaps.spacing_mm());
  j["channels"] = heatmaps.channels();
  if (skeleton.size() == heatmaps.channels()) j["keypoints"] = skeleton.keypoints;
  detail::write_json_file(with_suffix(base, ".vol.json"), j);
  detail::write_f32(with_suffix(base, ".vol.raw"), heatmaps.data());
}

HeatmapStack read_heatmaps(const fs::path& base_in) {
  const fs::path base = volume_base(base_in);
  const Header h = parse_sidecar(with_suffix(base, ".vol.json"));
  HeatmapStack out(h.channels, h.dims, h.spacing);
  auto data = detail::read_f32(with_suffix(base, ".vol.raw"), h.dims.voxels() * static_cast<std::size_t>(h.channels));
  std::copy(data.begin(), data.end(), out.data().begin());
  return out;
}

void write_pose(const fs::path& file, const Pose& pose, const SkeletonSpec& skeleton) {
  if (pose.size() != skeleton.size())
    throw std::invalid_argument("pose has " + std::to_string(pose.size()) + " keypoints, skeleton " +
                                std::to_string(skeleton.size()));
  json j = json::object();
  for (int i = 0; i < pose.size(); ++i) {
    const Vec3 c = pose.coords[static_cast<std::size_t>(i)];
    j[skeleton.keypoints[static_cast<std::size_t>(i)]] = {c.x, c.y, c.z};
  }
  detail::write_json_file(file, j);
}

Pose read_pose(const fs::path& file, const SkeletonSpec& skeleton) {
  const json j = detail::read_json_file(file);
  Pose pose;
  pose.coords.resize(static_cast<std::size_t>(skeleton.size()));
  for (int i = 0; i < skeleton.size(); ++i) {
    const auto& name = skeleton.keypoints[static_cast<std::size_t>(i)];
    if (!j.contains(name)) throw std::runtime_error(file.string() + " is missing keypoint " + name);
    const auto v = j.at(name).get<std::vector<double>>();
    if (v.size() != 3) throw std::runtime_error(file.string() + ": keypoint " + name + " needs [x,y,z]");
    pose.coords[static_cast<std::size_t>(i)] = {v[0], v[1], v[2]};
  }
  return pose;
}

}  // namespace fetalpose
