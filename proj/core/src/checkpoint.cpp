#include "fetalpose/checkpoint.hpp"

#include <stdexcept>

#include "json_util.hpp"

namespace fetalpose {

using detail::json;
namespace fs = std::filesystem;

fs::path checkpoint_base(const fs::path& p) {
  std::string s = p.string();
  for (const char* ext : {".ckpt.json", ".ckpt.bin"})
    if (s.ends_with(ext)) return fs::path(s.substr(0, s.size() - std::string(ext).size()));
  return p;
}

void save_checkpoint(const fs::path& base_in, const Hourglass<float>& model) {
  const fs::path base = checkpoint_base(base_in);
  const auto& c = model.config();
  json manifest;
  manifest["config"] = {{"in_channels", c.in_channels},
                        {"base_channels", c.base_channels},
                        {"num_scales", c.num_scales},
                        {"resblocks_per_scale", c.resblocks_per_scale},
                        {"out_channels", c.out_channels}};
  manifest["dtype"] = "f32";
  manifest["byte_order"] = "little";
  manifest["blob"] = base.filename().string() + ".ckpt.bin";
  json params = json::array();
  std::vector<float> blob;
  blob.reserve(model.param_count());
  for (const auto& p : model.params()) {
    params.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", blob.size()}, {"len", p.value.size()}});
    blob.insert(blob.end(), p.value.values().begin(), p.value.values().end());
  }
  manifest["params"] = params;
  detail::write_json_file(detail::with_suffix(base, ".ckpt.json"), manifest);
  detail::write_f32(detail::with_suffix(base, ".ckpt.bin"), blob);
}

Hourglass<float> load_checkpoint(const fs::path& base_in) {
  const fs::path base = checkpoint_base(base_in);
  const json manifest = detail::read_json_file(detail::with_suffix(base, ".ckpt.json"));
  try {
    const json& jc = manifest.at("config");
    HourglassConfig cfg;
    cfg.in_channels = jc.at("in_channels");
    cfg.base_channels = jc.at("base_channels");
    cfg.num_scales = jc.at("num_scales");
    cfg.resblocks_per_scale = jc.at("resblocks_per_scale");
    cfg.out_channels = jc.at("out_channels");
    if (manifest.value("dtype", "f32") != "f32") throw std::runtime_error("unsupported checkpoint dtype");
    Hourglass<float> model = Hourglass<float>::zeros(cfg);
    const auto blob = detail::read_f32(detail::with_suffix(base, ".ckpt.bin"), model.param_count());
    for (const json& jp : manifest.at("params")) {
      auto& p = model.param(jp.at("name").get<std::string>());
      const auto shape = jp.at("shape").get<std::vector<int>>();
      const auto offset = jp.at("offset").get<std::size_t>();
      const auto len = jp.at("len").get<std::size_t>();
      if (shape != p.value.shape() || len != p.value.size() || offset + len > blob.size())
        throw std::runtime_error("parameter " + p.name + " does not match the configured topology");
      std::copy(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                blob.begin() + static_cast<std::ptrdiff_t>(offset + len), p.value.values().begin());
    }
    return model;
  } catch (const json::exception& e) {
    throw std::runtime_error("bad checkpoint manifest " + base.string() + ".ckpt.json: " + e.what());
  }
}

}  // namespace fetalpose
