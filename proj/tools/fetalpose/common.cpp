#include "common.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace fetalpose::cli {

Log::~Log() { std::cout << line_ << '\n' << std::flush; }

std::string Log::quote(const std::string& s) {
  if (!s.empty() && s.find_first_of(" \"=\t") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void echo_config(const std::string& command, const json& config) {
  std::cout << "event=config command=" << command << " config=" << config.dump() << '\n';
}

json to_json(const TrainConfig& c) {
  return {{"lr_max", c.lr_max},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"patch_size", c.patch_size},
          {"patches_per_volume", c.patches_per_volume},
          {"restart_t0", c.restart_t0},
          {"restart_tmult", c.restart_tmult},
          {"keypoint_centered_fraction", c.keypoint_centered_fraction},
          {"center_jitter", c.center_jitter},
          {"heatmap_sigma", c.heatmap_sigma},
          {"foreground_weight", c.foreground_weight},
          {"head_lr_scale", c.head_lr_scale},
          {"max_val_patches", c.max_val_patches},
          {"seed", c.seed},
          {"augment",
           {{"intensity_lo", c.augment.intensity_lo},
            {"intensity_hi", c.augment.intensity_hi},
            {"max_rot_deg", c.augment.max_rot_deg},
            {"flip_prob", c.augment.flip_prob}}}};
}

void merge_json(TrainConfig& c, const json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "lr_max") c.lr_max = value;
    else if (key == "weight_decay") c.weight_decay = value;
    else if (key == "epochs") c.epochs = value;
    else if (key == "batch_size") c.batch_size = value;
    else if (key == "patch_size") c.patch_size = value;
    else if (key == "patches_per_volume") c.patches_per_volume = value;
    else if (key == "restart_t0") c.restart_t0 = value;
    else if (key == "restart_tmult") c.restart_tmult = value;
    else if (key == "keypoint_centered_fraction") c.keypoint_centered_fraction = value;
    else if (key == "center_jitter") c.center_jitter = value;
    else if (key == "heatmap_sigma") c.heatmap_sigma = value;
    else if (key == "foreground_weight") c.foreground_weight = value;
    else if (key == "head_lr_scale") c.head_lr_scale = value;
    else if (key == "max_val_patches") c.max_val_patches = value;
    else if (key == "seed") c.seed = value;
    else if (key == "augment") {
      for (const auto& [k, v] : value.items()) {
        if (k == "intensity_lo") c.augment.intensity_lo = v;
        else if (k == "intensity_hi") c.augment.intensity_hi = v;
        else if (k == "max_rot_deg") c.augment.max_rot_deg = v;
        else if (k == "flip_prob") c.augment.flip_prob = v;
        else throw std::invalid_argument("unknown augment key: " + k);
      }
    } else {
      throw std::invalid_argument("unknown train config key: " + key);
    }
  }
}

json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("bad JSON in " + file.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& file, const json& j) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

json pose_json(const Pose& pose) {
  json j = json::object();
  const auto& names = fetal_skeleton().keypoints;
  for (int i = 0; i < pose.size(); ++i) {
    const Vec3 c = pose.coords[static_cast<std::size_t>(i)];
    const std::string key = pose.size() == fetal_skeleton().size() ? names[static_cast<std::size_t>(i)] : std::to_string(i);
    j[key] = {c.x, c.y, c.z};
  }
  return j;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace fetalpose::cli
