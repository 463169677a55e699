#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fetalpose/trainer.hpp"

namespace fetalpose::cli {

using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kValidationFailure = 1, kCheckFailure = 2 };

/// Assertion-style failure (oracle mismatch, leakage); exits with kCheckFailure.
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path out_dir = "fetalpose_out";
};

/// One line of space-separated key=value pairs on stdout.
class Log {
 public:
  explicit Log(std::string event) { line_ = "event=" + event; }
  template <typename V>
  Log& kv(const std::string& key, const V& value) {
    if constexpr (std::is_convertible_v<V, std::string>) {
      line_ += " " + key + "=" + quote(std::string(value));
    } else if constexpr (std::is_floating_point_v<V>) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6g", static_cast<double>(value));
      line_ += " " + key + "=" + buf;
    } else {
      line_ += " " + key + "=" + std::to_string(value);
    }
    return *this;
  }
  ~Log();

 private:
  static std::string quote(const std::string& s);
  std::string line_;
};

/// Prints `config=<json>` so every run records what it actually used.
void echo_config(const std::string& command, const json& config);

json to_json(const TrainConfig& c);
/// Overlays the keys present in j onto c; unknown keys are rejected.
void merge_json(TrainConfig& c, const json& j);
json read_json(const std::filesystem::path& file);
void write_json(const std::filesystem::path& file, const json& j);

json pose_json(const Pose& pose);

/// Runs fn(i) for i in [0, n) on up to `threads` workers; results must be
/// written by index so output order does not depend on scheduling.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

struct TrainedArtifacts {
  std::filesystem::path checkpoint;
  std::filesystem::path stats;
};

/// Trains on the manifest's train/val splits and writes the checkpoint, bone
/// statistics of the training split, and the training report under out_dir.
TrainedArtifacts train_from_manifest(const std::filesystem::path& manifest, const TrainConfig& cfg,
                                     const HourglassConfig& model, const std::filesystem::path& out_dir,
                                     int checkpoint_every, const json& echoed);

void register_data_commands(CLI::App& app, GlobalOptions& global, std::function<int()>& run);
void register_infer_commands(CLI::App& app, GlobalOptions& global, std::function<int()>& run);
void register_check_commands(CLI::App& app, GlobalOptions& global, std::function<int()>& run);

}  // namespace fetalpose::cli
