#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fetalpose/phantom.hpp"
#include "fetalpose/volume.hpp"

namespace fetalpose {

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };
std::string_view split_name(Split s);

struct Sample {
  std::string id;
  Volume volume;
  Pose pose;
  double ga_weeks = 30.0;
  std::uint64_t subject_seed = 0;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

struct ManifestEntry {
  std::string id;
  Split split = Split::kTrain;
  std::string volume;  // base path relative to the manifest directory
  std::string pose;
  double ga_weeks = 30.0;
  std::uint64_t subject_seed = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::array<double, 3> fractions{0.60, 0.15, 0.25};
  std::array<double, 2> ga_range{kMinGestationalAge, kMaxGestationalAge};
  std::uint64_t seed = 0;
  PhantomConfig phantom;
  GeneratorTruth truth;
  std::vector<ManifestEntry> entries;
};

inline constexpr std::array<double, 3> kDefaultSplitFractions{0.60, 0.15, 0.25};

/// Largest-remainder rounding of n * fractions; ties go to the earlier split.
std::array<int, 3> split_counts(int n, std::array<double, 3> fractions);

/// Per-subject sampler seed for sample `index` of a dataset seeded with `seed`.
std::uint64_t subject_seed(std::uint64_t dataset_seed, int index);

struct SubjectPose {
  Pose pose;
  double ga_weeks = 30.0;
};

/// Pose and GA of a subject without rendering; generate_sample draws the
/// same values from the same seed.
SubjectPose sample_subject(std::uint64_t subject_seed, std::array<double, 2> ga_range, const PhantomConfig& cfg,
                           const GeneratorTruth& truth, const SkeletonSpec& skeleton = fetal_skeleton());

/// Generates one phantom subject from its sampler seed.
Sample generate_sample(const std::string& id, std::uint64_t subject_seed, std::array<double, 2> ga_range,
                       const PhantomConfig& cfg, const GeneratorTruth& truth,
                       const SkeletonSpec& skeleton = fetal_skeleton());

/// In-memory dataset; identical content to what make_dataset writes.
Dataset generate_dataset(int n, std::array<double, 3> fractions, const PhantomConfig& cfg,
                         const GeneratorTruth& truth, std::uint64_t seed,
                         std::array<double, 2> ga_range = {kMinGestationalAge, kMaxGestationalAge});

/// Writes volumes, poses and `manifest.json` under out_dir.
DatasetManifest make_dataset(int n, std::array<double, 3> fractions, const PhantomConfig& cfg,
                             const GeneratorTruth& truth, std::uint64_t seed,
                             const std::filesystem::path& out_dir,
                             std::array<double, 2> ga_range = {kMinGestationalAge, kMaxGestationalAge});

void write_manifest(const std::filesystem::path& file, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& file);

/// Throws std::runtime_error when a sampler seed appears in two splits.
void check_subject_disjoint(const std::vector<ManifestEntry>& entries);

/// Loads the listed splits' volumes and poses.
Dataset load_dataset(const DatasetManifest& manifest, bool train = true, bool val = true, bool test = true);

}  // namespace fetalpose
