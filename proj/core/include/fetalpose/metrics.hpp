#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fetalpose/skeleton.hpp"
#include "fetalpose/volume.hpp"

namespace fetalpose {

inline constexpr double kPckThresholdsMm[] = {5.0, 10.0};

/// Euclidean distance in mm per keypoint.
std::vector<double> keypoint_errors(const Pose& pred, const Pose& truth, Vec3 spacing_mm);

/// Fraction of errors <= threshold (equality counts as correct).
double pck(std::span<const double> errors_mm, double threshold_mm);

/// Lower middle element for even counts.
double median(std::vector<double> values);
double mean(std::span<const double> values);

struct GroupStats {
  std::string name;
  double mean_mm = 0.0;
  double median_mm = 0.0;
  double pck_5mm = 0.0;
  double pck_10mm = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  std::vector<GroupStats> groups;  // Table-1 column order
  GroupStats overall;
  std::size_t samples = 0;
};

/// Maps keypoint index -> group name.
using Grouping = std::vector<std::string>;
Grouping fetal_grouping(const SkeletonSpec& skeleton = fetal_skeleton());

/// errors[sample][keypoint] in mm, pooled per group.
EvalReport summarize(const std::vector<std::vector<double>>& errors, const Grouping& grouping);

std::string report_json(const EvalReport& report);
/// Aligned text table: metric rows (median, mean, PCK@5, PCK@10), group columns.
std::string report_table(const EvalReport& report, const std::string& method);
/// Side-by-side rows for several methods under one header.
std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& methods);
void write_error_csv(const std::filesystem::path& file, const std::vector<std::string>& sample_ids,
                     const std::vector<std::vector<double>>& errors, const SkeletonSpec& skeleton = fetal_skeleton());

/// Reference values reported for the full real-data pipeline, printed beside
/// phantom results and never used as gates.
struct PublishedReference {
  static constexpr double kMeanErrorMm = 4.47;
  static constexpr double kMedianErrorMm = 3.42;
  static constexpr double kPck10 = 0.964;
  static constexpr double kBaselineMeanErrorMm = 4.89;
  static constexpr double kStage2MsPerVolume = 290.0;
  static constexpr double kParamCount = 3.5e6;
};

}  // namespace fetalpose
