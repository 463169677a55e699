#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "fetalpose/metrics.hpp"

using namespace fetalpose;
namespace fs = std::filesystem;

namespace {

Pose line_pose(int n) {
  Pose p;
  for (int i = 0; i < n; ++i) p.coords.push_back({double(i), 2.0 * i, 1.0});
  return p;
}

std::vector<std::vector<double>> random_errors(int samples, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(0.2);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(samples));
  for (auto& row : out)
    for (int j = 0; j < kFetalKeypointCount; ++j) row.push_back(e(rng));
  return out;
}

}  // namespace

TEST(KeypointErrors, Examples) {
  const Pose t = line_pose(3);
  for (double e : keypoint_errors(t, t, {3, 3, 3})) EXPECT_EQ(e, 0.0);
  Pose p = t;
  p.coords[0].x += 1.0;
  p.coords[1] = p.coords[1] + Vec3{1, 1, 1};
  const auto e = keypoint_errors(p, t, {3, 3, 3});
  EXPECT_DOUBLE_EQ(e[0], 3.0);
  EXPECT_NEAR(e[1], 5.196, 5e-4);
  EXPECT_DOUBLE_EQ(e[1], 3.0 * std::sqrt(3.0));
  const auto aniso = keypoint_errors(p, t, {1, 2, 4});
  EXPECT_DOUBLE_EQ(aniso[1], std::sqrt(1.0 + 4.0 + 16.0));
  EXPECT_THROW(keypoint_errors(line_pose(2), t, {1, 1, 1}), std::invalid_argument);
}

TEST(Pck, Examples) {
  EXPECT_EQ(pck(std::vector<double>{0, 0, 0}, 10.0), 1.0);
  EXPECT_EQ(pck(std::vector<double>{4, 12}, 10.0), 0.5);
  EXPECT_EQ(pck(std::vector<double>{10.0}, 10.0), 1.0);
  EXPECT_EQ(pck(std::vector<double>{std::nextafter(10.0, 11.0)}, 10.0), 0.0);
  EXPECT_THROW(pck(std::vector<double>{}, 10.0), std::invalid_argument);
  EXPECT_THROW(pck(std::vector<double>{1.0}, 0.0), std::invalid_argument);
}

TEST(Pck, DefaultThresholdsInVoxels) {
  EXPECT_EQ(kPckThresholdsMm[0], 5.0);
  EXPECT_EQ(kPckThresholdsMm[1], 10.0);
  EXPECT_NEAR(kPckThresholdsMm[0] / 3.0, 1.67, 0.005);
  EXPECT_NEAR(kPckThresholdsMm[1] / 3.0, 3.33, 0.005);
}

TEST(Pck, MonotoneInThreshold) {
  std::mt19937_64 rng(1);
  const auto rows = random_errors(30, rng);
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  double previous = 0.0;
  for (double t = 0.25; t < 40.0; t += 0.25) {
    const double v = pck(flat, t);
    EXPECT_GE(v, previous);
    EXPECT_LE(v, 1.0);
    previous = v;
  }
}

TEST(Summary, MeanAndLowerMedian) {
  EXPECT_EQ(mean(std::vector<double>{1, 2, 3, 4}), 2.5);
  EXPECT_EQ(median({1, 2, 3, 4}), 2.0);
  EXPECT_EQ(median({4, 1, 3}), 3.0);
  EXPECT_EQ(median({7}), 7.0);
  EXPECT_THROW(median({}), std::invalid_argument);
  EXPECT_THROW(mean(std::vector<double>{}), std::invalid_argument);
}

TEST(Summary, GroupsPoolLeftAndRight) {
  const Grouping g = fetal_grouping();
  ASSERT_EQ(g.size(), 15u);
  std::vector<std::vector<double>> errors(1, std::vector<double>(15, 0.0));
  const auto& sk = fetal_skeleton();
  errors[0][static_cast<std::size_t>(sk.index_of("wrist_L"))] = 2.0;
  errors[0][static_cast<std::size_t>(sk.index_of("wrist_R"))] = 12.0;
  errors[0][static_cast<std::size_t>(sk.index_of("bladder"))] = 6.0;
  const EvalReport r = summarize(errors, g);
  ASSERT_EQ(r.groups.size(), 8u);
  for (std::size_t k = 0; k < r.groups.size(); ++k) EXPECT_EQ(r.groups[k].name, kKeypointGroups[k]);
  EXPECT_EQ(r.groups[0].count, 2u);
  EXPECT_EQ(r.groups[0].mean_mm, 7.0);
  EXPECT_EQ(r.groups[0].median_mm, 2.0);
  EXPECT_EQ(r.groups[0].pck_10mm, 0.5);
  EXPECT_EQ(r.groups[4].name, "bladder");
  EXPECT_EQ(r.groups[4].mean_mm, 6.0);
  EXPECT_EQ(r.groups[4].pck_5mm, 0.0);
  EXPECT_EQ(r.groups[4].pck_10mm, 1.0);
  EXPECT_EQ(r.overall.count, 15u);
  EXPECT_DOUBLE_EQ(r.overall.mean_mm, 20.0 / 15.0);
  EXPECT_EQ(r.samples, 1u);
}

TEST(Summary, SingleGroupEqualsKeypointStats) {
  const std::vector<std::vector<double>> errors{{1.0}, {3.0}, {8.0}, {2.0}};
  const EvalReport r = summarize(errors, Grouping{"only"});
  ASSERT_EQ(r.groups.size(), 1u);
  const std::vector<double> flat{1, 3, 8, 2};
  EXPECT_EQ(r.groups[0].mean_mm, mean(flat));
  EXPECT_EQ(r.groups[0].median_mm, median(flat));
  EXPECT_EQ(r.groups[0].pck_5mm, pck(flat, 5.0));
  EXPECT_EQ(r.overall.mean_mm, r.groups[0].mean_mm);
}

TEST(Summary, PermutationInvariant) {
  std::mt19937_64 rng(2);
  auto rows = random_errors(25, rng);
  const EvalReport a = summarize(rows, fetal_grouping());
  std::shuffle(rows.begin(), rows.end(), rng);
  const EvalReport b = summarize(rows, fetal_grouping());
  EXPECT_DOUBLE_EQ(a.overall.mean_mm, b.overall.mean_mm);
  EXPECT_EQ(a.overall.median_mm, b.overall.median_mm);
  for (std::size_t k = 0; k < a.groups.size(); ++k) {
    EXPECT_DOUBLE_EQ(a.groups[k].mean_mm, b.groups[k].mean_mm);
    EXPECT_EQ(a.groups[k].median_mm, b.groups[k].median_mm);
  }
}

TEST(Summary, SpacingScalesEveryStatistic) {
  std::mt19937_64 rng(3);
  std::vector<Pose> truth, pred;
  for (int s = 0; s < 10; ++s) {
    Pose t, p;
    for (int j = 0; j < 15; ++j) {
      const Vec3 c{std::uniform_real_distribution<double>(0, 50)(rng), 10.0, 20.0};
      t.coords.push_back(c);
      p.coords.push_back(c + Vec3{std::normal_distribution<double>(0, 1)(rng), std::normal_distribution<double>(0, 1)(rng), 0.5});
    }
    truth.push_back(t);
    pred.push_back(p);
  }
  auto report = [&](double c) {
    std::vector<std::vector<double>> e;
    for (std::size_t s = 0; s < truth.size(); ++s) e.push_back(keypoint_errors(pred[s], truth[s], {c, c, c}));
    return summarize(e, fetal_grouping());
  };
  const EvalReport a = report(1.0), b = report(3.0);
  EXPECT_NEAR(b.overall.mean_mm, 3.0 * a.overall.mean_mm, 1e-12);
  EXPECT_NEAR(b.overall.median_mm, 3.0 * a.overall.median_mm, 1e-12);
  for (std::size_t k = 0; k < a.groups.size(); ++k) EXPECT_NEAR(b.groups[k].mean_mm, 3.0 * a.groups[k].mean_mm, 1e-12);
}

TEST(Summary, RejectsMismatchedGrouping) {
  EXPECT_THROW(summarize({{1.0, 2.0}}, Grouping{"a"}), std::invalid_argument);
}

TEST(Report, JsonAndTable) {
  std::mt19937_64 rng(4);
  const EvalReport r = summarize(random_errors(5, rng), fetal_grouping());
  const auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j.at("samples"), 5);
  EXPECT_EQ(j.at("groups").size(), 8u);
  EXPECT_DOUBLE_EQ(j.at("overall").at("mean_mm").get<double>(), r.overall.mean_mm);
  const std::string t = report_table({{"HG", r}, {"HG-M", r}});
  for (const char* word : {"wrist", "ankle", "overall", "HG-M", "median", "PCK@10mm"})
    EXPECT_NE(t.find(word), std::string::npos) << word;
  EXPECT_EQ(report_table(r, "HG"), report_table({{"HG", r}}));
}

TEST(Report, ErrorCsvHasHeaderAndRows) {
  const fs::path file = fs::temp_directory_path() / "fetalpose_unit" / "errors.csv";
  fs::create_directories(file.parent_path());
  std::mt19937_64 rng(5);
  write_error_csv(file, {"a", "b"}, random_errors(2, rng));
  std::ifstream in(file);
  std::string header, row;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("sample,ankle_L,", 0), 0u);
  int rows = 0;
  while (std::getline(in, row)) ++rows;
  EXPECT_EQ(rows, 2);
  EXPECT_THROW(write_error_csv(file, {"a"}, random_errors(2, rng)), std::invalid_argument);
}
