#include "fetalpose/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json_util.hpp"

namespace fetalpose {

std::vector<double> keypoint_errors(const Pose& pred, const Pose& truth, Vec3 spacing_mm) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("prediction has " + std::to_string(pred.size()) + " keypoints, truth " +
                                std::to_string(truth.size()));
  std::vector<double> out;
  out.reserve(pred.coords.size());
  for (std::size_t j = 0; j < pred.coords.size(); ++j)
    out.push_back(hadamard(pred.coords[j] - truth.coords[j], spacing_mm).norm());
  return out;
}

double pck(std::span<const double> errors_mm, double threshold_mm) {
  if (errors_mm.empty()) throw std::invalid_argument("PCK of an empty error list");
  if (!(threshold_mm > 0)) throw std::invalid_argument("PCK threshold must be positive");
  const auto hits = std::count_if(errors_mm.begin(), errors_mm.end(), [&](double e) { return e <= threshold_mm; });
  return static_cast<double>(hits) / static_cast<double>(errors_mm.size());
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  const std::size_t k = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

double mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

Grouping fetal_grouping(const SkeletonSpec& skeleton) {
  Grouping g;
  for (const auto& name : skeleton.keypoints) g.push_back(std::string(group_of(name)));
  return g;
}

namespace {

GroupStats stats_of(std::string name, const std::vector<double>& e) {
  GroupStats s;
  s.name = std::move(name);
  s.count = e.size();
  if (e.empty()) return s;
  s.mean_mm = mean(e);
  s.median_mm = median(e);
  s.pck_5mm = pck(e, kPckThresholdsMm[0]);
  s.pck_10mm = pck(e, kPckThresholdsMm[1]);
  return s;
}

}  // namespace

EvalReport summarize(const std::vector<std::vector<double>>& errors, const Grouping& grouping) {
  if (errors.empty()) throw std::invalid_argument("no samples to summarize");
  std::vector<std::string> order;
  for (const auto& g : kKeypointGroups)
    if (std::find(grouping.begin(), grouping.end(), g) != grouping.end()) order.emplace_back(g);
  for (const auto& g : grouping)
    if (std::find(order.begin(), order.end(), g) == order.end()) order.push_back(g);

  std::vector<std::vector<double>> pooled(order.size());
  std::vector<double> all;
  for (const auto& row : errors) {
    if (row.size() != grouping.size())
      throw std::invalid_argument("error row has " + std::to_string(row.size()) + " keypoints, grouping " +
                                  std::to_string(grouping.size()));
    for (std::size_t j = 0; j < row.size(); ++j) {
      const auto g = static_cast<std::size_t>(std::find(order.begin(), order.end(), grouping[j]) - order.begin());
      pooled[g].push_back(row[j]);
      all.push_back(row[j]);
    }
  }
  EvalReport r;
  r.samples = errors.size();
  for (std::size_t g = 0; g < order.size(); ++g) r.groups.push_back(stats_of(order[g], pooled[g]));
  r.overall = stats_of("overall", all);
  return r;
}

std::string report_json(const EvalReport& report) {
  auto one = [](const GroupStats& s) {
    return detail::json{{"name", s.name},       {"mean_mm", s.mean_mm},   {"median_mm", s.median_mm},
                        {"pck_5mm", s.pck_5mm}, {"pck_10mm", s.pck_10mm}, {"count", s.count}};
  };
  detail::json groups = detail::json::array();
  for (const auto& g : report.groups) groups.push_back(one(g));
  return detail::json{{"samples", report.samples}, {"overall", one(report.overall)}, {"groups", groups}}.dump(2);
}

namespace {

std::string cell(double v, const char* fmt) {
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void append_rows(std::ostringstream& os, const std::string& method, const EvalReport& r, std::size_t label_w) {
  struct Row {
    const char* metric;
    double GroupStats::*field;
    const char* fmt;
  };
  static const Row rows[] = {{"median (mm)", &GroupStats::median_mm, "%9.2f"},
                             {"mean (mm)", &GroupStats::mean_mm, "%9.2f"},
                             {"PCK@5mm", &GroupStats::pck_5mm, "%9.3f"},
                             {"PCK@10mm", &GroupStats::pck_10mm, "%9.3f"}};
  for (const auto& row : rows) {
    std::string label = method.empty() ? row.metric : method + " " + row.metric;
    label.resize(std::max(label.size(), label_w), ' ');
    os << label;
    for (const auto& g : r.groups) os << cell(g.*row.field, row.fmt);
    os << cell(r.overall.*row.field, row.fmt) << "\n";
  }
}

}  // namespace

std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& methods) {
  if (methods.empty()) return {};
  std::size_t label_w = 12;
  for (const auto& [m, r] : methods) label_w = std::max(label_w, m.size() + 13);
  std::ostringstream os;
  os << std::string(label_w, ' ');
  char buf[32];
  for (const auto& g : methods.front().second.groups) {
    std::snprintf(buf, sizeof buf, "%9s", g.name.c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%9s", "overall");
  os << buf << "\n";
  for (const auto& [m, r] : methods) append_rows(os, m, r, label_w);
  return os.str();
}

std::string report_table(const EvalReport& report, const std::string& method) {
  return report_table({{method, report}});
}

void write_error_csv(const std::filesystem::path& file, const std::vector<std::string>& sample_ids,
                     const std::vector<std::vector<double>>& errors, const SkeletonSpec& skeleton) {
  if (sample_ids.size() != errors.size()) throw std::invalid_argument("sample id count differs from error rows");
  std::ostringstream os;
  os << "sample";
  for (const auto& k : skeleton.keypoints) os << "," << k;
  os << "\n";
  for (std::size_t s = 0; s < errors.size(); ++s) {
    if (static_cast<int>(errors[s].size()) != skeleton.size())
      throw std::invalid_argument("error row " + std::to_string(s) + " has the wrong keypoint count");
    os << sample_ids[s];
    for (double e : errors[s]) os << "," << cell(e, "%.4f");
    os << "\n";
  }
  detail::write_text_file(file, os.str());
}

}  // namespace fetalpose
