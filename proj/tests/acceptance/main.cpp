#include <cstdio>
#include <exception>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "acceptance.hpp"

using namespace fetalpose::acceptance;

namespace {

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)(const Context&);
};

const Criterion kCriteria[] = {
    {1, "oracle-equivalence", oracle_equivalence},
    {2, "gradient-correctness", gradient_correctness},
    {3, "phantom-pipeline-quality", phantom_pipeline_quality},
    {4, "mrf-correction-case", mrf_correction_case},
    {5, "rendering-identities", rendering_identities},
    {6, "metric-unit-checks", metric_unit_checks},
    {7, "optimizer-schedule", optimizer_schedule},
    {8, "stage2-latency", stage2_latency},
    {9, "bone-stat-recovery", bone_stat_recovery},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fetalpose acceptance suite"};
  std::vector<int> only;
  std::string work_dir = (std::filesystem::temp_directory_path() / "fetalpose_acceptance").string();
  bool verbose = false;
  app.add_option("--only", only, "Run only these criterion ids")->check(CLI::Range(1, 9));
  app.add_option("--work-dir", work_dir, "Scratch directory for generated artifacts");
  app.add_flag("-v,--verbose", verbose, "Progress output");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected(only.begin(), only.end());
  Context ctx{work_dir, verbose};
  std::filesystem::create_directories(ctx.work_dir);

  int failures = 0, ran = 0;
  for (const auto& c : kCriteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    ++ran;
    Outcome out;
    Stopwatch clock;
    try {
      out = c.run(ctx);
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %d %s: %s [%.1fs]\n", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(),
                clock.seconds());
    std::fflush(stdout);
    failures += out.pass ? 0 : 1;
  }
  std::printf("%d/%d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
