#include <iostream>

#include "common.hpp"

using namespace fetalpose::cli;

int main(int argc, char** argv) {
  CLI::App app{"Two-stage fetal pose estimation: hourglass heatmaps refined by a skeleton MRF"};
  app.require_subcommand(1);
  GlobalOptions global;
  app.add_option("--seed", global.seed, "Global random seed")->capture_default_str();
  app.add_option("--threads", global.threads, "Worker threads (parallel across volumes only)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--out-dir", global.out_dir, "Output directory")->capture_default_str();
  app.fallthrough();

  std::function<int()> run;
  register_data_commands(app, global, run);
  register_infer_commands(app, global, run);
  register_check_commands(app, global, run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidationFailure;
  }
  try {
    return run();
  } catch (const CheckFailure& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return kCheckFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationFailure;
  }
}
