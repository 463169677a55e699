#include <memory>
#include <optional>

#include "common.hpp"
#include "fetalpose/checkpoint.hpp"
#include "fetalpose/dataset.hpp"
#include "fetalpose/mrf.hpp"

namespace fetalpose::cli {

TrainedArtifacts train_from_manifest(const std::filesystem::path& manifest_file, const TrainConfig& cfg,
                                     const HourglassConfig& model_cfg, const std::filesystem::path& out_dir,
                                     int checkpoint_every, const json& echoed) {
  const DatasetManifest manifest = read_manifest(manifest_file);
  const Dataset data = load_dataset(manifest, true, true, false);
  Log("dataset").kv("train", data.train.size()).kv("val", data.val.size());

  std::mt19937_64 init(cfg.seed);
  Hourglass<float> model = Hourglass<float>::build(model_cfg, init);
  Log("model").kv("params", model.param_count());
  std::filesystem::create_directories(out_dir);
  const TrainReport report = train(model, data, cfg, [&](int epoch, const TrainReport& r) {
    Log("epoch")
        .kv("epoch", epoch)
        .kv("train_loss", r.train_loss.back())
        .kv("val_loss", r.val_loss.back())
        .kv("lr", r.lr.back())
        .kv("seconds", r.seconds.back());
    if (checkpoint_every > 0 && (epoch + 1) % checkpoint_every == 0)
      save_checkpoint(out_dir / ("model_epoch" + std::to_string(epoch + 1)), model);
  });
  TrainedArtifacts out{out_dir / "model.ckpt.json", out_dir / "bone_stats.json"};
  save_checkpoint(out_dir / "model", model);

  std::vector<LabeledPose> poses;
  for (const auto& s : data.train) poses.push_back({s.pose, s.ga_weeks, s.volume.spacing_mm()});
  write_bone_stats(out.stats, estimate_bone_stats(poses));

  write_json(out_dir / "train_report.json", {{"config", echoed},
                                             {"train_loss", report.train_loss},
                                             {"val_loss", report.val_loss},
                                             {"lr", report.lr},
                                             {"seconds", report.seconds},
                                             {"steps", report.steps}});
  Log("train_done").kv("checkpoint", out.checkpoint.string()).kv("bone_stats", out.stats.string()).kv("steps", report.steps);
  return out;
}

namespace {

struct GenOptions {
  int n = 100;
  std::vector<double> ga_range{kMinGestationalAge, kMaxGestationalAge};
  std::vector<int> dims{120, 120, 80};
  double noise = 0.05;
  std::vector<double> fractions{kDefaultSplitFractions.begin(), kDefaultSplitFractions.end()};
  bool seed_set = false;
};

int gen_phantom(const GenOptions& o, const GlobalOptions& g) {
  PhantomConfig cfg;
  cfg.dims = {o.dims[0], o.dims[1], o.dims[2]};
  cfg.background_noise_sigma = o.noise;
  cfg.seed = g.seed;
  const std::array<double, 2> ga{o.ga_range[0], o.ga_range[1]};
  const std::array<double, 3> fr{o.fractions[0], o.fractions[1], o.fractions[2]};
  if (!(ga[0] >= kMinGestationalAge && ga[1] <= kMaxGestationalAge && ga[0] <= ga[1]))
    throw std::invalid_argument("--ga-range must lie within [25, 35] weeks");
  cfg.ga_weeks = ga[0];
  cfg.validate();
  echo_config("gen-phantom", {{"n", o.n},
                              {"ga_range", ga},
                              {"dims", o.dims},
                              {"noise", o.noise},
                              {"fractions", fr},
                              {"seed", g.seed},
                              {"out_dir", g.out_dir.string()}});
  const auto m = make_dataset(o.n, fr, cfg, GeneratorTruth::fetal_default(), g.seed, g.out_dir, ga);
  const auto counts = split_counts(o.n, fr);
  Log("gen_phantom")
      .kv("manifest", (g.out_dir / "manifest.json").string())
      .kv("train", counts[0])
      .kv("val", counts[1])
      .kv("test", counts[2])
      .kv("samples", m.entries.size());
  return kOk;
}

struct TrainOptions {
  std::filesystem::path manifest;
  std::filesystem::path config;
  std::vector<std::string> set;
  int checkpoint_every = 0;
  HourglassConfig model;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<int> batch;
  std::optional<int> patch;
};

int train_command(const TrainOptions& o, const GlobalOptions& g, bool seed_given) {
  TrainConfig cfg;
  if (!o.config.empty()) merge_json(cfg, read_json(o.config));
  for (const std::string& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + kv);
    json value;
    try {
      value = json::parse(kv.substr(eq + 1));
    } catch (const json::exception&) {
      value = kv.substr(eq + 1);
    }
    merge_json(cfg, json{{kv.substr(0, eq), value}});
  }
  if (o.lr) cfg.lr_max = *o.lr;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.batch) cfg.batch_size = *o.batch;
  if (o.patch) cfg.patch_size = *o.patch;
  if (seed_given) cfg.seed = g.seed;
  cfg.validate();
  o.model.validate();
  json echoed = to_json(cfg);
  echoed["model"] = {{"base_channels", o.model.base_channels},
                     {"num_scales", o.model.num_scales},
                     {"resblocks_per_scale", o.model.resblocks_per_scale}};
  echoed["manifest"] = o.manifest.string();
  echoed["checkpoint_every"] = o.checkpoint_every;
  echo_config("train", echoed);

  train_from_manifest(o.manifest, cfg, o.model, g.out_dir, o.checkpoint_every, echoed);
  return kOk;
}

}  // namespace

void register_data_commands(CLI::App& app, GlobalOptions& global, std::function<int()>& run) {
  auto gen = std::make_shared<GenOptions>();
  CLI::App* g = app.add_subcommand("gen-phantom", "Generate a phantom dataset with manifest");
  g->add_option("--n", gen->n, "Number of subjects")->check(CLI::NonNegativeNumber)->capture_default_str();
  g->add_option("--ga-range", gen->ga_range, "Gestational age range in weeks")->expected(2)->delimiter(',')->capture_default_str();
  g->add_option("--dims", gen->dims, "Volume dims x y z")->expected(3)->delimiter(',')->capture_default_str();
  g->add_option("--noise", gen->noise, "Background noise sigma")->check(CLI::NonNegativeNumber)->capture_default_str();
  g->add_option("--fractions", gen->fractions, "train/val/test fractions")->expected(3)->delimiter(',')->capture_default_str();
  g->callback([gen, &global, &run] { run = [gen, &global] { return gen_phantom(*gen, global); }; });

  auto tr = std::make_shared<TrainOptions>();
  CLI::App* t = app.add_subcommand("train", "Train the hourglass on a dataset manifest");
  t->add_option("--manifest", tr->manifest, "Dataset manifest.json")->required()->check(CLI::ExistingFile);
  t->add_option("--config", tr->config, "JSON file mirroring the training config")->check(CLI::ExistingFile);
  t->add_option("--set", tr->set, "Override a config key (key=value, repeatable)");
  t->add_option("--lr", tr->lr, "Maximum learning rate");
  t->add_option("--epochs", tr->epochs, "Epoch budget");
  t->add_option("--batch", tr->batch, "Batch size");
  t->add_option("--patch", tr->patch, "Cubic patch size");
  t->add_option("--checkpoint-every", tr->checkpoint_every, "Write a checkpoint every N epochs (0 = final only)");
  t->add_option("--channels", tr->model.base_channels, "Base channels C")->capture_default_str();
  t->add_option("--scales", tr->model.num_scales, "Downsamplings S")->capture_default_str();
  t->add_option("--resblocks", tr->model.resblocks_per_scale, "Residual blocks per scale")->capture_default_str();
  t->callback([tr, &global, &run, &app] {
    const bool seed_given = app.count("--seed") > 0;
    run = [tr, &global, seed_given] { return train_command(*tr, global, seed_given); };
  });
}

}  // namespace fetalpose::cli
