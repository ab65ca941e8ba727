#include "iris/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "iris/bridge.hpp"
#include "iris/evaluate.hpp"
#include "iris/networks.hpp"
#include "iris/training.hpp"

namespace iris {

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "run configuration (JSON)");
  cmd->add_option("--out", opts.out_dir, "run directory")->required();
  cmd->add_option("--seed", opts.seed, "master seed (default 0)");
  cmd->add_flag("--force", opts.force, "allow reuse of an existing run directory");
}

RunConfig load_config(const CommonOpts& opts) {
  if (opts.config_path.empty()) return RunConfig{};
  return RunConfig::from_file(opts.config_path);
}

// Creates the run directory and writes the resolved config and seed. A
// config.json already present marks a previous run; refuse without --force.
void prepare_run_dir(const CommonOpts& opts, const RunConfig& cfg) {
  fs::create_directories(opts.out_dir);
  const fs::path marker = fs::path(opts.out_dir) / "config.json";
  if (fs::exists(marker) && !opts.force)
    throw std::runtime_error("run directory already used: " + opts.out_dir +
                             " (pass --force to overwrite)");
  std::ofstream cfg_out(marker);
  cfg_out << cfg.resolved_json();
  std::ofstream seed_out(fs::path(opts.out_dir) / "seed.txt");
  seed_out << opts.seed << "\n";
}

ImageLoader disk_loader() {
  return [](const SampleRecord& rec) { return read_ppm(rec.path); };
}

DatasetManifest manifest_from(const std::string& in) {
  if (fs::is_directory(in)) return scan_directory(in);
  return read_manifest(in);
}

void write_accuracy(const std::string& out_dir,
                    const std::vector<double>& acc) {
  std::ofstream out(fs::path(out_dir) / "accuracy.txt");
  for (std::size_t i = 0; i < acc.size(); ++i)
    out << (i + 1) << '\t' << acc[i] << "\n";
}

int cmd_synth_data(const CommonOpts& opts) {
  const RunConfig cfg = load_config(opts);
  prepare_run_dir(opts, cfg);

  DatasetManifest manifest;
  for (int c = 0; c < cfg.data.classes; ++c) {
    const fs::path cls_dir = fs::path(opts.out_dir) / "images" /
                             std::to_string(c);
    fs::create_directories(cls_dir);
    const std::uint64_t class_seed =
        Rng::mix(opts.seed, cfg.data.class_seed_base + c);
    for (int k = 0; k < cfg.data.images_per_class; ++k) {
      const Image img = synth_iris(class_seed, static_cast<std::uint64_t>(k),
                                   cfg.data.image_size, cfg.data.image_size);
      const fs::path file = cls_dir / (std::to_string(k) + ".ppm");
      write_ppm(img, file.string());
      SampleRecord rec;
      rec.path = file.string();
      rec.class_id = c;
      rec.role = SampleRole::hq;
      manifest.records.push_back(std::move(rec));
    }
  }
  manifest.finalize();
  write_manifest(manifest, (fs::path(opts.out_dir) / "manifest.tsv").string());

  SplitSpec split_spec{cfg.data.train_fraction, opts.seed, cfg.data.per_class};
  auto [train, test] = split(manifest, split_spec);
  write_manifest(train, (fs::path(opts.out_dir) / "train.tsv").string());
  write_manifest(test, (fs::path(opts.out_dir) / "test.tsv").string());
  std::cout << "wrote " << manifest.records.size() << " images ("
            << train.records.size() << " train / " << test.records.size()
            << " test)\n";
  return 0;
}

int cmd_degrade(const CommonOpts& opts, const std::string& in) {
  const RunConfig cfg = load_config(opts);
  prepare_run_dir(opts, cfg);
  const DatasetManifest hq = manifest_from(in);

  const fs::path img_root = fs::path(opts.out_dir) / "images";
  ImageSink sink = [&](const SampleRecord& src, const Image& lq, int index) {
    const fs::path dir = img_root / std::to_string(src.class_id);
    fs::create_directories(dir);
    const fs::path file = dir / ("lq_" + std::to_string(index) + ".ppm");
    write_ppm(lq, file.string());
    return file.string();
  };
  const DatasetManifest pairs =
      make_pairs(hq, cfg.degradation, opts.seed, disk_loader(), sink);
  write_manifest(pairs, (fs::path(opts.out_dir) / "pairs.tsv").string());
  std::cout << "degraded " << hq.records.size() << " images\n";
  return 0;
}

int cmd_train_prior(const CommonOpts& opts, const std::string& in) {
  const RunConfig cfg = load_config(opts);
  prepare_run_dir(opts, cfg);
  const DatasetManifest hq = manifest_from(in);
  TrainLog log((fs::path(opts.out_dir) / "train.log").string());
  StageResult res =
      run_stage1_prior_pretrain(hq, disk_loader(), cfg, opts.seed, &log);
  save_checkpoint(res.checkpoint,
                  (fs::path(opts.out_dir) / "prior.ckpt").string());
  std::cout << "prior checkpoint written; held-out discriminator loss "
            << res.initial_d_loss << " -> " << res.final_d_loss << "\n";
  return 0;
}

int cmd_train_classifier(const CommonOpts& opts, const std::string& in) {
  const RunConfig cfg = load_config(opts);
  prepare_run_dir(opts, cfg);
  const DatasetManifest train = manifest_from(in);
  TrainLog log((fs::path(opts.out_dir) / "train.log").string());
  StageResult res =
      run_stage2_classifier_train(train, disk_loader(), cfg, opts.seed, &log);
  save_checkpoint(res.checkpoint,
                  (fs::path(opts.out_dir) / "classifier.ckpt").string());
  write_accuracy(opts.out_dir, res.epoch_accuracy);
  if (!res.epoch_accuracy.empty())
    std::cout << "final train accuracy " << res.epoch_accuracy.back() << "\n";
  return 0;
}

int cmd_finetune_restorer(const CommonOpts& opts, const std::string& in,
                          const std::string& restorer_path,
                          const std::string& classifier_path) {
  const RunConfig cfg = load_config(opts);
  prepare_run_dir(opts, cfg);
  const DatasetManifest pairs = manifest_from(in);
  const Checkpoint prior = load_checkpoint(restorer_path);
  const Checkpoint cls = load_checkpoint(classifier_path);
  TrainLog log((fs::path(opts.out_dir) / "train.log").string());
  StageResult res = run_stage3_restorer_finetune(pairs, disk_loader(), prior,
                                                 cls, cfg, opts.seed, &log);
  save_checkpoint(res.checkpoint,
                  (fs::path(opts.out_dir) / "restorer.ckpt").string());
  if (!res.step_losses.empty())
    std::cout << "total loss " << res.step_losses.front() << " -> "
              << res.step_losses.back() << "\n";
  return 0;
}

int cmd_finetune_classifier(const CommonOpts& opts, const std::string& in,
                            const std::string& restorer_path,
                            const std::string& classifier_path) {
  const RunConfig cfg = load_config(opts);
  prepare_run_dir(opts, cfg);
  const DatasetManifest pairs = manifest_from(in);
  const Checkpoint restorer = load_checkpoint(restorer_path);
  const Checkpoint cls = load_checkpoint(classifier_path);
  TrainLog log((fs::path(opts.out_dir) / "train.log").string());
  StageResult res = run_stage4_classifier_finetune(
      pairs, disk_loader(), restorer, cls, cfg, opts.seed, &log);
  save_checkpoint(res.checkpoint,
                  (fs::path(opts.out_dir) / "classifier.ckpt").string());
  write_accuracy(opts.out_dir, res.epoch_accuracy);
  return 0;
}

int cmd_restore(const CommonOpts& opts, const std::string& in,
                const std::string& restorer_path) {
  const RunConfig cfg = load_config(opts);
  prepare_run_dir(opts, cfg);
  const DatasetManifest manifest = manifest_from(in);
  const Checkpoint ckpt = load_checkpoint(restorer_path);

  NoGradGuard ng;
  RunConfig rcfg_src = RunConfig::from_json_text(ckpt.config_snapshot);
  const RestorerConfig rc = rcfg_src.restorer_config();
  rc.validate();
  ParamStore<float> ps;
  Rng dummy_rng(0);
  restorer_init(rc, ps, dummy_rng);
  load_into_store(ckpt, ps, "enc.");
  load_into_store(ckpt, ps, "map.");
  load_into_store(ckpt, ps, "dec.");

  DatasetManifest out_manifest;
  const int side = rc.encoder.input_size;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const SampleRecord& rec = manifest.records[i];
    Image img = read_ppm(rec.path).to_unit();
    if (img.height() != side || img.width() != side)
      img = resample(img, side, side, ResampleMethod::bilinear);
    Tensor<float> restored = restore(rc, batch_to_tensor<float>({img}), ps);
    const fs::path dir =
        fs::path(opts.out_dir) / "images" / std::to_string(rec.class_id);
    fs::create_directories(dir);
    const fs::path file = dir / ("restored_" + std::to_string(i) + ".ppm");
    write_ppm(tensor_to_image(restored, 0), file.string());
    SampleRecord out_rec = rec;
    out_rec.path = file.string();
    out_manifest.records.push_back(std::move(out_rec));
  }
  out_manifest.finalize();
  write_manifest(out_manifest,
                 (fs::path(opts.out_dir) / "restored.tsv").string());
  std::cout << "restored " << manifest.records.size() << " images\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& test_path,
                 const std::string& restorer_path,
                 const std::string& classifier_path) {
  const RunConfig cfg = load_config(opts);
  prepare_run_dir(opts, cfg);
  const DatasetManifest test = manifest_from(test_path);
  const Checkpoint cls = load_checkpoint(classifier_path);
  Checkpoint restorer;
  const Checkpoint* restorer_ptr = nullptr;
  if (!restorer_path.empty()) {
    restorer = load_checkpoint(restorer_path);
    restorer_ptr = &restorer;
  }

  const MetricReport report =
      evaluate(test, disk_loader(), restorer_ptr, cls, cfg, opts.seed);

  std::ofstream txt(fs::path(opts.out_dir) / "report.txt");
  txt << report.to_text();
  std::ofstream tsv(fs::path(opts.out_dir) / "report.tsv");
  tsv << MetricReport::tsv_header() << "\n" << report.to_tsv_row() << "\n";
  std::cout << report.to_text();
  return 0;
}

}  // namespace

int cli_run(int argc, const char* const* argv) {
  CLI::App app{"prior-embedded blind iris restoration and recognition"};
  app.require_subcommand(1);

  CommonOpts synth_opts, degrade_opts, prior_opts, cls_opts, ft_r_opts,
      ft_c_opts, restore_opts, eval_opts;
  std::string degrade_in, prior_in, cls_in, ft_r_in, ft_c_in, restore_in;
  std::string ft_r_restorer, ft_r_classifier, ft_c_restorer, ft_c_classifier;
  std::string restore_ckpt, eval_test, eval_restorer, eval_classifier;

  CLI::App* synth = app.add_subcommand(
      "synth-data", "generate a synthetic iris dataset with train/test split");
  add_common(synth, synth_opts);

  CLI::App* deg = app.add_subcommand(
      "degrade", "build LQ/HQ pairs by applying the blind degradation model");
  add_common(deg, degrade_opts);
  deg->add_option("--in", degrade_in, "HQ manifest or image directory")
      ->required();

  CLI::App* prior = app.add_subcommand("train-prior",
                                       "pre-train the generative prior");
  add_common(prior, prior_opts);
  prior->add_option("--in", prior_in, "HQ manifest or image directory")
      ->required();

  CLI::App* cls_cmd = app.add_subcommand("train-classifier",
                                         "train the iris classifier");
  add_common(cls_cmd, cls_opts);
  cls_cmd->add_option("--in", cls_in, "training manifest or directory")
      ->required();

  CLI::App* ftr = app.add_subcommand(
      "finetune-restorer", "fine-tune the restorer on LQ/HQ pairs");
  add_common(ftr, ft_r_opts);
  ftr->add_option("--in", ft_r_in, "pairs manifest")->required();
  ftr->add_option("--restorer", ft_r_restorer, "prior checkpoint")->required();
  ftr->add_option("--classifier", ft_r_classifier, "classifier checkpoint")
      ->required();

  CLI::App* ftc = app.add_subcommand(
      "finetune-classifier",
      "fine-tune the classifier on restored images (restorer frozen)");
  add_common(ftc, ft_c_opts);
  ftc->add_option("--in", ft_c_in, "pairs manifest")->required();
  ftc->add_option("--restorer", ft_c_restorer, "restorer checkpoint")
      ->required();
  ftc->add_option("--classifier", ft_c_classifier, "classifier checkpoint")
      ->required();

  CLI::App* rst = app.add_subcommand("restore", "restore LQ images");
  add_common(rst, restore_opts);
  rst->add_option("--in", restore_in, "LQ manifest or image directory")
      ->required();
  rst->add_option("--restorer", restore_ckpt, "restorer checkpoint")
      ->required();

  CLI::App* ev = app.add_subcommand(
      "evaluate", "degrade, restore, and classify a held-out HQ test set");
  add_common(ev, eval_opts);
  ev->add_option("--test", eval_test, "HQ test manifest")->required();
  ev->add_option("--restorer", eval_restorer,
                 "restorer checkpoint (omit for the no-restoration baseline)");
  ev->add_option("--classifier", eval_classifier, "classifier checkpoint")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (app.got_subcommand(synth)) return cmd_synth_data(synth_opts);
    if (app.got_subcommand(deg)) return cmd_degrade(degrade_opts, degrade_in);
    if (app.got_subcommand(prior)) return cmd_train_prior(prior_opts, prior_in);
    if (app.got_subcommand(cls_cmd))
      return cmd_train_classifier(cls_opts, cls_in);
    if (app.got_subcommand(ftr))
      return cmd_finetune_restorer(ft_r_opts, ft_r_in, ft_r_restorer,
                                   ft_r_classifier);
    if (app.got_subcommand(ftc))
      return cmd_finetune_classifier(ft_c_opts, ft_c_in, ft_c_restorer,
                                     ft_c_classifier);
    if (app.got_subcommand(rst))
      return cmd_restore(restore_opts, restore_in, restore_ckpt);
    if (app.got_subcommand(ev))
      return cmd_evaluate(eval_opts, eval_test, eval_restorer,
                          eval_classifier);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << "no subcommand given\n" << app.help();
  return 1;
}

int cli_run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("iris");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace iris
