#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "iris/adam.hpp"
#include "iris/training.hpp"

using namespace iris;

namespace {

namespace fs = std::filesystem;

// Tiny synthetic dataset kept fully in memory. Records use the key scheme
// "synth:<class_seed>:<instance>" plus an overlay map for generated LQ files.
struct MemoryData {
  int image_size;
  std::map<std::string, Image> overlay;

  ImageLoader loader() const {
    return [this](const SampleRecord& rec) {
      auto it = overlay.find(rec.path);
      if (it != overlay.end()) return it->second;
      const auto a = rec.path.find(':');
      const auto b = rec.path.find(':', a + 1);
      const std::uint64_t cs = std::stoull(rec.path.substr(a + 1, b - a - 1));
      const std::uint64_t is = std::stoull(rec.path.substr(b + 1));
      return synth_iris(cs, is, image_size, image_size);
    };
  }
};

DatasetManifest memory_manifest(int classes, int per_class,
                                std::uint64_t seed_base = 100) {
  DatasetManifest m;
  for (int c = 0; c < classes; ++c)
    for (int k = 0; k < per_class; ++k) {
      SampleRecord r;
      r.path = "synth:" + std::to_string(seed_base + c) + ":" +
               std::to_string(k);
      r.class_id = c;
      r.role = SampleRole::hq;
      m.records.push_back(std::move(r));
    }
  m.finalize();
  return m;
}

// Small end-to-end configuration at 16x16.
RunConfig tiny_config() {
  RunConfig cfg;
  cfg.data.image_size = 16;
  cfg.encoder.input_size = 16;
  cfg.encoder.channels = {4, 6, 8};
  cfg.encoder.latent_dim = 8;
  cfg.encoder.attention_heads = 2;
  cfg.restorer.mapping_depth = 1;
  cfg.restorer.disc_channels = {4, 6, 8};
  cfg.classifier.stage_blocks = {1, 1, 1, 1};
  cfg.classifier.stage_channels = {2, 3, 4, 5};
  cfg.classifier.embedding_dim = 8;
  cfg.classifier.input_size = 16;
  cfg.classifier.dropout_rate = 0.1;
  cfg.degradation.kernel_size = 5;
  cfg.degradation.iso_sigma_hi = 2.0;
  cfg.degradation.aniso_sigma_hi = 2.0;
  cfg.degradation.noise_sigma_hi = 10.0;
  cfg.degradation.scale_s = 2;
  cfg.training.stage1_steps = 2;
  cfg.training.stage1_batch = 2;
  cfg.training.stage3_steps = 2;
  cfg.training.batch_size = 2;
  cfg.training.classifier_epochs = 1;
  cfg.training.classifier_batch = 4;
  cfg.training.stage4_epochs = 1;
  return cfg;
}

DatasetManifest build_pairs(const DatasetManifest& hq, const RunConfig& cfg,
                            MemoryData& data, std::uint64_t seed) {
  ImageSink sink = [&data](const SampleRecord& src, const Image& lq,
                           int index) {
    const std::string key = "lq:" + src.path + ":" + std::to_string(index);
    data.overlay[key] = lq;
    return key;
  };
  return make_pairs(hq, cfg.degradation, seed, data.loader(), sink);
}

bool checkpoints_equal(const Checkpoint& a, const Checkpoint& b) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].name != b.params[i].name) return false;
    if (a.params[i].shape != b.params[i].shape) return false;
    if (a.params[i].values != b.params[i].values) return false;
  }
  return a.stage == b.stage;
}

}  // namespace

TEST_CASE("adam: zero gradients leave parameters untouched") {
  Tensor<float> p({3}, true);
  p.values() << 1.0f, -2.0f, 3.0f;
  Adam<float> adam;
  adam.add_group({&p}, 0.1);

  p.grad().setZero();
  adam.step();
  CHECK(adam.step_count() == 1);
  CHECK(p.values()[0] == 1.0f);
  CHECK(p.values()[1] == -2.0f);
  CHECK(p.values()[2] == 3.0f);
}

TEST_CASE("adam: first step from zero state moves by lr * sign") {
  Tensor<double> p({2}, true);
  p.values() << 0.0, 0.0;
  AdamConfig cfg;
  Adam<double> adam(cfg);
  const double lr = 0.05;
  adam.add_group({&p}, lr);

  p.grad()[0] = 0.73;   // positive gradient
  p.grad()[1] = -4.2;   // negative gradient
  adam.step();
  CHECK(p.values()[0] == doctest::Approx(-lr).epsilon(1e-6));
  CHECK(p.values()[1] == doctest::Approx(lr).epsilon(1e-6));
}

TEST_CASE("adam: identical runs give identical trajectories") {
  auto run = [] {
    Tensor<float> p({4}, true);
    p.values() << 1, 2, 3, 4;
    Adam<float> adam;
    adam.add_group({&p}, 0.01);
    for (int step = 0; step < 5; ++step) {
      p.zero_grad();
      // grad of 0.5*|p|^2 is p itself
      p.grad() = p.values();
      adam.step();
    }
    return std::vector<float>(p.data(), p.data() + 4);
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  const fs::path dir = fs::temp_directory_path() / "iris_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "a.ckpt").string();

  Checkpoint ckpt;
  ckpt.stage = "prior_pretrain";
  ckpt.seed = 0xDEADBEEFCAFEBABEULL;
  ckpt.config_snapshot = "{\"x\": 1}";
  ckpt.params.push_back({"enc.w", {2, 3}, {1.5f, -2.25f, 0.0f, 3.75f, 1e-30f, -0.0f}});
  ckpt.params.push_back({"dec.b", {2}, {0.125f, 42.0f}});
  ckpt.has_optimizer = true;
  ckpt.optimizer_step = 77;
  ckpt.optimizer.push_back({"enc.w", {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f},
                            {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f}});

  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.format_version == ckpt.format_version);
  CHECK(back.stage == ckpt.stage);
  CHECK(back.seed == ckpt.seed);
  CHECK(back.config_snapshot == ckpt.config_snapshot);
  REQUIRE(back.params.size() == 2);
  CHECK(back.params[0].name == "enc.w");
  CHECK(back.params[0].shape == std::vector<int>{2, 3});
  CHECK(back.params[0].values == ckpt.params[0].values);
  CHECK(back.params[1].values == ckpt.params[1].values);
  REQUIRE(back.has_optimizer);
  CHECK(back.optimizer_step == 77);
  CHECK(back.optimizer[0].m == ckpt.optimizer[0].m);
  CHECK(back.optimizer[0].v == ckpt.optimizer[0].v);

  fs::remove_all(dir);
}

TEST_CASE("checkpoint rejects truncation and unknown versions") {
  const fs::path dir = fs::temp_directory_path() / "iris_ckpt_err";
  fs::create_directories(dir);
  const std::string path = (dir / "a.ckpt").string();

  Checkpoint ckpt;
  ckpt.stage = "classifier_train";
  ckpt.params.push_back({"cls.w", {4}, {1, 2, 3, 4}});
  save_checkpoint(ckpt, path);

  // Truncate the payload.
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 7);
  CHECK_THROWS_WITH_AS(load_checkpoint(path),
                       doctest::Contains("corrupt checkpoint"),
                       std::runtime_error);

  // Patch the version field (bytes 4..7).
  save_checkpoint(ckpt, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char bad[4] = {9, 0, 0, 0};
    f.write(bad, 4);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path),
                       doctest::Contains("unsupported checkpoint version"),
                       std::runtime_error);

  fs::remove_all(dir);
}

TEST_CASE("checkpoint load validates names and shapes") {
  ParamStore<float> store;
  store.create("enc.w", {2, 2});

  Checkpoint ckpt;
  ckpt.params.push_back({"enc.w", {2, 2}, {1, 2, 3, 4}});
  load_into_store(ckpt, store, "enc.");
  CHECK(store.get("enc.w").values()[3] == 4.0f);
  CHECK(store_matches_checkpoint(ckpt, store, "enc."));

  Checkpoint wrong_shape;
  wrong_shape.params.push_back({"enc.w", {4}, {1, 2, 3, 4}});
  CHECK_THROWS_AS(load_into_store(wrong_shape, store, "enc."),
                  std::runtime_error);

  Checkpoint missing;
  missing.params.push_back({"dec.w", {1}, {1}});
  CHECK_THROWS_AS(load_into_store(missing, store, "enc."), std::runtime_error);
}

TEST_CASE("stage plans pin the learning-rate ratios exactly") {
  RunConfig cfg;
  cfg.training.encoder_lr = 3.7e-4;
  const StagePlan p3 = make_stage3_plan(cfg);
  CHECK(p3.lr("decoder") == 10.0 * p3.lr("encoder"));
  CHECK(p3.lr("discriminator") == 100.0 * p3.lr("encoder"));
  CHECK(p3.batch_size == 2);
  REQUIRE(p3.frozen_groups.size() == 1);
  CHECK(p3.frozen_groups[0] == "classifier");

  const StagePlan p2 = make_stage2_plan(cfg);
  CHECK(p2.epochs == 20);
  CHECK(p2.batch_size == 16);
  CHECK(p2.lr("classifier") == 1e-4);

  const StagePlan p4 = make_stage4_plan(cfg);
  CHECK(p4.frozen_groups ==
        std::vector<std::string>{"encoder", "decoder"});
  CHECK_THROWS_AS(p4.lr("discriminator"), std::invalid_argument);
}

TEST_CASE("train log writes the fixed schema and rejects non-finite losses") {
  const fs::path dir = fs::temp_directory_path() / "iris_log_test";
  fs::create_directories(dir);
  const std::string path = (dir / "train.log").string();

  TrainLog log(path);
  log.log_step(3, Stage::restorer_finetune, 1.25, 0.5, 0.25, 0.5, 2e-4);
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  std::istringstream ss(line);
  std::vector<std::string> fields;
  std::string tok;
  while (std::getline(ss, tok, '\t')) fields.push_back(tok);
  REQUIRE(fields.size() == 7);
  CHECK(fields[0] == "3");
  CHECK(fields[1] == "restorer_finetune");
  CHECK(fields[2] == "1.25");

  CHECK_THROWS_WITH_AS(
      log.log_step(4, Stage::restorer_finetune,
                   std::numeric_limits<double>::quiet_NaN(), 0, 0, 0, 1e-4),
      doctest::Contains("non-finite"), std::runtime_error);

  fs::remove_all(dir);
}

TEST_CASE("stage 1: zero steps emit the initialization, deterministically") {
  MemoryData data{16, {}};
  const DatasetManifest hq = memory_manifest(2, 3);
  RunConfig cfg = tiny_config();
  cfg.training.stage1_steps = 0;

  const StageResult a = run_stage1_prior_pretrain(hq, data.loader(), cfg, 42);
  const StageResult b = run_stage1_prior_pretrain(hq, data.loader(), cfg, 42);
  CHECK(checkpoints_equal(a.checkpoint, b.checkpoint));
  CHECK(a.checkpoint.stage == "prior_pretrain");
  CHECK(a.checkpoint.find("dec.const") != nullptr);
  CHECK(a.checkpoint.find("disc.fc.w") != nullptr);

  // A seeded run with steps differs from initialization.
  RunConfig cfg2 = tiny_config();
  const StageResult c =
      run_stage1_prior_pretrain(hq, data.loader(), cfg2, 42);
  CHECK_FALSE(checkpoints_equal(a.checkpoint, c.checkpoint));
}

TEST_CASE("stage 2: determinism, zero-epoch identity, single-class error") {
  MemoryData data{16, {}};
  const DatasetManifest train = memory_manifest(3, 4);
  RunConfig cfg = tiny_config();

  const StageResult a =
      run_stage2_classifier_train(train, data.loader(), cfg, 7);
  const StageResult b =
      run_stage2_classifier_train(train, data.loader(), cfg, 7);
  CHECK(checkpoints_equal(a.checkpoint, b.checkpoint));
  CHECK(a.epoch_accuracy.size() == 1);

  cfg.training.classifier_epochs = 0;
  const StageResult zero =
      run_stage2_classifier_train(train, data.loader(), cfg, 7);
  const StageResult zero2 =
      run_stage2_classifier_train(train, data.loader(), cfg, 7);
  CHECK(checkpoints_equal(zero.checkpoint, zero2.checkpoint));
  CHECK_FALSE(checkpoints_equal(zero.checkpoint, a.checkpoint));

  const DatasetManifest single = memory_manifest(1, 4);
  CHECK_THROWS_AS(run_stage2_classifier_train(single, data.loader(), cfg, 7),
                  std::invalid_argument);
}

TEST_CASE("stage 3 freezes the classifier and drops the discriminator") {
  MemoryData data{16, {}};
  const DatasetManifest hq = memory_manifest(2, 3);
  RunConfig cfg = tiny_config();

  const StageResult prior =
      run_stage1_prior_pretrain(hq, data.loader(), cfg, 1);
  const StageResult cls =
      run_stage2_classifier_train(memory_manifest(2, 3, 500), data.loader(),
                                  cfg, 2);
  const DatasetManifest pairs = build_pairs(hq, cfg, data, 3);

  const StageResult r3 = run_stage3_restorer_finetune(
      pairs, data.loader(), prior.checkpoint, cls.checkpoint, cfg, 4);
  CHECK(r3.frozen_groups_intact);
  CHECK(r3.checkpoint.stage == "restorer_finetune");
  CHECK(r3.checkpoint.find("enc.conv0.w") != nullptr);
  CHECK(r3.checkpoint.find("map.fc0.w") != nullptr);
  CHECK(r3.checkpoint.find("dec.const") != nullptr);
  for (const auto& p : r3.checkpoint.params)
    CHECK(p.name.rfind("disc.", 0) != 0);
  CHECK(r3.step_losses.size() == 2);

  // Determinism of the full stage.
  const StageResult again = run_stage3_restorer_finetune(
      pairs, data.loader(), prior.checkpoint, cls.checkpoint, cfg, 4);
  CHECK(checkpoints_equal(r3.checkpoint, again.checkpoint));

  // Stage-1 checkpoints load into stage 3 (schema compatibility) but a
  // mismatched architecture is rejected.
  RunConfig other = tiny_config();
  other.encoder.latent_dim = 12;
  CHECK_THROWS_AS(
      run_stage3_restorer_finetune(pairs, data.loader(), prior.checkpoint,
                                   cls.checkpoint, other, 4),
      std::runtime_error);
}

TEST_CASE("stage 4 freezes the restorer and fine-tunes the classifier") {
  MemoryData data{16, {}};
  const DatasetManifest hq = memory_manifest(2, 3);
  RunConfig cfg = tiny_config();

  const StageResult prior =
      run_stage1_prior_pretrain(hq, data.loader(), cfg, 1);
  const StageResult cls = run_stage2_classifier_train(
      memory_manifest(2, 3, 500), data.loader(), cfg, 2);
  const DatasetManifest pairs = build_pairs(hq, cfg, data, 3);
  const StageResult r3 = run_stage3_restorer_finetune(
      pairs, data.loader(), prior.checkpoint, cls.checkpoint, cfg, 4);

  const StageResult r4 = run_stage4_classifier_finetune(
      pairs, data.loader(), r3.checkpoint, cls.checkpoint, cfg, 5);
  CHECK(r4.frozen_groups_intact);
  CHECK(r4.checkpoint.stage == "classifier_finetune_on_restored");
  CHECK(r4.checkpoint.find("cls.logits.w") != nullptr);
  CHECK_FALSE(checkpoints_equal(r4.checkpoint, cls.checkpoint));

  // Zero epochs: classifier checkpoint unchanged up to the stage tag.
  RunConfig zero_cfg = tiny_config();
  zero_cfg.training.stage4_epochs = 0;
  const StageResult r4z = run_stage4_classifier_finetune(
      pairs, data.loader(), r3.checkpoint, cls.checkpoint, zero_cfg, 5);
  REQUIRE(r4z.checkpoint.params.size() == cls.checkpoint.params.size());
  for (std::size_t i = 0; i < cls.checkpoint.params.size(); ++i)
    CHECK(r4z.checkpoint.params[i].values == cls.checkpoint.params[i].values);
}
