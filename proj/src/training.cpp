#include "iris/training.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "iris/adam.hpp"
#include "iris/bridge.hpp"
#include "iris/losses.hpp"
#include "iris/networks.hpp"

namespace iris {

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::prior_pretrain:
      return "prior_pretrain";
    case Stage::classifier_train:
      return "classifier_train";
    case Stage::restorer_finetune:
      return "restorer_finetune";
    case Stage::classifier_finetune_on_restored:
      return "classifier_finetune_on_restored";
  }
  return "?";
}

double StagePlan::lr(const std::string& group) const {
  for (const auto& [name, rate] : group_lrs)
    if (name == group) return rate;
  throw std::invalid_argument("no learning rate for group: " + group);
}

StagePlan make_stage1_plan(const RunConfig& cfg) {
  StagePlan p;
  p.stage = Stage::prior_pretrain;
  p.steps = cfg.training.stage1_steps;
  p.batch_size = cfg.training.stage1_batch;
  p.group_lrs = {{"generator", cfg.training.stage1_lr},
                 {"discriminator", cfg.training.stage1_lr}};
  return p;
}

StagePlan make_stage2_plan(const RunConfig& cfg) {
  StagePlan p;
  p.stage = Stage::classifier_train;
  p.epochs = cfg.training.classifier_epochs;
  p.batch_size = cfg.training.classifier_batch;
  p.group_lrs = {{"classifier", cfg.training.classifier_lr}};
  return p;
}

StagePlan make_stage3_plan(const RunConfig& cfg) {
  StagePlan p;
  p.stage = Stage::restorer_finetune;
  p.steps = cfg.training.stage3_steps;
  p.batch_size = cfg.training.batch_size;
  const double e = cfg.training.encoder_lr;
  p.group_lrs = {{"encoder", e},
                 {"decoder", 10.0 * e},
                 {"discriminator", 100.0 * e}};
  p.frozen_groups = {"classifier"};
  return p;
}

StagePlan make_stage4_plan(const RunConfig& cfg) {
  StagePlan p;
  p.stage = Stage::classifier_finetune_on_restored;
  p.epochs = cfg.training.stage4_epochs;
  p.batch_size = cfg.training.classifier_batch;
  p.group_lrs = {{"classifier", cfg.training.classifier_lr}};
  p.frozen_groups = {"encoder", "decoder"};
  return p;
}

TrainLog::TrainLog(const std::string& path) : path_(path) {
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open log: " + path_);
}

void TrainLog::log_step(long step, Stage stage, double total, double adv,
                        double l1, double id, double lr) {
  if (!std::isfinite(total) || !std::isfinite(adv) || !std::isfinite(l1) ||
      !std::isfinite(id))
    throw std::runtime_error(
        "non-finite loss at step " + std::to_string(step) + " of " +
        stage_name(stage) + " (total=" + std::to_string(total) + ")");
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  out << step << '\t' << stage_name(stage) << '\t' << total << '\t' << adv
      << '\t' << l1 << '\t' << id << '\t' << lr << "\n";
}

namespace {

using T = Tensor<float>;

AdamConfig adam_config(const RunConfig& cfg) {
  return AdamConfig{cfg.training.beta1, cfg.training.beta2,
                    cfg.training.epsilon};
}

std::vector<int> pick_batch(Rng rng, int count, int batch) {
  std::vector<int> idx(batch);
  for (int i = 0; i < batch; ++i)
    idx[i] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(count)));
  return idx;
}

std::vector<Image> load_images(const DatasetManifest& m,
                               const std::vector<int>& idx,
                               const ImageLoader& load) {
  std::vector<Image> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(load(m.records[i]).to_unit());
  return out;
}

// Zero skip maps matching the decoder wiring, deepest first.
std::vector<T> zero_skips(const RestorerConfig& rc, int batch) {
  std::vector<T> skips;
  for (int i = 0; i < rc.num_blocks(); ++i) {
    const auto bc = rc.block_config(i);
    const int side = rc.block_size(i);
    skips.push_back(T({batch, side, side, bc.noise_channels}));
  }
  return skips;
}

T sample_latents(Rng rng, int batch, int dim) {
  T z({batch, dim});
  for (long i = 0; i < z.size(); ++i)
    z.values()[i] = static_cast<float>(rng.normal());
  return z;
}

// Directional finite-difference estimate of the R1 gradient penalty,
// expressed through tape ops so its gradient reaches the discriminator.
T r1_penalty(const DiscriminatorConfig& dc, ParamStore<float>& ps,
             const T& real, const T& d_real, double gamma, Rng rng) {
  constexpr float kProbe = 1e-2f;
  T direction = real.detach();
  double norm2 = 0.0;
  for (long i = 0; i < direction.size(); ++i) {
    const double v = rng.normal();
    direction.values()[i] = static_cast<float>(v);
    norm2 += v * v;
  }
  const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
  for (long i = 0; i < direction.size(); ++i) direction.values()[i] *= inv;
  T shifted = add(real, mul_scalar(direction, kProbe));
  T d_shifted = discriminator_forward(dc, shifted, ps, "disc");
  T diff = mul_scalar(sub(d_shifted, d_real), 1.0f / kProbe);
  const float scale =
      static_cast<float>(0.5 * gamma * direction.size());
  return mul_scalar(mean_all(square(diff)), scale);
}

double probe_discriminator_real_loss(const DiscriminatorConfig& dc,
                                     ParamStore<float>& ps,
                                     const DatasetManifest& data,
                                     const std::vector<int>& idx,
                                     const ImageLoader& load) {
  NoGradGuard ng;
  T real = batch_to_tensor<float>(load_images(data, idx, load));
  T d = discriminator_forward(dc, real, ps, "disc");
  return static_cast<double>(mean_all(softplus(neg(d))).value());
}

}  // namespace

StageResult run_stage1_prior_pretrain(const DatasetManifest& hq,
                                      const ImageLoader& load,
                                      const RunConfig& cfg, std::uint64_t seed,
                                      TrainLog* log) {
  if (hq.records.empty())
    throw std::invalid_argument("stage 1 needs a nonempty manifest");
  const StagePlan plan = make_stage1_plan(cfg);
  const RestorerConfig rc = cfg.restorer_config();
  const DiscriminatorConfig dc = cfg.discriminator_config();
  rc.validate();
  dc.validate();

  Rng master(seed);
  ParamStore<float> ps;
  Rng init_rng = master.fork("stage1.init");
  mapping_init(rc, ps, "map", init_rng);
  decoder_init(rc, ps, "dec", init_rng);
  discriminator_init(dc, ps, "disc", init_rng);

  Adam<float> adam_g(adam_config(cfg));
  std::vector<Tensor<float>*> gen_params = ps.group("map.");
  for (auto* p : ps.group("dec.")) gen_params.push_back(p);
  adam_g.add_group(gen_params, plan.lr("generator"), "generator");
  Adam<float> adam_d(adam_config(cfg));
  adam_d.add_group(ps.group("disc."), plan.lr("discriminator"),
                   "discriminator");

  const int count = static_cast<int>(hq.records.size());
  const int batch = std::min(plan.batch_size, count);

  StageResult result;
  const std::vector<int> probe_idx =
      pick_batch(master.fork("stage1.probe"), count, batch);
  result.initial_d_loss =
      probe_discriminator_real_loss(dc, ps, hq, probe_idx, load);

  for (int step = 0; step < plan.steps; ++step) {
    const auto idx =
        pick_batch(master.fork("stage1.batch").fork(step), count, batch);
    T real = batch_to_tensor<float>(load_images(hq, idx, load));
    T z = sample_latents(master.fork("stage1.z").fork(step), batch,
                         rc.style_dim());
    auto skips = zero_skips(rc, batch);

    T w = mapping_forward(rc, z, ps, "map");
    T fake = decoder_forward(rc, w, skips, ps, "dec");

    // Discriminator update on real vs detached fake.
    ps.zero_grads();
    T d_real = discriminator_forward(dc, real, ps, "disc");
    T d_fake_det = discriminator_forward(dc, fake.detach(), ps, "disc");
    T d_loss = adv_discriminator_loss(d_real, d_fake_det);
    if (cfg.losses.r1_gamma > 0.0)
      d_loss = add(d_loss, r1_penalty(dc, ps, real, d_real, cfg.losses.r1_gamma,
                                      master.fork("stage1.r1").fork(step)));
    d_loss.backward();
    adam_d.step();

    // Generator update.
    ps.zero_grads();
    T d_fake = discriminator_forward(dc, fake, ps, "disc");
    T g_loss = adv_generator_loss(d_fake);
    g_loss.backward();
    adam_g.step();

    const double total = static_cast<double>(g_loss.value());
    result.step_losses.push_back(total);
    if (log)
      log->log_step(step + 1, plan.stage, total, total, 0.0, 0.0,
                    plan.lr("generator"));
  }

  result.final_d_loss =
      probe_discriminator_real_loss(dc, ps, hq, probe_idx, load);
  result.checkpoint = checkpoint_from_store(ps, stage_name(plan.stage), seed,
                                            cfg.resolved_json());
  return result;
}

namespace {

double classifier_accuracy(const ClassifierConfig& cc, ParamStore<float>& ps,
                           const DatasetManifest& data, const ImageLoader& load,
                           const std::function<Image(const Image&)>& transform) {
  NoGradGuard ng;
  int correct = 0, total = 0;
  const int chunk = 32;
  for (std::size_t at = 0; at < data.records.size(); at += chunk) {
    std::vector<Image> images;
    std::vector<int> labels;
    for (std::size_t i = at; i < std::min(at + chunk, data.records.size());
         ++i) {
      Image img = load(data.records[i]).to_unit();
      if (transform) img = transform(img);
      if (img.height() != cc.input_size || img.width() != cc.input_size)
        img = resample(img, cc.input_size, cc.input_size,
                       ResampleMethod::bilinear);
      images.push_back(std::move(img));
      labels.push_back(data.records[i].class_id);
    }
    T batch = batch_to_tensor<float>(images);
    auto out = classifier_forward(cc, batch, ps, "cls", /*training=*/false);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      int best = 0;
      float best_v = out.logits.at({static_cast<int>(i), 0});
      for (int k = 1; k < cc.num_classes; ++k) {
        const float v = out.logits.at({static_cast<int>(i), k});
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      correct += (best == labels[i]) ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / total : 0.0;
}

// Shared epoch-driven cross-entropy loop for stages 2 and 4.
StageResult train_classifier_loop(const ClassifierConfig& cc,
                                  ParamStore<float>& ps,
                                  const DatasetManifest& data,
                                  const ImageLoader& load,
                                  const std::function<Image(const Image&)>& transform,
                                  const StagePlan& plan, const RunConfig& cfg,
                                  std::uint64_t seed, TrainLog* log,
                                  Rng& master) {
  Adam<float> adam(adam_config(cfg));
  adam.add_group(ps.group("cls."), plan.lr("classifier"), "classifier");

  StageResult result;
  const int n = static_cast<int>(data.records.size());
  long step = 0;
  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng erng = master.fork("classifier.epoch").fork(epoch);
    erng.shuffle(order);

    for (int at = 0; at < n; at += plan.batch_size) {
      const int take = std::min(plan.batch_size, n - at);
      if (take < 2) continue;  // batch statistics need two samples
      std::vector<Image> images;
      std::vector<int> labels;
      for (int i = 0; i < take; ++i) {
        const SampleRecord& rec = data.records[order[at + i]];
        Image img = load(rec).to_unit();
        if (transform) img = transform(img);
        if (img.height() != cc.input_size || img.width() != cc.input_size)
          img = resample(img, cc.input_size, cc.input_size,
                         ResampleMethod::bilinear);
        images.push_back(std::move(img));
        labels.push_back(rec.class_id);
      }
      T batch = batch_to_tensor<float>(images);
      ps.zero_grads();
      auto out = classifier_forward(cc, batch, ps, "cls", /*training=*/true,
                                    Rng::mix(seed, static_cast<std::uint64_t>(step)));
      T loss = cross_entropy(out.logits, labels);
      loss.backward();
      adam.step();
      ++step;
      const double total = static_cast<double>(loss.value());
      result.step_losses.push_back(total);
      if (log)
        log->log_step(step, plan.stage, total, 0.0, 0.0, 0.0,
                      plan.lr("classifier"));
    }
    result.epoch_accuracy.push_back(
        classifier_accuracy(cc, ps, data, load, transform));
  }
  return result;
}

}  // namespace

StageResult run_stage2_classifier_train(const DatasetManifest& train,
                                        const ImageLoader& load,
                                        const RunConfig& cfg,
                                        std::uint64_t seed, TrainLog* log) {
  if (train.num_classes < 2)
    throw std::invalid_argument("classifier training needs >= 2 classes");
  const StagePlan plan = make_stage2_plan(cfg);
  const ClassifierConfig cc = cfg.classifier_config(train.num_classes);
  cc.validate();

  Rng master(seed);
  ParamStore<float> ps;
  Rng init_rng = master.fork("stage2.init");
  classifier_init(cc, ps, "cls", init_rng);

  StageResult result = train_classifier_loop(cc, ps, train, load, nullptr,
                                             plan, cfg, seed, log, master);
  result.checkpoint = checkpoint_from_store(ps, stage_name(plan.stage), seed,
                                            cfg.resolved_json());
  return result;
}

StageResult run_stage3_restorer_finetune(const DatasetManifest& pairs,
                                         const ImageLoader& load,
                                         const Checkpoint& prior_ckpt,
                                         const Checkpoint& classifier_ckpt,
                                         const RunConfig& cfg,
                                         std::uint64_t seed, TrainLog* log) {
  const StagePlan plan = make_stage3_plan(cfg);
  const RestorerConfig rc = cfg.restorer_config();
  const DiscriminatorConfig dc = cfg.discriminator_config();
  rc.validate();
  dc.validate();

  // LQ records drive the loop; each resolves to its HQ source.
  std::vector<std::pair<int, int>> pair_idx;  // (lq, hq) record indices
  for (std::size_t i = 0; i < pairs.records.size(); ++i)
    if (pairs.records[i].role == SampleRole::lq)
      pair_idx.push_back({static_cast<int>(i), pairs.records[i].pair_id});
  if (pair_idx.empty())
    throw std::invalid_argument("stage 3 needs LQ/HQ pairs");

  Rng master(seed);
  ParamStore<float> ps;
  Rng init_rng = master.fork("stage3.init");
  encoder_init(rc.encoder, ps, "enc", init_rng);
  mapping_init(rc, ps, "map", init_rng);
  decoder_init(rc, ps, "dec", init_rng);
  discriminator_init(dc, ps, "disc", init_rng);
  load_into_store(prior_ckpt, ps, "map.");
  load_into_store(prior_ckpt, ps, "dec.");
  load_into_store(prior_ckpt, ps, "disc.");

  // Frozen feature extractor.
  RunConfig cls_cfg = RunConfig::from_json_text(classifier_ckpt.config_snapshot);
  const ClassifierConfig cc = cls_cfg.classifier_config(1);
  cc.validate();
  if (cc.input_size != rc.encoder.input_size)
    throw std::invalid_argument(
        "stage 3 needs classifier and restorer at the same input size");
  ParamStore<float> fs;
  Rng dummy_rng(0);
  classifier_init(cc, fs, "cls", dummy_rng);
  load_into_store(classifier_ckpt, fs, "cls.");
  fs.set_requires_grad("cls.", false);

  Adam<float> adam_g(adam_config(cfg));
  adam_g.add_group(ps.group("enc."), plan.lr("encoder"), "encoder");
  std::vector<Tensor<float>*> dec_params = ps.group("map.");
  for (auto* p : ps.group("dec.")) dec_params.push_back(p);
  adam_g.add_group(dec_params, plan.lr("decoder"), "decoder");
  Adam<float> adam_d(adam_config(cfg));
  adam_d.add_group(ps.group("disc."), plan.lr("discriminator"),
                   "discriminator");

  LossWeights weights{cfg.losses.w_adv, cfg.losses.w_l1, cfg.losses.w_id};
  const int count = static_cast<int>(pair_idx.size());
  const int batch = std::min(plan.batch_size, count);
  const int side = rc.encoder.input_size;

  StageResult result;
  for (int step = 0; step < plan.steps; ++step) {
    const auto idx =
        pick_batch(master.fork("stage3.batch").fork(step), count, batch);
    std::vector<Image> lq_images, hq_images;
    for (int i : idx) {
      Image lq = load(pairs.records[pair_idx[i].first]).to_unit();
      Image hq = load(pairs.records[pair_idx[i].second]).to_unit();
      if (lq.height() != side || lq.width() != side)
        lq = resample(lq, side, side, ResampleMethod::bilinear);
      if (hq.height() != side || hq.width() != side)
        hq = resample(hq, side, side, ResampleMethod::bilinear);
      lq_images.push_back(std::move(lq));
      hq_images.push_back(std::move(hq));
    }
    T lq = batch_to_tensor<float>(lq_images);
    T hq = batch_to_tensor<float>(hq_images);

    T fake = restore(rc, lq, ps);

    // Discriminator update.
    ps.zero_grads();
    T d_real = discriminator_forward(dc, hq, ps, "disc");
    T d_fake_det = discriminator_forward(dc, fake.detach(), ps, "disc");
    T d_loss = adv_discriminator_loss(d_real, d_fake_det);
    if (cfg.losses.r1_gamma > 0.0)
      d_loss = add(d_loss, r1_penalty(dc, ps, hq, d_real, cfg.losses.r1_gamma,
                                      master.fork("stage3.r1").fork(step)));
    d_loss.backward();
    adam_d.step();

    // Generator update against the composite objective.
    ps.zero_grads();
    T d_fake = discriminator_forward(dc, fake, ps, "disc");
    T f_real;
    {
      NoGradGuard ng;
      f_real = classifier_forward(cc, hq, fs, "cls", false).embedding;
    }
    T f_fake = classifier_forward(cc, fake, fs, "cls", false).embedding;

    T adv = adv_generator_loss(d_fake);
    T l1 = smooth_l1(fake, hq);
    T id = identity_loss(f_real, f_fake);
    T total = add(add(mul_scalar(adv, static_cast<float>(weights.w_adv)),
                      mul_scalar(l1, static_cast<float>(weights.w_l1))),
                  mul_scalar(id, static_cast<float>(weights.w_id)));
    total.backward();
    adam_g.step();

    const double tv = static_cast<double>(total.value());
    result.step_losses.push_back(tv);
    if (log)
      log->log_step(step + 1, plan.stage, tv,
                    static_cast<double>(adv.value()),
                    static_cast<double>(l1.value()),
                    static_cast<double>(id.value()), plan.lr("encoder"));
  }

  result.frozen_groups_intact =
      store_matches_checkpoint(classifier_ckpt, fs, "cls.");

  // The discriminator is dropped from the emitted checkpoint.
  ParamStore<float> out;
  for (const auto& e : ps.entries()) {
    if (e.name.rfind("disc.", 0) == 0) continue;
    out.create(e.name, e.tensor.shape()).values() = e.tensor.values();
  }
  result.checkpoint = checkpoint_from_store(out, stage_name(plan.stage), seed,
                                            cfg.resolved_json());
  return result;
}

StageResult run_stage4_classifier_finetune(const DatasetManifest& pairs,
                                           const ImageLoader& load,
                                           const Checkpoint& restorer_ckpt,
                                           const Checkpoint& classifier_ckpt,
                                           const RunConfig& cfg,
                                           std::uint64_t seed, TrainLog* log) {
  const StagePlan plan = make_stage4_plan(cfg);

  // Frozen restorer, rebuilt from its own config snapshot.
  RunConfig rcfg_src = RunConfig::from_json_text(restorer_ckpt.config_snapshot);
  const RestorerConfig rc = rcfg_src.restorer_config();
  rc.validate();
  ParamStore<float> rs;
  Rng dummy_rng(0);
  restorer_init(rc, rs, dummy_rng);
  load_into_store(restorer_ckpt, rs, "enc.");
  load_into_store(restorer_ckpt, rs, "map.");
  load_into_store(restorer_ckpt, rs, "dec.");
  rs.set_requires_grad("", false);

  // Trainable classifier.
  RunConfig ccfg_src =
      RunConfig::from_json_text(classifier_ckpt.config_snapshot);
  const ClassifierConfig cc = ccfg_src.classifier_config(1);
  cc.validate();
  ParamStore<float> ps;
  classifier_init(cc, ps, "cls", dummy_rng);
  load_into_store(classifier_ckpt, ps, "cls.");

  // LQ records only; each is restored before it reaches the classifier.
  DatasetManifest lq_only;
  for (const auto& r : pairs.records)
    if (r.role == SampleRole::lq) lq_only.records.push_back(r);
  if (lq_only.records.empty())
    throw std::invalid_argument("stage 4 needs LQ records");
  lq_only.finalize();

  const int side = rc.encoder.input_size;
  auto restore_one = [&](const Image& lq_in) {
    NoGradGuard ng;
    Image lq = lq_in;
    if (lq.height() != side || lq.width() != side)
      lq = resample(lq, side, side, ResampleMethod::bilinear);
    T out = restore(rc, batch_to_tensor<float>({lq}), rs);
    return tensor_to_image(out, 0);
  };

  Rng master(seed);
  StageResult result = train_classifier_loop(cc, ps, lq_only, load,
                                             restore_one, plan, cfg, seed,
                                             log, master);
  result.frozen_groups_intact =
      store_matches_checkpoint(restorer_ckpt, rs, "enc.") &&
      store_matches_checkpoint(restorer_ckpt, rs, "map.") &&
      store_matches_checkpoint(restorer_ckpt, rs, "dec.");
  result.checkpoint = checkpoint_from_store(ps, stage_name(plan.stage), seed,
                                            cfg.resolved_json());
  return result;
}

}  // namespace iris
