#ifndef IRIS_TRAINING_HPP_
#define IRIS_TRAINING_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "iris/checkpoint.hpp"
#include "iris/config.hpp"
#include "iris/data.hpp"

namespace iris {

enum class Stage {
  prior_pretrain,
  classifier_train,
  restorer_finetune,
  classifier_finetune_on_restored
};

const char* stage_name(Stage s);

// Resolved schedule for one stage: what runs, for how long, at which
// learning rates, and which parameter groups stay frozen.
struct StagePlan {
  Stage stage;
  int steps = 0;   // step-driven stages (1 and 3)
  int epochs = 0;  // epoch-driven stages (2 and 4)
  int batch_size = 0;
  std::vector<std::pair<std::string, double>> group_lrs;
  std::vector<std::string> frozen_groups;

  double lr(const std::string& group) const;
};

StagePlan make_stage1_plan(const RunConfig& cfg);
StagePlan make_stage2_plan(const RunConfig& cfg);
// Learning-rate groups are derived from the encoder rate by exact
// multiplication: decoder 10x, discriminator 100x.
StagePlan make_stage3_plan(const RunConfig& cfg);
StagePlan make_stage4_plan(const RunConfig& cfg);

// Line-oriented run log: step, stage, losses, lr; tab-separated. Any
// non-finite loss aborts the run with a diagnostic.
class TrainLog {
 public:
  TrainLog() = default;
  explicit TrainLog(const std::string& path);
  void log_step(long step, Stage stage, double total, double adv, double l1,
                double id, double lr);

 private:
  std::string path_;
};

struct StageResult {
  Checkpoint checkpoint;
  std::vector<double> step_losses;     // total loss per step
  std::vector<double> epoch_accuracy;  // classifier stages
  double initial_d_loss = 0.0;         // stage 1: discriminator loss probes
  double final_d_loss = 0.0;
  // Stages with frozen groups compare them bytewise against their source
  // checkpoint after the run.
  bool frozen_groups_intact = true;
};

// Stage 1: trains mapping + style decoder from random latents (zero skip
// inputs) against the discriminator with logistic losses.
StageResult run_stage1_prior_pretrain(const DatasetManifest& hq,
                                      const ImageLoader& load,
                                      const RunConfig& cfg, std::uint64_t seed,
                                      TrainLog* log = nullptr);

// Stage 2: softmax cross-entropy training of the classifier.
StageResult run_stage2_classifier_train(const DatasetManifest& train,
                                        const ImageLoader& load,
                                        const RunConfig& cfg,
                                        std::uint64_t seed,
                                        TrainLog* log = nullptr);

// Stage 3: embeds the pretrained prior, adds a fresh encoder, and fine-tunes
// generator + discriminator on LQ/HQ pairs with the composite loss; the
// classifier acts as a frozen feature extractor. The discriminator is not
// part of the emitted checkpoint.
StageResult run_stage3_restorer_finetune(const DatasetManifest& pairs,
                                         const ImageLoader& load,
                                         const Checkpoint& prior_ckpt,
                                         const Checkpoint& classifier_ckpt,
                                         const RunConfig& cfg,
                                         std::uint64_t seed,
                                         TrainLog* log = nullptr);

// Stage 4: restores each LQ image with the frozen restorer and fine-tunes
// the classifier on the restored outputs.
StageResult run_stage4_classifier_finetune(const DatasetManifest& pairs,
                                           const ImageLoader& load,
                                           const Checkpoint& restorer_ckpt,
                                           const Checkpoint& classifier_ckpt,
                                           const RunConfig& cfg,
                                           std::uint64_t seed,
                                           TrainLog* log = nullptr);

}  // namespace iris

#endif  // IRIS_TRAINING_HPP_
