#ifndef IRIS_CONFIG_HPP_
#define IRIS_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "iris/degradation.hpp"
#include "iris/networks.hpp"

namespace iris {

// Full run configuration. Every field has a default; unknown keys in a
// config document are rejected with the offending key named.
struct RunConfig {
  struct Data {
    int classes = 10;
    int images_per_class = 20;
    int image_size = 32;
    double train_fraction = 0.8;
    bool per_class = true;
    std::uint64_t class_seed_base = 0;
  } data;

  DegradationParams degradation;

  EncoderConfig encoder;

  struct Restorer {
    int mapping_depth = 4;
    std::vector<int> decoder_channels;  // empty mirrors the encoder
    bool demodulate = true;
    std::vector<int> disc_channels;  // empty -> default schedule
  } restorer;

  ClassifierConfig classifier;  // num_classes 0 = derive from data

  struct Losses {
    double w_adv = 1.0;
    double w_l1 = 1.0;
    double w_id = 1.0;
    double r1_gamma = 0.0;  // 0 disables the penalty
  } losses;

  struct Training {
    int batch_size = 2;         // restorer fine-tune batch
    double encoder_lr = 2e-4;   // decoder = 10x, discriminator = 100x
    int stage1_steps = 500;
    int stage1_batch = 8;
    double stage1_lr = 2e-3;
    int stage3_steps = 500;
    int classifier_epochs = 20;
    int classifier_batch = 16;
    double classifier_lr = 1e-4;
    int stage4_epochs = 5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  } training;

  struct Metrics {
    double psnr_cap = 99.0;
  } metrics;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);

  // Defaults applied, auto values resolved; parses back to an equal config.
  std::string resolved_json() const;

  RestorerConfig restorer_config() const;
  DiscriminatorConfig discriminator_config() const;
  ClassifierConfig classifier_config(int num_classes_fallback) const;
};

}  // namespace iris

#endif  // IRIS_CONFIG_HPP_
