#include "iris/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

namespace iris {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& section,
                const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key()))
      throw std::invalid_argument("unknown config key: " + section + "." +
                                  it.key());
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_range(const json& obj, const char* key, double& lo, double& hi) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != 2)
    throw std::invalid_argument(std::string("config key '") + key +
                                "' must be a [lo, hi] pair");
  lo = v[0].get<double>();
  hi = v[1].get<double>();
}

KernelKind parse_kind(const std::string& s) {
  if (s == "iso") return KernelKind::iso;
  if (s == "aniso") return KernelKind::aniso;
  throw std::invalid_argument("unknown kernel kind: " + s);
}

const char* kind_name(KernelKind k) {
  return k == KernelKind::iso ? "iso" : "aniso";
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  if (!root.is_object())
    throw std::invalid_argument("config root must be an object");
  check_keys(root, "config",
             {"data", "degradation", "encoder", "restorer", "classifier",
              "losses", "training", "metrics"});

  RunConfig cfg;

  if (root.contains("data")) {
    const auto& d = root["data"];
    check_keys(d, "data",
               {"classes", "images_per_class", "image_size", "train_fraction",
                "per_class", "class_seed_base"});
    read(d, "classes", cfg.data.classes);
    read(d, "images_per_class", cfg.data.images_per_class);
    read(d, "image_size", cfg.data.image_size);
    read(d, "train_fraction", cfg.data.train_fraction);
    read(d, "per_class", cfg.data.per_class);
    read(d, "class_seed_base", cfg.data.class_seed_base);
  }

  if (root.contains("degradation")) {
    const auto& d = root["degradation"];
    check_keys(d, "degradation",
               {"kernel_kinds", "kind_probs", "kernel_size", "iso_sigma",
                "aniso_sigma", "noise_sigma", "scale"});
    if (d.contains("kernel_kinds")) {
      cfg.degradation.kernel_kinds.clear();
      for (const auto& k : d["kernel_kinds"])
        cfg.degradation.kernel_kinds.push_back(parse_kind(k.get<std::string>()));
    }
    if (d.contains("kind_probs"))
      cfg.degradation.kind_probs = d["kind_probs"].get<std::vector<double>>();
    read(d, "kernel_size", cfg.degradation.kernel_size);
    read_range(d, "iso_sigma", cfg.degradation.iso_sigma_lo,
               cfg.degradation.iso_sigma_hi);
    read_range(d, "aniso_sigma", cfg.degradation.aniso_sigma_lo,
               cfg.degradation.aniso_sigma_hi);
    read_range(d, "noise_sigma", cfg.degradation.noise_sigma_lo,
               cfg.degradation.noise_sigma_hi);
    read(d, "scale", cfg.degradation.scale_s);
    cfg.degradation.validate();
  }

  if (root.contains("encoder")) {
    const auto& d = root["encoder"];
    check_keys(d, "encoder",
               {"input_size", "channels", "latent_dim", "attention_index",
                "attention_heads", "attention_dim_per_head"});
    read(d, "input_size", cfg.encoder.input_size);
    if (d.contains("channels"))
      cfg.encoder.channels = d["channels"].get<std::vector<int>>();
    read(d, "latent_dim", cfg.encoder.latent_dim);
    read(d, "attention_index", cfg.encoder.attention_index);
    read(d, "attention_heads", cfg.encoder.attention_heads);
    read(d, "attention_dim_per_head", cfg.encoder.attention_dim_per_head);
  }

  if (root.contains("restorer")) {
    const auto& d = root["restorer"];
    check_keys(d, "restorer",
               {"mapping_depth", "decoder_channels", "demodulate",
                "disc_channels"});
    read(d, "mapping_depth", cfg.restorer.mapping_depth);
    if (d.contains("decoder_channels"))
      cfg.restorer.decoder_channels =
          d["decoder_channels"].get<std::vector<int>>();
    read(d, "demodulate", cfg.restorer.demodulate);
    if (d.contains("disc_channels"))
      cfg.restorer.disc_channels = d["disc_channels"].get<std::vector<int>>();
  }

  if (root.contains("classifier")) {
    const auto& d = root["classifier"];
    check_keys(d, "classifier",
               {"num_classes", "embedding_dim", "stage_blocks",
                "stage_channels", "dropout", "input_size"});
    read(d, "num_classes", cfg.classifier.num_classes);
    read(d, "embedding_dim", cfg.classifier.embedding_dim);
    if (d.contains("stage_blocks"))
      cfg.classifier.stage_blocks = d["stage_blocks"].get<std::vector<int>>();
    if (d.contains("stage_channels"))
      cfg.classifier.stage_channels =
          d["stage_channels"].get<std::vector<int>>();
    read(d, "dropout", cfg.classifier.dropout_rate);
    read(d, "input_size", cfg.classifier.input_size);
  }

  if (root.contains("losses")) {
    const auto& d = root["losses"];
    check_keys(d, "losses", {"w_adv", "w_l1", "w_id", "r1_gamma"});
    read(d, "w_adv", cfg.losses.w_adv);
    read(d, "w_l1", cfg.losses.w_l1);
    read(d, "w_id", cfg.losses.w_id);
    read(d, "r1_gamma", cfg.losses.r1_gamma);
  }

  if (root.contains("training")) {
    const auto& d = root["training"];
    check_keys(d, "training",
               {"batch_size", "encoder_lr", "stage1_steps", "stage1_batch",
                "stage1_lr", "stage3_steps", "classifier_epochs",
                "classifier_batch", "classifier_lr", "stage4_epochs", "beta1",
                "beta2", "epsilon"});
    read(d, "batch_size", cfg.training.batch_size);
    read(d, "encoder_lr", cfg.training.encoder_lr);
    read(d, "stage1_steps", cfg.training.stage1_steps);
    read(d, "stage1_batch", cfg.training.stage1_batch);
    read(d, "stage1_lr", cfg.training.stage1_lr);
    read(d, "stage3_steps", cfg.training.stage3_steps);
    read(d, "classifier_epochs", cfg.training.classifier_epochs);
    read(d, "classifier_batch", cfg.training.classifier_batch);
    read(d, "classifier_lr", cfg.training.classifier_lr);
    read(d, "stage4_epochs", cfg.training.stage4_epochs);
    read(d, "beta1", cfg.training.beta1);
    read(d, "beta2", cfg.training.beta2);
    read(d, "epsilon", cfg.training.epsilon);
  }

  if (root.contains("metrics")) {
    const auto& d = root["metrics"];
    check_keys(d, "metrics", {"psnr_cap"});
    read(d, "psnr_cap", cfg.metrics.psnr_cap);
  }

  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string RunConfig::resolved_json() const {
  json root;
  root["data"] = {{"classes", data.classes},
                  {"images_per_class", data.images_per_class},
                  {"image_size", data.image_size},
                  {"train_fraction", data.train_fraction},
                  {"per_class", data.per_class},
                  {"class_seed_base", data.class_seed_base}};

  json kinds = json::array();
  for (KernelKind k : degradation.kernel_kinds) kinds.push_back(kind_name(k));
  root["degradation"] = {
      {"kernel_kinds", kinds},
      {"kind_probs", degradation.kind_probs},
      {"kernel_size", degradation.kernel_size},
      {"iso_sigma", {degradation.iso_sigma_lo, degradation.iso_sigma_hi}},
      {"aniso_sigma",
       {degradation.aniso_sigma_lo, degradation.aniso_sigma_hi}},
      {"noise_sigma",
       {degradation.noise_sigma_lo, degradation.noise_sigma_hi}},
      {"scale", degradation.scale_s}};

  root["encoder"] = {
      {"input_size", encoder.input_size},
      {"channels", encoder.resolved_channels()},
      {"latent_dim", encoder.latent_dim},
      {"attention_index", encoder.resolved_attention_index()},
      {"attention_heads", encoder.attention_heads},
      {"attention_dim_per_head", encoder.attention_dim_per_head}};

  root["restorer"] = {{"mapping_depth", restorer.mapping_depth},
                      {"decoder_channels", restorer_config()
                                               .resolved_decoder_channels()},
                      {"demodulate", restorer.demodulate},
                      {"disc_channels",
                       discriminator_config().resolved_channels()}};

  root["classifier"] = {{"num_classes", classifier.num_classes},
                        {"embedding_dim", classifier.embedding_dim},
                        {"stage_blocks", classifier.stage_blocks},
                        {"stage_channels", classifier.stage_channels},
                        {"dropout", classifier.dropout_rate},
                        {"input_size", classifier.input_size}};

  root["losses"] = {{"w_adv", losses.w_adv},
                    {"w_l1", losses.w_l1},
                    {"w_id", losses.w_id},
                    {"r1_gamma", losses.r1_gamma}};

  root["training"] = {{"batch_size", training.batch_size},
                      {"encoder_lr", training.encoder_lr},
                      {"stage1_steps", training.stage1_steps},
                      {"stage1_batch", training.stage1_batch},
                      {"stage1_lr", training.stage1_lr},
                      {"stage3_steps", training.stage3_steps},
                      {"classifier_epochs", training.classifier_epochs},
                      {"classifier_batch", training.classifier_batch},
                      {"classifier_lr", training.classifier_lr},
                      {"stage4_epochs", training.stage4_epochs},
                      {"beta1", training.beta1},
                      {"beta2", training.beta2},
                      {"epsilon", training.epsilon}};

  root["metrics"] = {{"psnr_cap", metrics.psnr_cap}};

  return root.dump(2) + "\n";
}

RestorerConfig RunConfig::restorer_config() const {
  RestorerConfig rc;
  rc.encoder = encoder;
  rc.mapping_depth = restorer.mapping_depth;
  rc.decoder_channels = restorer.decoder_channels;
  rc.demodulate = restorer.demodulate;
  return rc;
}

DiscriminatorConfig RunConfig::discriminator_config() const {
  DiscriminatorConfig dc;
  dc.input_size = encoder.input_size;
  dc.channels = restorer.disc_channels;
  return dc;
}

ClassifierConfig RunConfig::classifier_config(int num_classes_fallback) const {
  ClassifierConfig cc = classifier;
  if (cc.num_classes < 1) cc.num_classes = num_classes_fallback;
  return cc;
}

}  // namespace iris
