#include "iris/evaluate.hpp"

#include <memory>

#include "iris/bridge.hpp"
#include "iris/networks.hpp"
#include "iris/rng.hpp"

namespace iris {

MetricReport evaluate(const DatasetManifest& test_manifest,
                      const ImageLoader& load,
                      const Checkpoint* restorer_ckpt,
                      const Checkpoint& classifier_ckpt, const RunConfig& cfg,
                      std::uint64_t seed) {
  NoGradGuard ng;

  // Classifier from its checkpointed configuration.
  RunConfig ccfg_src =
      RunConfig::from_json_text(classifier_ckpt.config_snapshot);
  const ClassifierConfig cc = ccfg_src.classifier_config(1);
  cc.validate();
  ParamStore<float> cls;
  Rng dummy_rng(0);
  classifier_init(cc, cls, "cls", dummy_rng);
  load_into_store(classifier_ckpt, cls, "cls.");

  // Optional restorer.
  std::unique_ptr<ParamStore<float>> rest;
  RestorerConfig rc;
  if (restorer_ckpt) {
    RunConfig rcfg_src =
        RunConfig::from_json_text(restorer_ckpt->config_snapshot);
    rc = rcfg_src.restorer_config();
    rc.validate();
    rest = std::make_unique<ParamStore<float>>();
    restorer_init(rc, *rest, dummy_rng);
    load_into_store(*restorer_ckpt, *rest, "enc.");
    load_into_store(*restorer_ckpt, *rest, "map.");
    load_into_store(*restorer_ckpt, *rest, "dec.");
  }

  const int n = static_cast<int>(test_manifest.records.size());
  if (n == 0) throw std::invalid_argument("evaluate: empty test manifest");

  auto classify = [&](const Image& img, Eigen::VectorXd* embedding) {
    Image sized = img;
    if (sized.height() != cc.input_size || sized.width() != cc.input_size)
      sized = resample(sized, cc.input_size, cc.input_size,
                       ResampleMethod::bilinear);
    auto out = classifier_forward(cc, batch_to_tensor<float>({sized}), cls,
                                  "cls", /*training=*/false);
    if (embedding) {
      embedding->resize(cc.embedding_dim);
      for (int i = 0; i < cc.embedding_dim; ++i)
        (*embedding)[i] = static_cast<double>(out.embedding.at({0, i}));
    }
    int best = 0;
    float best_v = out.logits.at({0, 0});
    for (int k = 1; k < cc.num_classes; ++k) {
      const float v = out.logits.at({0, k});
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    return best;
  };

  EmbeddingSet emb_restored{Eigen::MatrixXd(n, cc.embedding_dim), "restored"};
  EmbeddingSet emb_real{Eigen::MatrixXd(n, cc.embedding_dim), "real"};

  double psnr_sum = 0.0;
  std::vector<int> truth, pred_restored, pred_degraded;
  for (int i = 0; i < n; ++i) {
    const SampleRecord& rec = test_manifest.records[i];
    const Image hq = load(rec).to_unit();

    const DegradationSpec spec = sample_degradation(
        cfg.degradation, Rng::mix(seed, static_cast<std::uint64_t>(i)));
    const Image degraded = degrade(hq, spec);
    const Image lq = resample(degraded, hq.height(), hq.width(),
                              ResampleMethod::bilinear);

    Image restored = lq;
    if (rest) {
      Image in = lq;
      const int side = rc.encoder.input_size;
      if (in.height() != side || in.width() != side)
        in = resample(in, side, side, ResampleMethod::bilinear);
      Tensor<float> out = restore(rc, batch_to_tensor<float>({in}), *rest);
      restored = tensor_to_image(out, 0);
      if (restored.height() != hq.height() || restored.width() != hq.width())
        restored = resample(restored, hq.height(), hq.width(),
                            ResampleMethod::bilinear);
    }

    psnr_sum += psnr(restored, hq, cfg.metrics.psnr_cap);

    Eigen::VectorXd e_restored, e_real;
    pred_restored.push_back(classify(restored, &e_restored));
    pred_degraded.push_back(classify(lq, nullptr));
    classify(hq, &e_real);
    emb_restored.vectors.row(i) = e_restored.transpose();
    emb_real.vectors.row(i) = e_real.transpose();
    truth.push_back(rec.class_id);
  }

  MetricReport report;
  report.n_samples = n;
  report.psnr_mean = psnr_sum / n;
  report.fid = n >= 2 ? fid(emb_restored, emb_real) : 0.0;
  report.recognition_rate = recognition_rate(pred_restored, truth);
  report.recognition_rate_degraded = recognition_rate(pred_degraded, truth);
  return report;
}

}  // namespace iris
