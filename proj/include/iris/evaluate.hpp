#ifndef IRIS_EVALUATE_HPP_
#define IRIS_EVALUATE_HPP_

#include <cstdint>
#include <optional>
#include <string>

#include "iris/checkpoint.hpp"
#include "iris/config.hpp"
#include "iris/data.hpp"
#include "iris/metrics.hpp"

namespace iris {

// Degrade -> resample -> restore -> classify over an HQ test manifest.
// When no restorer checkpoint is given, restoration is the identity (the
// no-restoration baseline). The report carries both the restored-image
// recognition rate and the degraded-baseline rate from the same classifier.
MetricReport evaluate(const DatasetManifest& test_manifest,
                      const ImageLoader& load,
                      const Checkpoint* restorer_ckpt,
                      const Checkpoint& classifier_ckpt, const RunConfig& cfg,
                      std::uint64_t seed);

}  // namespace iris

#endif  // IRIS_EVALUATE_HPP_
