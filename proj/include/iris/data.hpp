#ifndef IRIS_DATA_HPP_
#define IRIS_DATA_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "iris/degradation.hpp"
#include "iris/image.hpp"

namespace iris {

enum class SampleRole { hq, lq };

struct SampleRecord {
  std::string path;  // file path or generator key
  int class_id = 0;
  SampleRole role = SampleRole::hq;
  int pair_id = -1;  // index of the paired hq record; -1 for none
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  int num_classes = 0;
  int format_version = 1;

  // Recomputes num_classes and checks that class ids are contiguous from 0
  // and every class has at least one record.
  void finalize();
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool per_class = true;
};

// Renders a deterministic synthetic iris: dark pupil disc, annular band
// textured by class-keyed radial and angular sinusoids, light surround.
// Instances of one class differ by a small rotation and brightness jitter.
// Unit domain, grayscale replicated over RGB.
Image synth_iris(std::uint64_t class_seed, std::uint64_t instance_seed,
                 int height, int width);

// Per-class (or global) shuffled split at train_fraction. Requires an
// hq-only manifest; train and test are disjoint and cover the input.
std::pair<DatasetManifest, DatasetManifest> split(
    const DatasetManifest& manifest, const SplitSpec& spec);

using ImageLoader = std::function<Image(const SampleRecord&)>;
using ImageSink =
    std::function<std::string(const SampleRecord& hq, const Image& lq, int index)>;

// For each hq record: samples a degradation (seeded by (seed, index)),
// degrades, resamples back to the source size, stores via `sink`, and
// registers an lq record paired to the source. Returns hq + lq records.
DatasetManifest make_pairs(const DatasetManifest& hq,
                           const DegradationParams& params, std::uint64_t seed,
                           const ImageLoader& load, const ImageSink& sink);

// Manifest file: header "iris-manifest v1", then one record per line:
// class_id<TAB>role<TAB>pair_id<TAB>path ('-' when pair_id is absent).
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

// Builds a manifest from a directory tree root/<class_id>/<image>.
DatasetManifest scan_directory(const std::string& root);

}  // namespace iris

#endif  // IRIS_DATA_HPP_
