#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>

#include "iris/data.hpp"
#include "iris/rng.hpp"

using namespace iris;

namespace {

DatasetManifest synthetic_manifest(int classes, int per_class,
                                   std::uint64_t seed_base = 0) {
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

// Loader for "synth:<class_seed>:<instance_seed>" records.
ImageLoader synth_loader(int size) {
  return [size](const SampleRecord& rec) {
    const auto a = rec.path.find(':');
    const auto b = rec.path.find(':', a + 1);
    const std::uint64_t cs = std::stoull(rec.path.substr(a + 1, b - a - 1));
    const std::uint64_t is = std::stoull(rec.path.substr(b + 1));
    return synth_iris(cs, is, size, size);
  };
}

double mean_abs_diff(const Image& a, const Image& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i)
    acc += std::abs(a.pixels()[i] - b.pixels()[i]);
  return acc / a.pixels().size();
}

}  // namespace

TEST_CASE("synth_iris is deterministic and in range") {
  const Image a = synth_iris(5, 3, 32, 32);
  const Image b = synth_iris(5, 3, 32, 32);
  REQUIRE(a.pixels().size() == b.pixels().size());
  for (std::size_t i = 0; i < a.pixels().size(); ++i)
    CHECK(a.pixels()[i] == b.pixels()[i]);
  for (double v : a.pixels()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(synth_iris(0, 0, 8, 8), std::invalid_argument);
}

TEST_CASE("within-class images are closer than cross-class images") {
  Rng rng(17);
  double within = 0.0, across = 0.0;
  const int draws = 20;
  for (int i = 0; i < draws; ++i) {
    const std::uint64_t c1 = rng.next_u64(), c2 = rng.next_u64();
    const std::uint64_t i1 = rng.next_u64(), i2 = rng.next_u64();
    within += mean_abs_diff(synth_iris(c1, i1, 32, 32),
                            synth_iris(c1, i2, 32, 32));
    across += mean_abs_diff(synth_iris(c1, i1, 32, 32),
                            synth_iris(c2, i1, 32, 32));
  }
  CHECK(within / draws < across / draws);
}

TEST_CASE("split: per-class 80/20 on 39x20 gives 624/156") {
  const DatasetManifest m = synthetic_manifest(39, 20);
  SplitSpec spec{0.8, 7, true};
  auto [train, test] = split(m, spec);
  CHECK(train.records.size() == 624);
  CHECK(test.records.size() == 156);

  // Disjoint and exhaustive by record identity (paths are unique).
  std::map<std::string, int> seen;
  for (const auto& r : train.records) seen[r.path]++;
  for (const auto& r : test.records) seen[r.path]++;
  CHECK(seen.size() == m.records.size());
  for (const auto& [path, count] : seen) CHECK(count == 1);
}

TEST_CASE("split: fraction 0.5 on 2-record classes gives 1+1") {
  const DatasetManifest m = synthetic_manifest(5, 2);
  auto [train, test] = split(m, {0.5, 3, true});
  CHECK(train.records.size() == 5);
  CHECK(test.records.size() == 5);
  for (int c = 0; c < 5; ++c) {
    int n_train = 0, n_test = 0;
    for (const auto& r : train.records) n_train += r.class_id == c;
    for (const auto& r : test.records) n_test += r.class_id == c;
    CHECK(n_train == 1);
    CHECK(n_test == 1);
  }
}

TEST_CASE("split determinism and error paths") {
  const DatasetManifest m = synthetic_manifest(4, 6);
  auto [a_train, a_test] = split(m, {0.8, 11, true});
  auto [b_train, b_test] = split(m, {0.8, 11, true});
  REQUIRE(a_train.records.size() == b_train.records.size());
  for (std::size_t i = 0; i < a_train.records.size(); ++i)
    CHECK(a_train.records[i].path == b_train.records[i].path);

  const DatasetManifest single = synthetic_manifest(3, 1);
  CHECK_THROWS_AS(split(single, {0.5, 0, true}), std::invalid_argument);
  CHECK_THROWS_AS(split(m, {0.0, 0, true}), std::invalid_argument);
}

TEST_CASE("make_pairs registers one lq per hq with valid pair ids") {
  const DatasetManifest hq = synthetic_manifest(4, 5);
  DegradationParams params;
  params.kernel_size = 7;
  params.scale_s = 2;

  std::map<std::string, Image> stored;
  ImageSink sink = [&](const SampleRecord& src, const Image& lq, int index) {
    const std::string key = "lq:" + std::to_string(index);
    stored[key] = lq;
    return key;
  };
  const DatasetManifest pairs =
      make_pairs(hq, params, 99, synth_loader(32), sink);

  CHECK(pairs.records.size() == 2 * hq.records.size());
  std::map<int, int> pair_counts;
  for (const auto& r : pairs.records) {
    if (r.role != SampleRole::lq) continue;
    REQUIRE(r.pair_id >= 0);
    REQUIRE(r.pair_id < static_cast<int>(hq.records.size()));
    CHECK(pairs.records[r.pair_id].role == SampleRole::hq);
    CHECK(pairs.records[r.pair_id].class_id == r.class_id);
    pair_counts[r.pair_id]++;
  }
  CHECK(pair_counts.size() == hq.records.size());  // bijection
  for (const auto& [id, count] : pair_counts) CHECK(count == 1);

  // LQ images come back at HQ resolution.
  for (const auto& [key, img] : stored) {
    CHECK(img.height() == 32);
    CHECK(img.width() == 32);
  }
}

TEST_CASE("make_pairs with an identity degradation returns the inputs") {
  const DatasetManifest hq = synthetic_manifest(2, 3);
  DegradationParams params;
  params.kernel_size = 3;
  params.iso_sigma_lo = params.iso_sigma_hi = 1e-6;
  params.aniso_sigma_lo = params.aniso_sigma_hi = 1e-6;
  params.noise_sigma_lo = params.noise_sigma_hi = 0.0;
  params.scale_s = 1;

  auto load = synth_loader(24);
  std::map<int, Image> lq_images;
  ImageSink sink = [&](const SampleRecord&, const Image& lq, int index) {
    lq_images[index] = lq;
    return "lq:" + std::to_string(index);
  };
  make_pairs(hq, params, 1, load, sink);
  for (int i = 0; i < static_cast<int>(hq.records.size()); ++i) {
    const Image src = load(hq.records[i]);
    const Image& got = lq_images[i];
    for (std::size_t p = 0; p < src.pixels().size(); ++p)
      CHECK(got.pixels()[p] == doctest::Approx(src.pixels()[p]).epsilon(1e-12));
  }
}

TEST_CASE("make_pairs is deterministic in the seed") {
  const DatasetManifest hq = synthetic_manifest(3, 4);
  DegradationParams params;
  params.kernel_size = 7;

  auto run = [&](std::uint64_t seed) {
    std::vector<Image> images;
    ImageSink sink = [&](const SampleRecord&, const Image& lq, int) {
      images.push_back(lq);
      return "x";
    };
    make_pairs(hq, params, seed, synth_loader(24), sink);
    return images;
  };
  const auto a = run(5), b = run(5), c = run(6);
  REQUIRE(a.size() == b.size());
  bool all_equal_ab = true, all_equal_ac = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t p = 0; p < a[i].pixels().size(); ++p) {
      all_equal_ab &= a[i].pixels()[p] == b[i].pixels()[p];
      all_equal_ac &= a[i].pixels()[p] == c[i].pixels()[p];
    }
  CHECK(all_equal_ab);
  CHECK_FALSE(all_equal_ac);
}

TEST_CASE("manifest round-trips losslessly and rejects bad headers") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "iris_manifest_test";
  fs::create_directories(dir);
  const std::string path = (dir / "m.tsv").string();

  DatasetManifest m = synthetic_manifest(3, 2);
  m.records[1].role = SampleRole::lq;
  m.records[1].pair_id = 0;
  write_manifest(m, path);
  const DatasetManifest back = read_manifest(path);
  REQUIRE(back.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].path == m.records[i].path);
    CHECK(back.records[i].class_id == m.records[i].class_id);
    CHECK(back.records[i].role == m.records[i].role);
    CHECK(back.records[i].pair_id == m.records[i].pair_id);
  }
  CHECK(back.num_classes == m.num_classes);

  const std::string bad = (dir / "bad.tsv").string();
  {
    std::FILE* f = std::fopen(bad.c_str(), "w");
    std::fputs("iris-manifest v9\n0\thq\t-\tx.ppm\n", f);
    std::fclose(f);
  }
  CHECK_THROWS(read_manifest(bad));
  fs::remove_all(dir);
}
