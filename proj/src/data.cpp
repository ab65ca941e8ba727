#include "iris/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "iris/rng.hpp"

namespace iris {

namespace {
constexpr double kPi = 3.14159265358979323846;

const char* role_name(SampleRole r) {
  return r == SampleRole::hq ? "hq" : "lq";
}

SampleRole parse_role(const std::string& s) {
  if (s == "hq") return SampleRole::hq;
  if (s == "lq") return SampleRole::lq;
  throw std::runtime_error("manifest: unknown role '" + s + "'");
}
}  // namespace

void DatasetManifest::finalize() {
  int max_class = -1;
  for (const auto& r : records) {
    if (r.class_id < 0)
      throw std::invalid_argument("manifest: negative class_id");
    max_class = std::max(max_class, r.class_id);
  }
  num_classes = max_class + 1;
  std::vector<int> counts(num_classes, 0);
  for (const auto& r : records) ++counts[r.class_id];
  for (int c = 0; c < num_classes; ++c)
    if (counts[c] == 0)
      throw std::invalid_argument("manifest: class ids not contiguous");
  for (const auto& r : records) {
    if (r.role == SampleRole::lq) {
      if (r.pair_id < 0 || r.pair_id >= static_cast<int>(records.size()) ||
          records[r.pair_id].role != SampleRole::hq)
        throw std::invalid_argument("manifest: lq pair_id does not resolve");
    }
  }
}

Image synth_iris(std::uint64_t class_seed, std::uint64_t instance_seed,
                 int height, int width) {
  if (height < 16 || width < 16)
    throw std::invalid_argument("synth_iris size must be at least 16x16");

  Rng crng(Rng::mix(class_seed, Rng::hash("synth.class")));
  Rng irng(Rng::mix(Rng::mix(class_seed, instance_seed),
                    Rng::hash("synth.instance")));

  constexpr int kComponents = 4;
  double rad_freq[kComponents], rad_phase[kComponents], rad_amp[kComponents];
  double ang_freq[kComponents], ang_phase[kComponents], ang_amp[kComponents];
  double rad_total = 0.0, ang_total = 0.0;
  for (int i = 0; i < kComponents; ++i) {
    rad_freq[i] = crng.uniform(3.0, 9.0);
    rad_phase[i] = crng.uniform(0.0, 2.0 * kPi);
    rad_amp[i] = crng.uniform(0.3, 1.0);
    rad_total += rad_amp[i];
    ang_freq[i] = 3.0 + static_cast<double>(crng.uniform_int(14));  // integer
    ang_phase[i] = crng.uniform(0.0, 2.0 * kPi);
    ang_amp[i] = crng.uniform(0.3, 1.0);
    ang_total += ang_amp[i];
  }
  const double rotation = irng.uniform(-0.08, 0.08);
  const double brightness = irng.uniform(-0.04, 0.04);

  const double r_pupil = 0.16, r_iris = 0.82;
  const double half_h = height / 2.0, half_w = width / 2.0;
  const double scale = std::min(half_h, half_w);

  Image img(height, width, PixelDomain::unit);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dy = (y + 0.5 - half_h) / scale;
      const double dx = (x + 0.5 - half_w) / scale;
      const double r = std::sqrt(dx * dx + dy * dy);
      double v;
      if (r < r_pupil) {
        v = 0.06;
      } else if (r < r_iris) {
        const double t = (r - r_pupil) / (r_iris - r_pupil);
        const double theta = std::atan2(dy, dx) + rotation;
        double radial = 0.0, angular = 0.0;
        for (int i = 0; i < kComponents; ++i) {
          radial += rad_amp[i] * std::sin(2.0 * kPi * rad_freq[i] * t +
                                          rad_phase[i]);
          angular += ang_amp[i] * std::sin(ang_freq[i] * theta + ang_phase[i]);
        }
        v = 0.52 + brightness + 0.17 * radial / rad_total +
            0.17 * angular / ang_total;
      } else {
        v = 0.85 + brightness;
      }
      if (v < 0.0) v = 0.0;
      if (v > 1.0) v = 1.0;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
    }
  }
  return img;
}

std::pair<DatasetManifest, DatasetManifest> split(
    const DatasetManifest& manifest, const SplitSpec& spec) {
  if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
    throw std::invalid_argument("train_fraction must be in (0,1)");
  for (const auto& r : manifest.records)
    if (r.role != SampleRole::hq)
      throw std::invalid_argument("split requires an hq-only manifest");

  DatasetManifest train, test;
  Rng base(Rng::mix(spec.seed, Rng::hash("data.split")));

  auto take = [&](std::vector<int>& idx, Rng& rng) {
    rng.shuffle(idx);
    const int n_train =
        static_cast<int>(std::floor(spec.train_fraction * idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& r = manifest.records[idx[i]];
      (static_cast<int>(i) < n_train ? train : test).records.push_back(r);
    }
  };

  if (spec.per_class) {
    std::map<int, std::vector<int>> by_class;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
      by_class[manifest.records[i].class_id].push_back(static_cast<int>(i));
    for (auto& [cls, idx] : by_class) {
      if (idx.size() < 2)
        throw std::invalid_argument(
            "per-class split needs >= 2 records per class");
      Rng rng = base.fork(static_cast<std::uint64_t>(cls));
      take(idx, rng);
    }
  } else {
    std::vector<int> idx(manifest.records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    take(idx, base);
  }
  train.finalize();
  test.finalize();
  return {std::move(train), std::move(test)};
}

DatasetManifest make_pairs(const DatasetManifest& hq,
                           const DegradationParams& params, std::uint64_t seed,
                           const ImageLoader& load, const ImageSink& sink) {
  for (const auto& r : hq.records)
    if (r.role != SampleRole::hq)
      throw std::invalid_argument("make_pairs requires an hq-only manifest");
  params.validate();

  DatasetManifest out;
  out.records = hq.records;
  const int n = static_cast<int>(hq.records.size());
  for (int i = 0; i < n; ++i) {
    const SampleRecord& src = hq.records[i];
    const Image img = load(src).to_unit();
    const DegradationSpec spec =
        sample_degradation(params, Rng::mix(seed, static_cast<std::uint64_t>(i)));
    const Image degraded = degrade(img, spec);
    const Image lq = resample(degraded, img.height(), img.width(),
                              ResampleMethod::bilinear);
    SampleRecord rec;
    rec.path = sink(src, lq, i);
    rec.class_id = src.class_id;
    rec.role = SampleRole::lq;
    rec.pair_id = i;
    out.records.push_back(rec);
  }
  out.finalize();
  return out;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << "iris-manifest v" << manifest.format_version << "\n";
  for (const auto& r : manifest.records) {
    out << r.class_id << '\t' << role_name(r.role) << '\t';
    if (r.pair_id < 0)
      out << '-';
    else
      out << r.pair_id;
    out << '\t' << r.path << "\n";
  }
  if (!out) throw std::runtime_error("short write: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  std::string header;
  if (!std::getline(in, header) || header != "iris-manifest v1")
    throw std::runtime_error("manifest: unsupported header '" + header + "'");

  DatasetManifest m;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cls, role, pair, rest;
    if (!std::getline(ss, cls, '\t') || !std::getline(ss, role, '\t') ||
        !std::getline(ss, pair, '\t') || !std::getline(ss, rest))
      throw std::runtime_error("manifest: malformed line " +
                               std::to_string(lineno));
    SampleRecord r;
    r.class_id = std::stoi(cls);
    r.role = parse_role(role);
    r.pair_id = (pair == "-") ? -1 : std::stoi(pair);
    r.path = rest;
    m.records.push_back(std::move(r));
  }
  m.finalize();
  return m;
}

DatasetManifest scan_directory(const std::string& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root))
    throw std::runtime_error("not a directory: " + root);

  DatasetManifest m;
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());

  for (const auto& dir : class_dirs) {
    int cls;
    try {
      cls = std::stoi(dir.filename().string());
    } catch (...) {
      continue;  // skip non-numeric directories
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      SampleRecord r;
      r.path = f.string();
      r.class_id = cls;
      r.role = SampleRole::hq;
      m.records.push_back(std::move(r));
    }
  }
  m.finalize();
  return m;
}

}  // namespace iris
