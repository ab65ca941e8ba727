#include "iris/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace iris {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_f32(std::ostream& out, const std::vector<float>& v) {
  for (float f : v) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

struct Reader {
  std::ifstream in;
  std::string path;

  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw std::runtime_error("cannot open checkpoint: " + p);
  }

  void fail() const {
    throw std::runtime_error("corrupt checkpoint (truncated): " + path);
  }

  std::uint32_t u32() {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) fail();
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return lo | (hi << 32);
  }

  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 28)) fail();
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (static_cast<std::uint32_t>(in.gcount()) != n) fail();
    return s;
  }

  std::vector<float> f32(std::size_t n) {
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t bits = u32();
      std::memcpy(&v[i], &bits, 4);
    }
    return v;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);

  put_u32(out, Checkpoint::kMagic);
  put_u32(out, ckpt.format_version);
  put_string(out, ckpt.stage);
  put_u64(out, ckpt.seed);
  put_string(out, ckpt.config_snapshot);

  put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& a : ckpt.params) {
    put_string(out, a.name);
    put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
    std::size_t count = 1;
    for (int d : a.shape) {
      put_u32(out, static_cast<std::uint32_t>(d));
      count *= static_cast<std::size_t>(d);
    }
    if (count != a.values.size())
      throw std::logic_error("checkpoint array size does not match shape: " +
                             a.name);
    put_f32(out, a.values);
  }

  out.put(ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    put_u64(out, ckpt.optimizer_step);
    put_u32(out, static_cast<std::uint32_t>(ckpt.optimizer.size()));
    for (const auto& s : ckpt.optimizer) {
      put_string(out, s.name);
      put_u32(out, static_cast<std::uint32_t>(s.m.size()));
      put_f32(out, s.m);
      put_f32(out, s.v);
    }
  }
  if (!out) throw std::runtime_error("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  if (r.u32() != Checkpoint::kMagic)
    throw std::runtime_error("not a checkpoint file: " + path);
  Checkpoint ckpt;
  ckpt.format_version = r.u32();
  if (ckpt.format_version != Checkpoint::kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(ckpt.format_version) + ": " + path);
  ckpt.stage = r.str();
  ckpt.seed = r.u64();
  ckpt.config_snapshot = r.str();

  const std::uint32_t n = r.u32();
  ckpt.params.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Checkpoint::Array a;
    a.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) r.fail();
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(static_cast<int>(r.u32()));
      count *= static_cast<std::size_t>(a.shape.back());
    }
    a.values = r.f32(count);
    ckpt.params.push_back(std::move(a));
  }

  const int has_opt = r.in.get();
  if (has_opt == EOF) r.fail();
  if (has_opt) {
    ckpt.has_optimizer = true;
    ckpt.optimizer_step = r.u64();
    const std::uint32_t m = r.u32();
    for (std::uint32_t i = 0; i < m; ++i) {
      Checkpoint::OptimizerSlot s;
      s.name = r.str();
      const std::uint32_t len = r.u32();
      s.m = r.f32(len);
      s.v = r.f32(len);
      ckpt.optimizer.push_back(std::move(s));
    }
  }
  return ckpt;
}

Checkpoint checkpoint_from_store(const ParamStore<float>& store,
                                 const std::string& stage, std::uint64_t seed,
                                 const std::string& config_snapshot) {
  Checkpoint ckpt;
  ckpt.stage = stage;
  ckpt.seed = seed;
  ckpt.config_snapshot = config_snapshot;
  for (const auto& e : store.entries()) {
    Checkpoint::Array a;
    a.name = e.name;
    a.shape = e.tensor.shape();
    a.values.assign(e.tensor.data(), e.tensor.data() + e.tensor.size());
    ckpt.params.push_back(std::move(a));
  }
  return ckpt;
}

void load_into_store(const Checkpoint& ckpt, ParamStore<float>& store,
                     const std::string& prefix) {
  std::size_t loaded = 0;
  for (const auto& a : ckpt.params) {
    if (a.name.rfind(prefix, 0) != 0) continue;
    if (!store.has(a.name))
      throw std::runtime_error("checkpoint parameter not in model: " + a.name);
    Tensor<float>& t = store.get(a.name);
    if (t.shape() != a.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + a.name +
                               ": " + shape_str(a.shape) + " vs model " +
                               shape_str(t.shape()));
    for (long i = 0; i < t.size(); ++i) t.values()[i] = a.values[i];
    ++loaded;
  }
  if (loaded == 0)
    throw std::runtime_error("checkpoint has no parameters with prefix '" +
                             prefix + "'");
}

bool store_matches_checkpoint(const Checkpoint& ckpt,
                              const ParamStore<float>& store,
                              const std::string& prefix) {
  for (const auto& e : store.entries()) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    const Checkpoint::Array* a = ckpt.find(e.name);
    if (!a || a->shape != e.tensor.shape()) return false;
    if (std::memcmp(a->values.data(), e.tensor.data(),
                    a->values.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

}  // namespace iris
