#ifndef IRIS_CHECKPOINT_HPP_
#define IRIS_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "iris/blocks.hpp"

namespace iris {

// Versioned, portable serialization of named parameter arrays plus training
// metadata. Values are little-endian 32-bit floats; names are
// length-prefixed. Unknown versions are rejected on load.
struct Checkpoint {
  static constexpr std::uint32_t kMagic = 0x49524B50;  // "IRKP"
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t format_version = kVersion;
  std::string stage;
  std::uint64_t seed = 0;
  std::string config_snapshot;

  struct Array {
    std::string name;
    std::vector<int> shape;
    std::vector<float> values;
  };
  std::vector<Array> params;

  struct OptimizerSlot {
    std::string name;
    std::vector<float> m;
    std::vector<float> v;
  };
  bool has_optimizer = false;
  std::uint64_t optimizer_step = 0;
  std::vector<OptimizerSlot> optimizer;

  const Array* find(const std::string& name) const {
    for (const auto& a : params)
      if (a.name == name) return &a;
    return nullptr;
  }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot all parameters (values only) from a store.
Checkpoint checkpoint_from_store(const ParamStore<float>& store,
                                 const std::string& stage, std::uint64_t seed,
                                 const std::string& config_snapshot);

// Copies arrays with a given prefix into an existing store; every selected
// array must already exist there with a matching shape.
void load_into_store(const Checkpoint& ckpt, ParamStore<float>& store,
                     const std::string& prefix);

// True when all parameters with the prefix are bitwise equal between the
// checkpoint and the store.
bool store_matches_checkpoint(const Checkpoint& ckpt,
                              const ParamStore<float>& store,
                              const std::string& prefix);

}  // namespace iris

#endif  // IRIS_CHECKPOINT_HPP_
