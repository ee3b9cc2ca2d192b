// SPDX-License-Identifier: Apache-2.0
#include "retr/nn/checkpoint.hpp"

#include <cstring>
#include <stdexcept>
#include <vector>

#include "retr/util/binary.hpp"

namespace retr::nn {

namespace {
constexpr char kMagic[8] = {'R', 'E', 'T', 'R', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void read_header(BinaryReader& r) {
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error(r.path + ": not a checkpoint file (bad magic)");
  }
  uint32_t version = r.u32();
  if (version != kVersion) {
    throw std::runtime_error(r.path + ": unsupported checkpoint version " +
                             std::to_string(version));
  }
}
}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& config) {
  BinaryWriter w(path);
  w.bytes(kMagic, 8);
  w.u32(kVersion);
  w.str(config);
  w.u64(store.size());
  for (const auto& e : store.entries()) {
    w.str(e.name);
    w.u32(static_cast<uint32_t>(e.value.rank()));
    for (int d : e.value.shape()) w.u32(static_cast<uint32_t>(d));
    w.f64s(e.value.data());
  }
  w.finish(path);
}

std::string read_checkpoint_config(const std::string& path) {
  BinaryReader r(path);
  read_header(r);
  r.section = "config";
  return r.str();
}

void load_checkpoint(const std::string& path, ParamStore& store) {
  BinaryReader r(path);
  read_header(r);
  r.section = "config";
  r.str();
  r.section = "records";
  uint64_t count = r.u64();
  if (count != store.size()) {
    throw std::runtime_error(path + ": checkpoint has " + std::to_string(count) +
                             " parameters, model expects " + std::to_string(store.size()));
  }
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    r.section = "record '" + name + "'";
    uint32_t rank = r.u32();
    if (rank > 8) throw std::runtime_error(path + ": implausible rank in '" + name + "'");
    ad::Shape shape(rank);
    int64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(r.u32());
      n *= shape[d];
    }
    int id = store.find(name);
    if (id < 0) throw std::runtime_error(path + ": unknown parameter '" + name + "'");
    if (store.value(id).shape() != shape) {
      throw std::runtime_error(path + ": shape mismatch for '" + name + "': checkpoint " +
                               ad::shape_str(shape) + " vs model " +
                               ad::shape_str(store.value(id).shape()));
    }
    store.set_value(id, ad::Tensor(shape, r.f64s(static_cast<size_t>(n))));
  }
}

}  // namespace retr::nn
